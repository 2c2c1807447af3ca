"""Reduced-rank regression: eigenproblem, trace statistics, rank fits."""

import numpy as np
import pytest

from coik.errors import InvalidInputError, NormalizationError, RankDeficiencyError
from coik.johansen import (
    fit_rank,
    normalize_beta,
    rrr_solve,
    trace_stat,
    write_rank_profile,
)
from coik.kuramoto import KuramotoSpec, build_system, i1_condition
from coik.linmodel import (
    SufficientStats,
    TimeSeries,
    VECMModel,
    lrt_between,
    ols_pi,
    profile_loglik,
    simulate_vecm,
    suffstats,
)


def kuramoto_series(sizes, couplings, n_obs, seed, perm=None):
    spec = KuramotoSpec(cluster_sizes=sizes, couplings=couplings, permutation=perm, seed=seed)
    system = build_system(spec)
    model = VECMModel(pi=system.pi, mu=np.zeros(system.p), omega=np.eye(system.p))
    return system, simulate_vecm(model, n_obs, seed=seed)


@pytest.fixture(scope="module")
def small_fit():
    system, series = kuramoto_series((3, 2), (1.0, 0.6), 800, seed=21)
    stats = suffstats(series)
    return system, stats, rrr_solve(stats)


class TestRRRSolve:
    def test_eigenvalues_in_unit_interval(self, small_fit):
        _, _, sol = small_fit
        assert np.all(sol.eigenvalues >= 0.0)
        assert np.all(sol.eigenvalues < 1.0)
        assert np.all(np.diff(sol.eigenvalues) <= 0)

    def test_generalized_eigen_residual(self, small_fit):
        _, stats, sol = small_fit
        k = stats.s10 @ np.linalg.solve(stats.s00, stats.s01)
        bound = 1e-8 * np.linalg.norm(stats.s11)
        for i in range(sol.p):
            v = sol.eigenvectors[:, i]
            resid = (sol.eigenvalues[i] * stats.s11 - k) @ v
            assert np.linalg.norm(resid) <= bound

    def test_s11_normalization(self, small_fit):
        _, stats, sol = small_fit
        gram = sol.eigenvectors.T @ stats.s11 @ sol.eigenvectors
        np.testing.assert_allclose(gram, np.eye(sol.p), atol=1e-10)

    def test_null_eigenvalues_small(self):
        model = VECMModel(pi=np.zeros((2, 2)), mu=np.zeros(2), omega=np.eye(2))
        series = simulate_vecm(model, 5000, seed=31)
        sol = rrr_solve(suffstats(series))
        assert np.all(sol.eigenvalues < 0.01)

    def test_stationary_eigenvalues_large(self):
        # Full-rank stationary dynamics keep every canonical correlation away from 0.
        model = VECMModel(pi=-0.5 * np.eye(2), mu=np.zeros(2), omega=np.eye(2))
        series = simulate_vecm(model, 5000, seed=32)
        sol = rrr_solve(suffstats(series))
        assert sol.eigenvalues[-1] > 0.05

    def test_permutation_invariance(self):
        _, series = kuramoto_series((3, 2), (1.0, 0.6), 600, seed=33)
        perm = [3, 0, 4, 1, 2]
        scrambled = TimeSeries(y0=series.y0[perm], path=series.path[perm, :])
        a = rrr_solve(suffstats(series)).eigenvalues
        b = rrr_solve(suffstats(scrambled)).eigenvalues
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_singular_raises(self):
        st = SufficientStats(
            s00=np.eye(2), s01=np.zeros((2, 2)), s10=np.zeros((2, 2)),
            s11=np.array([[1.0, 1.0], [1.0, 1.0]]), n_obs=10,
        )
        with pytest.raises(RankDeficiencyError):
            rrr_solve(st)

    def test_sign_convention(self, small_fit):
        _, _, sol = small_fit
        for j in range(sol.p):
            col = sol.eigenvectors[:, j]
            assert col[np.argmax(np.abs(col))] > 0


class TestTraceStat:
    def test_full_rank_zero(self, small_fit):
        _, _, sol = small_fit
        assert trace_stat(sol, sol.p, "standard") == 0.0
        assert trace_stat(sol, sol.p, "paper-literal") == 0.0

    def test_monotone_nonincreasing(self, small_fit):
        _, _, sol = small_fit
        for variant in ("standard", "paper-literal"):
            values = [trace_stat(sol, r, variant) for r in range(sol.p + 1)]
            assert all(a >= b >= 0.0 for a, b in zip(values, values[1:]))

    def test_variants_agree_to_first_order(self):
        # Taylor check: -N log(1-x) ~ N x when every eigenvalue is tiny.
        model = VECMModel(pi=np.zeros((2, 2)), mu=np.zeros(2), omega=np.eye(2))
        sol = rrr_solve(suffstats(simulate_vecm(model, 5000, seed=41)))
        assert np.all(sol.eigenvalues < 0.01)
        n = sol.stats.n_obs
        for r in range(sol.p):
            standard = trace_stat(sol, r, "standard")
            literal = n * trace_stat(sol, r, "paper-literal")
            assert standard == pytest.approx(literal, rel=0.01)

    def test_bad_rank_and_variant(self, small_fit):
        _, _, sol = small_fit
        with pytest.raises(InvalidInputError):
            trace_stat(sol, sol.p + 1)
        with pytest.raises(InvalidInputError):
            trace_stat(sol, 0, "nonsense")


class TestFitRank:
    def test_rank_zero(self, small_fit):
        _, stats, sol = small_fit
        fit = fit_rank(stats, 0, sol)
        np.testing.assert_array_equal(fit.pi, np.zeros((5, 5)))
        np.testing.assert_array_equal(fit.omega, stats.s00)

    def test_full_rank_equals_ols(self, small_fit):
        _, stats, sol = small_fit
        fit = fit_rank(stats, stats.p, sol)
        target = ols_pi(stats)
        assert np.linalg.norm(fit.pi - target) <= 1e-8 * max(1.0, np.linalg.norm(target))

    def test_numerical_rank_bound(self, small_fit):
        _, stats, sol = small_fit
        for r in range(stats.p + 1):
            fit = fit_rank(stats, r, sol)
            sv = np.linalg.svd(fit.pi, compute_uv=False)
            assert np.sum(sv > stats.p * max(sv[0], 1e-300) * 1e-12) <= r

    def test_loglik_nondecreasing_in_rank(self, small_fit):
        _, stats, sol = small_fit
        values = [fit_rank(stats, r, sol).loglik for r in range(stats.p + 1)]
        assert all(b >= a - 1e-8 for a, b in zip(values, values[1:]))

    def test_loglik_consistent(self, small_fit):
        _, stats, sol = small_fit
        fit = fit_rank(stats, 3, sol)
        assert fit.loglik == pytest.approx(profile_loglik(stats, fit.pi), rel=1e-8)

    def test_i1_radius_reportable(self, small_fit):
        _, stats, sol = small_fit
        fit = fit_rank(stats, 3, sol)
        radius, _ = i1_condition((fit.alpha, fit.beta))
        assert np.isfinite(radius)

    def test_trace_stat_is_lrt_vs_ols(self, small_fit):
        # The trace statistic equals the likelihood ratio of the rank fit
        # against the unrestricted estimate; strong internal consistency.
        _, stats, sol = small_fit
        full = ols_pi(stats)
        for r in range(stats.p):
            fit = fit_rank(stats, r, sol)
            direct = lrt_between(stats, fit.pi, full)
            assert trace_stat(sol, r) == pytest.approx(direct, rel=1e-6, abs=1e-6)


class TestNormalizeBeta:
    def test_fixed_point(self):
        beta = np.vstack([np.eye(2), np.array([[0.4, -1.2]])])
        np.testing.assert_allclose(normalize_beta(beta), beta, atol=1e-12)

    def test_scalar_rescale(self):
        lower = np.array([[0.4, -1.2]])
        beta = np.vstack([2 * np.eye(2), lower])
        expected = np.vstack([np.eye(2), lower / 2])
        np.testing.assert_allclose(normalize_beta(beta), expected, atol=1e-12)

    def test_column_space_preserved(self):
        rng = np.random.default_rng(51)
        beta = rng.standard_normal((6, 3))
        star = normalize_beta(beta)
        proj_a = beta @ np.linalg.pinv(beta)
        proj_b = star @ np.linalg.pinv(star)
        assert np.linalg.norm(proj_a - proj_b) < 1e-10

    def test_singular_top_block(self):
        beta = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(NormalizationError):
            normalize_beta(beta)

    def test_empty(self):
        out = normalize_beta(np.zeros((4, 0)))
        assert out.shape == (4, 0)


class TestRankProfileExport:
    def test_csv_structure(self, small_fit, tmp_path):
        _, _, sol = small_fit
        target = tmp_path / "profile.csv"
        write_rank_profile(sol, target)
        lines = target.read_text().splitlines()
        assert lines[0] == "r,lambda,trace_standard,trace_literal"
        assert len(lines) == sol.p + 2
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == ""
        assert float(first[2]) == pytest.approx(trace_stat(sol, 0, "standard"))
