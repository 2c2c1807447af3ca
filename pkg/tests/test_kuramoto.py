"""Ground-truth builders: blocks, factors, full systems, stationarity radius."""

import numpy as np
import pytest

from coik.errors import InvalidInputError
from coik.kuramoto import (
    KuramotoSpec,
    build_cluster_block,
    build_factors,
    build_system,
    coupling_grid,
    i1_condition,
)


class TestClusterBlock:
    def test_two_cluster_unit_coupling(self):
        np.testing.assert_array_equal(
            build_cluster_block(2, 1.0), np.array([[-0.5, 0.5], [0.5, -0.5]])
        )

    def test_three_cluster_matches_integer_form(self):
        # Coupling 3 on a 3-cluster gives the integer matrix: -2 diagonal, 1 off.
        block = build_cluster_block(3, 3.0)
        np.testing.assert_array_equal(block, np.ones((3, 3)) - 3 * np.eye(3))

    def test_spectrum(self):
        # Eigen-solver oracle: one zero, coupling-magnitude with multiplicity size-1.
        w = np.sort(np.linalg.eigvalsh(build_cluster_block(8, 1.5)))
        np.testing.assert_allclose(w[:-1], -1.5 * np.ones(7), atol=1e-12)
        assert abs(w[-1]) < 1e-12

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            build_cluster_block(1, 1.0)
        with pytest.raises(InvalidInputError):
            build_cluster_block(3, 0.0)


class TestFactors:
    def test_smallest_case(self):
        beta, delta = build_factors(2)
        np.testing.assert_array_equal(beta, np.array([[1.0], [-1.0]]))
        np.testing.assert_array_equal(delta, np.array([[-1.0]]))
        np.testing.assert_array_equal(
            beta @ delta @ beta.T, np.array([[-1.0, 1.0], [1.0, -1.0]])
        )

    def test_three_reconstruction(self):
        beta, delta = build_factors(3)
        np.testing.assert_array_equal(
            beta @ delta @ beta.T, np.ones((3, 3)) - 3 * np.eye(3)
        )

    @pytest.mark.parametrize("size", range(2, 11))
    def test_reconstruction_and_full_rank(self, size):
        beta, delta = build_factors(size)
        expected = np.ones((size, size)) - size * np.eye(size)
        np.testing.assert_array_equal(beta @ delta @ beta.T, expected)
        np.testing.assert_array_equal(delta, delta.T)
        assert abs(np.linalg.det(delta)) > 1e-9


class TestSpec:
    def test_pair_couplings(self):
        spec = KuramotoSpec(cluster_sizes=(4, 1), couplings=(2.0, 0.0))
        assert spec.pair_couplings == (0.5, 0.0)
        assert spec.p == 5

    def test_rejects_mismatched(self):
        with pytest.raises(InvalidInputError):
            KuramotoSpec(cluster_sizes=(2, 2), couplings=(1.0,))

    def test_rejects_coupled_singleton(self):
        with pytest.raises(InvalidInputError):
            KuramotoSpec(cluster_sizes=(1,), couplings=(0.5,))

    def test_rejects_zero_coupling_pair(self):
        with pytest.raises(InvalidInputError):
            KuramotoSpec(cluster_sizes=(2,), couplings=(0.0,))

    def test_rejects_bad_permutation(self):
        with pytest.raises(InvalidInputError):
            KuramotoSpec(cluster_sizes=(2,), couplings=(1.0,), permutation=(0, 0))


class TestCouplingGrid:
    def test_reference_grid_rounds_to_table(self):
        grid = coupling_grid(12)
        printed = [round(c, 2) for c in grid]
        assert printed == [2.0, 1.86, 1.73, 1.59, 1.45, 1.32, 1.18, 1.05, 0.91, 0.77, 0.64, 0.5]


class TestBuildSystem:
    def test_identity_permutation_two_cluster(self):
        spec = KuramotoSpec(cluster_sizes=(2,), couplings=(1.0,), permutation=(0, 1))
        system = build_system(spec)
        np.testing.assert_array_equal(system.pi, np.array([[-0.5, 0.5], [0.5, -0.5]]))
        assert system.true_rank == 1

    def test_reference_dimensions(self):
        spec = KuramotoSpec(
            cluster_sizes=tuple([8] * 12 + [1] * 4),
            couplings=tuple(list(coupling_grid(12)) + [0.0] * 4),
            seed=7,
        )
        with pytest.warns(RuntimeWarning):
            # Coupling 2.00 sits exactly on the unit recursion radius.
            system = build_system(spec)
        assert system.p == 100
        assert system.true_rank == 84

    def test_strict_mode_rejects_boundary(self):
        spec = KuramotoSpec(cluster_sizes=(4,), couplings=(2.0,))
        with pytest.raises(InvalidInputError):
            build_system(spec, strict=True)

    def test_invariants(self):
        spec = KuramotoSpec(
            cluster_sizes=(5, 3, 1), couplings=(1.2, 0.7, 0.0), seed=3
        )
        system = build_system(spec)
        pi = system.pi
        assert np.linalg.norm(pi - pi.T) < 1e-12
        np.testing.assert_allclose(pi.sum(axis=1), np.zeros(9), atol=1e-12)
        sv = np.linalg.svd(pi, compute_uv=False)
        n_nonzero = np.sum(sv > 9 * sv[0] * 1e-12)
        assert n_nonzero == system.true_rank == 9 - 3
        # Nonzero spectrum per cluster: coupling magnitude with multiplicity size-1.
        w = np.sort(np.linalg.eigvalsh(pi))
        np.testing.assert_allclose(w[:4], [-1.2] * 4, atol=1e-10)
        np.testing.assert_allclose(w[4:6], [-0.7] * 2, atol=1e-10)
        np.testing.assert_allclose(w[6:], 0.0, atol=1e-10)

    def test_factorization_matches_pi(self):
        spec = KuramotoSpec(cluster_sizes=(4, 2, 1), couplings=(1.5, 0.8, 0.0), seed=11)
        system = build_system(spec)
        perm_matrix = system.permutation_matrix()
        rebuilt = perm_matrix @ (system.beta @ system.delta @ system.beta.T) @ perm_matrix.T
        assert np.linalg.norm(rebuilt - system.pi) < 1e-10

    def test_scramble_equivariance(self):
        spec = KuramotoSpec(cluster_sizes=(3, 2), couplings=(1.0, 0.5), seed=5)
        scrambled = build_system(spec)
        ordered = build_system(
            KuramotoSpec(cluster_sizes=(3, 2), couplings=(1.0, 0.5),
                         permutation=tuple(range(5)))
        )
        np.testing.assert_array_equal(scrambled.unscrambled_pi(), ordered.pi)

    def test_permutation_deterministic(self):
        spec = KuramotoSpec(cluster_sizes=(4, 4), couplings=(1.0, 1.0), seed=42)
        a = build_system(spec)
        b = build_system(spec)
        np.testing.assert_array_equal(a.permutation, b.permutation)

    def test_assignment_tracks_permutation(self):
        spec = KuramotoSpec(cluster_sizes=(2, 1), couplings=(1.0, 0.0), seed=9)
        system = build_system(spec)
        for i in range(3):
            original = system.permutation[i]
            expected = 1 if original < 2 else 2
            assert system.assignment[i] == expected


class TestI1Condition:
    def test_single_two_cluster_unit(self):
        system = build_system(KuramotoSpec(cluster_sizes=(2,), couplings=(1.0,)))
        radius, ok = i1_condition(system.pi)
        assert radius == pytest.approx(0.0, abs=1e-10)
        assert ok

    def test_boundary_coupling(self):
        with pytest.warns(RuntimeWarning):
            system = build_system(KuramotoSpec(cluster_sizes=(3,), couplings=(2.0,)))
        radius, ok = i1_condition(system.pi)
        assert radius == pytest.approx(1.0, abs=1e-10)
        assert not ok

    def test_zero_matrix(self):
        assert i1_condition(np.zeros((4, 4))) == (0.0, True)

    @pytest.mark.parametrize("coupling", [0.5, 1.0, 1.5, 1.99])
    def test_radius_identity(self, coupling):
        system = build_system(KuramotoSpec(cluster_sizes=(6,), couplings=(coupling,)))
        radius, _ = i1_condition(system.pi)
        assert radius == pytest.approx(abs(1.0 - coupling), abs=1e-10)

    def test_factor_pair_input(self):
        # kappa = 1 two-cluster: beta' alpha = -1, so the radius vanishes.
        beta = np.array([[1.0], [-1.0]])
        alpha = 0.5 * np.array([[-1.0], [1.0]])
        radius, ok = i1_condition((alpha, beta))
        assert radius == pytest.approx(0.0, abs=1e-12)
        assert ok

    def test_rank_zero_factor_pair(self):
        radius, ok = i1_condition((np.zeros((3, 0)), np.zeros((3, 0))))
        assert (radius, ok) == (0.0, True)
