"""Reduced-rank regression for the error-correction model.

Solves the generalized eigenvalue problem behind the trace test, computes
trace statistics in both scalings, and assembles rank-restricted coupling
estimates with their loadings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NormalizationError, RankDeficiencyError
from .linmodel import SufficientStats, _check_condition, omega_given_pi, profile_loglik

VARIANTS = ("standard", "paper-literal")


@dataclass(frozen=True, eq=False)
class RRRSolution:
    """Squared canonical correlations and s11-orthonormal directions.

    eigenvalues are sorted descending in [0, 1); eigenvector columns v
    satisfy v' s11 v = identity.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    stats: SufficientStats

    @property
    def p(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True, eq=False)
class JohansenEstimate:
    """Rank-restricted fit: loadings, directions, coupling, covariance."""

    rank: int
    alpha: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    omega: np.ndarray
    loglik: float


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _sorted_descending(w: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    # Exact ties (structured inputs only): order tied columns lexicographically.
    j = 0
    while j < len(w) - 1:
        k = j
        while k + 1 < len(w) and w[k + 1] == w[j]:
            k += 1
        if k > j:
            cols = sorted(range(j, k + 1), key=lambda c: tuple(v[:, c]))
            v[:, j : k + 1] = v[:, cols]
        j = k + 1
    return w, v


def _reduced_problem(
    s00: np.ndarray, s01: np.ndarray, s11: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky reduction of the generalized eigenproblem to symmetric form.

    Returns (m, l11) where m = l11^-1 s10 s00^-1 s01 l11^-T and l11 is the
    lower Cholesky factor of s11. Built from triangular solves only.
    """
    l00 = np.linalg.cholesky(s00)
    l11 = np.linalg.cholesky(s11)
    half = sla.solve_triangular(l00, s01, lower=True)          # l00^-1 s01
    k = half.T @ half                                          # s10 s00^-1 s01
    t = sla.solve_triangular(l11, k, lower=True)
    m = sla.solve_triangular(l11, t.T, lower=True).T
    return (m + m.T) / 2.0, l11


def rrr_eigenvalues(s00: np.ndarray, s01: np.ndarray, s11: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues only; the bootstrap fast path."""
    m, _ = _reduced_problem(s00, s01, s11)
    return np.linalg.eigvalsh(m)


def rrr_solve(stats: SufficientStats) -> RRRSolution:
    """Solve the generalized eigenvalue problem of the rank test.

    The problem is reduced to symmetric form through the Cholesky factor of
    s11, which guarantees real eigenvalues in [0, 1). Fails with
    RankDeficiencyError when s00 or s11 is singular or ill-conditioned.
    """
    _check_condition(stats.s00, "s00")
    _check_condition(stats.s11, "s11")
    m, l11 = _reduced_problem(stats.s00, stats.s01, stats.s11)
    w, u = np.linalg.eigh(m)
    if w[-1] > 1.0 + 1e-8:
        raise RankDeficiencyError(
            f"leading squared canonical correlation {w[-1]:.6f} exceeds 1"
        )
    w = np.clip(w, 0.0, np.nextafter(1.0, 0.0))
    w, u = _sorted_descending(w[::-1].copy(), u[:, ::-1].copy())
    vectors = sla.solve_triangular(l11, u, lower=True, trans="T")
    return RRRSolution(eigenvalues=w, eigenvectors=_fix_signs(vectors), stats=stats)


def trace_stat(sol: RRRSolution, rank: int, variant: str = "standard") -> float:
    """Trace statistic of the rank-<=r hypothesis against the unrestricted model.

    The `standard` variant is -N * sum log(1 - eigenvalue) over the trailing
    eigenvalues; `paper-literal` is their plain sum without the sample-size
    scaling.
    """
    if not 0 <= rank <= sol.p:
        raise InvalidInputError(f"rank must be in [0, {sol.p}], got {rank}")
    if variant not in VARIANTS:
        raise InvalidInputError(f"variant must be one of {VARIANTS}, got {variant!r}")
    tail = sol.eigenvalues[rank:]
    if tail.size == 0:
        return 0.0
    if variant == "paper-literal":
        return float(np.sum(tail))
    return float(-sol.stats.n_obs * np.sum(np.log1p(-tail)))


def fit_rank(stats: SufficientStats, rank: int, sol: RRRSolution | None = None) -> JohansenEstimate:
    """Rank-restricted coupling estimate from the leading eigenvectors.

    beta is the first `rank` eigenvectors, alpha follows by least squares,
    and the full-rank case reproduces the unrestricted OLS estimate.
    """
    if sol is None:
        sol = rrr_solve(stats)
    if not 0 <= rank <= sol.p:
        raise InvalidInputError(f"rank must be in [0, {sol.p}], got {rank}")
    beta = sol.eigenvectors[:, :rank]
    # v' s11 v = identity makes (beta' s11 beta) the identity up to round-off,
    # but the general formula is kept for robustness.
    gram = beta.T @ stats.s11 @ beta
    alpha = np.linalg.solve(gram.T, (stats.s01 @ beta).T).T if rank else np.zeros((stats.p, 0))
    pi = alpha @ beta.T
    omega = omega_given_pi(stats, pi)
    return JohansenEstimate(
        rank=rank,
        alpha=alpha,
        beta=beta,
        pi=pi,
        omega=omega,
        loglik=profile_loglik(stats, pi),
    )


def normalize_beta(beta: np.ndarray) -> np.ndarray:
    """Rescale cointegration directions so the top square block is the identity.

    Raises NormalizationError when the top block is singular; the column
    space is preserved exactly.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 2 or beta.shape[0] < beta.shape[1]:
        raise InvalidInputError("beta must be p x r with p >= r")
    r = beta.shape[1]
    if r == 0:
        return beta.copy()
    top = beta[:r, :]
    if np.linalg.cond(top) > 1e12:
        raise NormalizationError(
            "top block of beta is singular; the identity normalization is not valid"
        )
    return np.linalg.solve(top.T, beta.T).T


def write_rank_profile(sol: RRRSolution, path) -> None:
    """Per-rank eigenvalues and trace statistics as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "lambda", "trace_standard", "trace_literal"])
        for r in range(sol.p + 1):
            lam = "%.17g" % sol.eigenvalues[r - 1] if r >= 1 else ""
            writer.writerow(
                [
                    str(r),
                    lam,
                    "%.17g" % trace_stat(sol, r, "standard"),
                    "%.17g" % trace_stat(sol, r, "paper-literal"),
                ]
            )
