"""Symmetry- and rank-restricted coupling estimators and comparison metrics.

The two-step estimators project onto the symmetric matrices (Hermitian
part) and then truncate to the leading singular directions, in either
order of provenance: from the unrestricted OLS estimate or from the
rank-restricted regression estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError, IterationLimitError, UndefinedMeasureError
from .johansen import JohansenEstimate, _fix_signs
from .linmodel import SufficientStats, ols_pi, omega_given_pi, profile_loglik

_RANK_TOL = 1e-12

LABELS = ("ols", "johansen", "proj", "sym")


@dataclass(frozen=True, eq=False)
class PiEstimate:
    """A labeled coupling estimate with its implied covariance and likelihood."""

    label: str
    pi: np.ndarray
    rank: int
    omega: np.ndarray
    loglik: float


def effective_rank(m: np.ndarray) -> int:
    """Number of singular values above p * largest * 1e-12."""
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > m.shape[0] * s[0] * _RANK_TOL))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """(m + m') / 2, the Frobenius-nearest symmetric matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError("hermitian_part needs a square matrix")
    return (m + m.T) / 2.0


def _truncate_symmetric(m: np.ndarray, rank: int) -> np.ndarray:
    """Keep the `rank` largest-magnitude eigenpairs of a symmetric matrix.

    Exactly symmetry-preserving and half the cost of a general SVD; the
    singular values of a symmetric matrix are the magnitudes of its
    eigenvalues.
    """
    w, v = np.linalg.eigh(m)
    order = np.argsort(-np.abs(w), kind="stable")
    keep = order[:rank]
    out = (v[:, keep] * w[keep]) @ v[:, keep].T
    return (out + out.T) / 2.0


def svd_truncate(m: np.ndarray, rank: int) -> np.ndarray:
    """Best Frobenius approximation of rank <= `rank`.

    Symmetric inputs take an eigendecomposition path so the output stays
    exactly symmetric; rank 0 returns the zero matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError("svd_truncate needs a square matrix")
    if not 0 <= rank <= m.shape[0]:
        raise InvalidInputError(f"rank must be in [0, {m.shape[0]}], got {rank}")
    if rank == 0:
        return np.zeros_like(m)
    if rank == m.shape[0]:
        return m.copy()
    if np.array_equal(m, m.T):
        return _truncate_symmetric(m, rank)
    u, s, vt = np.linalg.svd(m)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def estimate_ols(stats: SufficientStats) -> PiEstimate:
    """The unrestricted least-squares estimate wrapped with its measures."""
    pi = ols_pi(stats)
    return PiEstimate(
        label="ols",
        pi=pi,
        rank=effective_rank(pi),
        omega=omega_given_pi(stats, pi),
        loglik=profile_loglik(stats, pi),
    )


def estimate_johansen(stats: SufficientStats, fit: JohansenEstimate) -> PiEstimate:
    """The rank-restricted regression estimate wrapped with its measures."""
    return PiEstimate(
        label="johansen",
        pi=fit.pi,
        rank=effective_rank(fit.pi),
        omega=fit.omega,
        loglik=fit.loglik,
    )


def estimate_sym(stats: SufficientStats, rank: int) -> PiEstimate:
    """Symmetric low-rank estimate: truncate the Hermitian part of the OLS fit."""
    pi = svd_truncate(hermitian_part(ols_pi(stats)), rank)
    return PiEstimate(
        label="sym",
        pi=pi,
        rank=effective_rank(pi),
        omega=omega_given_pi(stats, pi),
        loglik=profile_loglik(stats, pi),
    )


def estimate_proj(fit: JohansenEstimate, stats: SufficientStats, rank: int) -> PiEstimate:
    """Symmetrized regression estimate: truncate the Hermitian part of the rank fit."""
    pi = svd_truncate(hermitian_part(fit.pi), rank)
    return PiEstimate(
        label="proj",
        pi=pi,
        rank=effective_rank(pi),
        omega=omega_given_pi(stats, pi),
        loglik=profile_loglik(stats, pi),
    )


@dataclass(frozen=True, eq=False)
class ProjectAndLiftResult:
    matrix: np.ndarray
    iterations: int
    residual: float


def project_and_lift(
    target: np.ndarray,
    projector: Callable[[np.ndarray], np.ndarray],
    rank: int,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> ProjectAndLiftResult:
    """Alternate subspace projection and rank truncation until stationary.

    Every pass applies `projector` and then the rank-`rank` truncation.
    Convergence is a pass that moves the iterate by less than `tol` in
    Frobenius norm; `iterations` counts the passes that actually moved it.
    With the symmetry projector one productive pass always suffices, since
    a truncation of a symmetric matrix is itself symmetric.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    if max_iter < 1:
        raise InvalidInputError("max_iter must be at least 1")
    current = np.asarray(target, dtype=np.float64)
    residual = np.inf
    for passes in range(1, max_iter + 1):
        lifted = svd_truncate(projector(current), rank)
        residual = float(np.linalg.norm(lifted - current))
        if residual < tol:
            return ProjectAndLiftResult(matrix=lifted, iterations=passes - 1, residual=residual)
        current = lifted
    raise IterationLimitError(
        f"no convergence after {max_iter} passes (last residual {residual:.3e})",
        last_iterate=current,
        residual=residual,
    )


def matrix_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two matrices under the Frobenius inner product.

    The cosine is clamped to [-1, 1] before the arccos; a zero matrix is
    orthogonal to everything including itself, giving pi/2.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InvalidInputError("matrix_angle needs matching shapes")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return float(np.pi / 2.0)
    cosine = float(np.clip(np.tensordot(u, v) / (nu * nv), -1.0, 1.0))
    return float(np.arccos(cosine))


def offblock_std(estimate: np.ndarray, zero_mask: np.ndarray) -> float:
    """Population standard deviation of the entries a true coupling leaves at zero."""
    estimate = np.asarray(estimate, dtype=np.float64)
    zero_mask = np.asarray(zero_mask, dtype=bool)
    if estimate.shape != zero_mask.shape:
        raise InvalidInputError("mask shape must match the estimate")
    if not zero_mask.any():
        raise UndefinedMeasureError("zero mask selects no entries")
    return float(np.std(estimate[zero_mask]))


def sym_factorize(pi_sym: np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray]:
    """Factor a symmetric matrix of rank <= `rank` as beta diag beta'.

    beta holds the `rank` leading-magnitude eigenvectors and the diagonal
    factor their eigenvalues. The reconstruction must agree with the input
    to 1e-10 relative Frobenius error, which fails exactly when the input
    rank exceeds the request.
    """
    pi_sym = np.asarray(pi_sym, dtype=np.float64)
    if pi_sym.ndim != 2 or pi_sym.shape[0] != pi_sym.shape[1]:
        raise InvalidInputError("sym_factorize needs a square matrix")
    if not np.allclose(pi_sym, pi_sym.T, atol=1e-10, rtol=0.0):
        raise InvalidInputError("input is not symmetric within 1e-10")
    if not 0 <= rank <= pi_sym.shape[0]:
        raise InvalidInputError(f"rank must be in [0, {pi_sym.shape[0]}], got {rank}")
    sym = (pi_sym + pi_sym.T) / 2.0
    w, v = np.linalg.eigh(sym)
    order = np.argsort(-np.abs(w), kind="stable")[:rank]
    beta = _fix_signs(v[:, order])
    delta = np.diag(w[order])
    scale = float(np.linalg.norm(sym))
    err = float(np.linalg.norm(beta @ delta @ beta.T - sym))
    if scale > 0 and err > 1e-10 * scale:
        raise InvalidInputError(
            f"numerical rank exceeds {rank}: reconstruction error {err / scale:.3e} relative"
        )
    return beta, delta


def symmetric_delta_stationary(
    stats: SufficientStats, beta: np.ndarray, omega: np.ndarray
) -> tuple[np.ndarray, float]:
    """Closed-form stationary point of the inner factor under symmetry.

    Diagnostic only: direct likelihood maximization over the factor pair is
    not viable, so this merely evaluates the stationary expression at a
    given (beta, omega) and reports how far it is from symmetric.
    """
    beta = np.asarray(beta, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    omega_inv = np.linalg.inv(omega)
    mid = beta.T @ (stats.s10 @ omega_inv + omega_inv @ stats.s01) @ beta
    left = np.linalg.solve(beta.T @ stats.s11 @ beta, mid)
    delta = 0.5 * np.linalg.solve((beta.T @ omega_inv @ beta).T, left.T).T
    asym = float(np.linalg.norm(delta - delta.T))
    return delta, asym


def write_estimator_csv(rows: list[dict], path) -> None:
    """Comparison table: one row per estimator per rank."""
    fields = ["label", "rank", "angle", "offblock_std", "loglik", "lrt_vs_ols"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(
                [
                    row["label"],
                    str(row["rank"]),
                    "%.17g" % row["angle"],
                    "%.17g" % row["offblock_std"],
                    "%.17g" % row["loglik"],
                    "%.17g" % row["lrt_vs_ols"],
                ]
            )
