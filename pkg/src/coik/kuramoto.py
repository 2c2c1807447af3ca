"""Ground-truth coupling matrices for clustered linear-Kuramoto systems.

Builds the block coupling matrix of a set of independent, fully coupled
clusters, its sparse factorization, the cluster metadata, and the
scrambling permutation applied before any estimation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KuramotoSpec:
    """Cluster sizes and coupling strengths defining a clustered system.

    ``couplings[i]`` is the magnitude of the nonzero eigenvalue contributed
    by cluster i; the per-pair weight inside the block is couplings[i] /
    cluster_sizes[i]. Singleton clusters must have coupling 0.
    """

    cluster_sizes: tuple[int, ...]
    couplings: tuple[float, ...]
    permutation: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.cluster_sizes)
        couplings = tuple(float(c) for c in self.couplings)
        if len(sizes) != len(couplings):
            raise InvalidInputError("cluster_sizes and couplings must have equal length")
        if not sizes:
            raise InvalidInputError("need at least one cluster")
        for size, coupling in zip(sizes, couplings):
            if size < 1:
                raise InvalidInputError(f"cluster size {size} < 1")
            if size == 1 and coupling != 0.0:
                raise InvalidInputError("singleton clusters must have coupling 0")
            if size >= 2 and coupling <= 0.0:
                raise InvalidInputError("coupled clusters need coupling > 0")
        perm = self.permutation
        if perm is not None:
            perm = tuple(int(i) for i in perm)
            if sorted(perm) != list(range(sum(sizes))):
                raise InvalidInputError("permutation must reorder 0..p-1")
        object.__setattr__(self, "cluster_sizes", sizes)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "permutation", perm)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def p(self) -> int:
        return sum(self.cluster_sizes)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def pair_couplings(self) -> tuple[float, ...]:
        """Per-pair block weights: coupling / size for each cluster."""
        return tuple(c / s for c, s in zip(self.couplings, self.cluster_sizes))


@dataclass(frozen=True, eq=False)
class KuramotoSystem:
    """A realized ground-truth system in scrambled coordinate order.

    ``pi`` is the scrambled coupling matrix; ``beta`` and ``delta`` factor
    the block-ordered matrix, so pi = P (beta delta beta') P' for the stored
    permutation. ``assignment[i]`` is the 1-based cluster id of scrambled
    coordinate i.
    """

    spec: KuramotoSpec
    pi: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    true_rank: int
    assignment: np.ndarray
    permutation: np.ndarray

    @property
    def p(self) -> int:
        return self.pi.shape[0]

    def permutation_matrix(self) -> np.ndarray:
        return np.eye(self.p)[self.permutation]

    def unscrambled_pi(self) -> np.ndarray:
        """The coupling matrix back in block order."""
        inv = np.argsort(self.permutation)
        return self.pi[np.ix_(inv, inv)]

    def zero_mask(self) -> np.ndarray:
        """Boolean mask of entries that are exactly zero in the truth."""
        return self.pi == 0.0

    def as_dict(self) -> dict:
        return {
            "cluster_sizes": list(self.spec.cluster_sizes),
            "couplings": list(self.spec.couplings),
            "assignment": self.assignment.tolist(),
            "permutation": self.permutation.tolist(),
            "true_rank": self.true_rank,
        }


def build_cluster_block(size: int, coupling: float) -> np.ndarray:
    """Coupling block of one fully coupled cluster.

    (coupling/size) * (ones - size * identity): diagonal
    coupling*(1-size)/size, off-diagonal coupling/size. The nonzero
    eigenvalue is -coupling with multiplicity size-1.
    """
    if size < 2:
        raise InvalidInputError(f"cluster block needs size >= 2, got {size}")
    if coupling <= 0.0:
        raise InvalidInputError("cluster block needs coupling > 0")
    return (coupling / size) * (np.ones((size, size)) - size * np.eye(size))


def build_factors(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Sparse factor pair of the unscaled cluster block.

    Returns (beta, delta) with beta = [identity; -ones-row] of shape
    (size, size-1) and delta with -(size-1) on the diagonal and 1 off it;
    beta @ delta @ beta.T reproduces the unscaled block exactly in integer
    arithmetic.
    """
    if size < 2:
        raise InvalidInputError(f"factors need size >= 2, got {size}")
    r = size - 1
    beta = np.vstack([np.eye(r), -np.ones((1, r))])
    delta = np.ones((r, r)) - size * np.eye(r)
    return beta, delta


def _fisher_yates(p: int, seed: int) -> np.ndarray:
    """Seeded in-place shuffle; pinned here so scramblings are reproducible."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    perm = np.arange(p)
    for i in range(p - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def build_system(spec: KuramotoSpec, *, strict: bool = False) -> KuramotoSystem:
    """Assemble the scrambled ground-truth system for a spec.

    Scaled cluster blocks are placed on the diagonal (singletons contribute
    a zero 1x1 block), the permutation is applied to rows and columns, and
    the factor pair plus cluster metadata are recorded. Couplings with unit
    recursion radius (coupling >= 2 in a coupled cluster) trigger a warning,
    or an error in strict mode.
    """
    p = spec.p
    worst = max((abs(1.0 - c) for s, c in zip(spec.cluster_sizes, spec.couplings) if s >= 2), default=0.0)
    if worst >= 1.0:
        msg = (
            f"recursion spectral radius {worst:g} >= 1: within-cluster differences "
            "are not stationary"
        )
        if strict:
            raise InvalidInputError(msg + " (strict mode)")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    rank = p - spec.n_clusters
    ordered = np.zeros((p, p))
    beta = np.zeros((p, rank))
    delta = np.zeros((rank, rank))
    assignment_ordered = np.empty(p, dtype=np.int64)
    row = 0
    col = 0
    for idx, (size, coupling) in enumerate(zip(spec.cluster_sizes, spec.couplings)):
        assignment_ordered[row : row + size] = idx + 1
        if size >= 2:
            ordered[row : row + size, row : row + size] = build_cluster_block(size, coupling)
            b_i, d_i = build_factors(size)
            r_i = size - 1
            beta[row : row + size, col : col + r_i] = b_i
            delta[col : col + r_i, col : col + r_i] = (coupling / size) * d_i
            col += r_i
        row += size

    if spec.permutation is not None:
        perm = np.array(spec.permutation, dtype=np.int64)
    else:
        perm = _fisher_yates(p, spec.seed)
    pi = ordered[np.ix_(perm, perm)]
    return KuramotoSystem(
        spec=spec,
        pi=pi,
        beta=beta,
        delta=delta,
        true_rank=rank,
        assignment=assignment_ordered[perm],
        permutation=perm,
    )


def coupling_grid(n: int = 12, high: float = 2.0, low: float = 0.5) -> tuple[float, ...]:
    """Evenly spaced coupling strengths from high down to low."""
    if n < 2:
        raise InvalidInputError("grid needs at least two clusters")
    return tuple(high - (high - low) * i / (n - 1) for i in range(n))


def i1_condition(pi_or_factors) -> tuple[float, bool]:
    """Spectral radius of the cointegration stationarity condition.

    Accepts either a square coupling matrix or an (alpha, beta) factor
    pair. For a matrix, the factors come from its eigendecomposition
    restricted to the nonzero eigenvalues, in which case the radius is
    max |1 + eigenvalue| over that set. Rank 0 gives radius 0 (pure random
    walk, condition satisfied).
    """
    if isinstance(pi_or_factors, (tuple, list)):
        alpha, beta = pi_or_factors
        alpha = np.asarray(alpha, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        if alpha.shape != beta.shape:
            raise InvalidInputError("alpha and beta must have matching shapes")
        r = alpha.shape[1] if alpha.ndim == 2 else 0
        if r == 0:
            return 0.0, True
        eig = np.linalg.eigvals(np.eye(r) + beta.T @ alpha)
        radius = float(np.max(np.abs(eig)))
        return radius, radius < 1.0

    pi = np.asarray(pi_or_factors, dtype=np.float64)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise InvalidInputError("coupling matrix must be square")
    eig = np.linalg.eigvals(pi)
    scale = float(np.max(np.abs(eig)))
    if scale == 0.0:
        return 0.0, True
    nonzero = eig[np.abs(eig) > pi.shape[0] * scale * _RANK_TOL]
    if nonzero.size == 0:
        return 0.0, True
    radius = float(np.max(np.abs(1.0 + nonzero)))
    return radius, radius < 1.0
