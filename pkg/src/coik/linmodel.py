"""Core VECM data model.

Simulation of the error-correction recursion, the four scaled moment
matrices, the OLS coupling estimator, the concentrated innovation
covariance, and the profile log-likelihood. All operations are pure
functions of immutable values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateLikelihoodError, InvalidInputError, RankDeficiencyError

# Fixed block width for moment accumulation; results must not depend on how
# callers chunk the data, so the block structure is pinned here.
_ACC_BLOCK = 1024

# Condition-number ceiling for moment-matrix inversion. Above it we fail
# rather than regularize: silent ridging would bias estimator comparisons.
MAX_CONDITION = 1e12

_FLOAT_FMT = "%.17g"


def _as_float_matrix(a, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return out


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A p-dimensional sample path: initial state plus N observed transitions.

    ``path[:, n-1]`` holds the state after transition n; differences are
    derived on demand, never stored.
    """

    y0: np.ndarray
    path: np.ndarray

    def __post_init__(self):
        y0 = _as_float_matrix(self.y0, "y0").reshape(-1)
        path = _as_float_matrix(self.path, "path")
        if path.ndim != 2:
            raise InvalidInputError("path must be a p x N matrix")
        if y0.shape[0] != path.shape[0]:
            raise InvalidInputError(
                f"y0 has length {y0.shape[0]} but path has {path.shape[0]} rows"
            )
        if path.shape[0] < 1 or path.shape[1] < 2:
            raise InvalidInputError("need p >= 1 and N >= 2")
        y0.flags.writeable = False
        path.flags.writeable = False
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "path", path)

    @property
    def p(self) -> int:
        return self.path.shape[0]

    @property
    def n_obs(self) -> int:
        return self.path.shape[1]

    def lagged(self) -> np.ndarray:
        """States y_0 .. y_{N-1}, aligned with the transitions."""
        return np.hstack([self.y0[:, None], self.path[:, :-1]])

    def diffs(self) -> np.ndarray:
        """Increments y_n - y_{n-1} for n = 1..N."""
        return self.path - self.lagged()

    def to_csv(self, path) -> None:
        """Write `t,y1,...,yp` rows; row t=0 holds the initial state.

        Values are printed with 17 significant digits so the round trip is
        lossless for IEEE doubles.
        """
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"y{i + 1}" for i in range(self.p)])
            writer.writerow(["0"] + [_FLOAT_FMT % v for v in self.y0])
            for n in range(self.n_obs):
                writer.writerow([str(n + 1)] + [_FLOAT_FMT % v for v in self.path[:, n]])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "t":
                raise InvalidInputError(f"{path}: expected header starting with 't'")
            rows = [row for row in reader if row]
        if len(rows) < 3:
            raise InvalidInputError(f"{path}: need the initial row plus N >= 2 transitions")
        values = np.array([[float(v) for v in row[1:]] for row in rows], dtype=np.float64)
        ts = np.array([int(row[0]) for row in rows])
        if not np.array_equal(ts, np.arange(len(rows))):
            raise InvalidInputError(f"{path}: time column must run 0..N consecutively")
        return cls(y0=values[0], path=values[1:].T)


@dataclass(frozen=True, eq=False)
class VECMModel:
    """Error-correction dynamics: increments = pi @ state + mu + noise."""

    pi: np.ndarray
    mu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        pi = _as_float_matrix(self.pi, "pi")
        mu = _as_float_matrix(self.mu, "mu").reshape(-1)
        omega = _as_float_matrix(self.omega, "omega")
        p = pi.shape[0]
        if pi.shape != (p, p) or omega.shape != (p, p) or mu.shape != (p,):
            raise InvalidInputError("pi, mu, omega dimensions disagree")
        if not np.allclose(omega, omega.T, atol=1e-12, rtol=0.0):
            raise InvalidInputError("omega must be symmetric within 1e-12")
        try:
            np.linalg.cholesky(omega)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("omega must be positive definite") from exc
        for a in (pi, mu, omega):
            a.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "omega", omega)

    @property
    def p(self) -> int:
        return self.pi.shape[0]


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """The four (1/N)-scaled moment matrices of increments and lagged states."""

    s00: np.ndarray
    s01: np.ndarray
    s10: np.ndarray
    s11: np.ndarray
    n_obs: int

    def __post_init__(self):
        s00 = _as_float_matrix(self.s00, "s00")
        s01 = _as_float_matrix(self.s01, "s01")
        s10 = _as_float_matrix(self.s10, "s10")
        s11 = _as_float_matrix(self.s11, "s11")
        p = s00.shape[0]
        for name, a in (("s00", s00), ("s01", s01), ("s10", s10), ("s11", s11)):
            if a.shape != (p, p):
                raise InvalidInputError(f"{name} must be {p} x {p}")
        if not np.array_equal(s10, s01.T):
            raise InvalidInputError("s10 must be the exact transpose of s01")
        if self.n_obs < 2:
            raise InvalidInputError("need N >= 2")
        for a in (s00, s01, s10, s11):
            a.flags.writeable = False
        object.__setattr__(self, "s00", s00)
        object.__setattr__(self, "s01", s01)
        object.__setattr__(self, "s10", s10)
        object.__setattr__(self, "s11", s11)

    @property
    def p(self) -> int:
        return self.s00.shape[0]


def _blocked_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum of per-column outer products, accumulated in fixed-width blocks."""
    acc = np.zeros((a.shape[0], b.shape[0]))
    for j in range(0, a.shape[1], _ACC_BLOCK):
        acc += a[:, j : j + _ACC_BLOCK] @ b[:, j : j + _ACC_BLOCK].T
    return acc


def suffstats(series: TimeSeries, *, demean: bool = False) -> SufficientStats:
    """Compute the four scaled moment matrices over n = 1..N.

    Parameters
    ----------
    series : TimeSeries
        Observed path including its initial state.
    demean : bool
        Unrestricted-constant mode: subtract the sample means of the
        increments and the lagged states before accumulating. The default
        leaves the deterministic term at zero.

    Returns
    -------
    SufficientStats
        s10 is constructed as the exact transpose of s01.
    """
    dy = series.diffs()
    lag = series.lagged()
    if demean:
        dy = dy - dy.mean(axis=1, keepdims=True)
        lag = lag - lag.mean(axis=1, keepdims=True)
    n = series.n_obs
    s00 = _blocked_cross(dy, dy) / n
    s01 = _blocked_cross(dy, lag) / n
    s11 = _blocked_cross(lag, lag) / n
    return SufficientStats(s00=s00, s01=s01, s10=s01.T.copy(), s11=s11, n_obs=n)


def _check_condition(m: np.ndarray, name: str) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, after a positive-definiteness gate."""
    w = np.linalg.eigvalsh(m)
    if w[0] <= 0.0 or w[-1] / w[0] > MAX_CONDITION:
        cond = np.inf if w[0] <= 0.0 else w[-1] / w[0]
        raise RankDeficiencyError(
            f"{name} is singular or ill-conditioned (condition number {cond:.3e}, "
            f"bound {MAX_CONDITION:.1e})"
        )
    return w


def ols_pi(stats: SufficientStats) -> np.ndarray:
    """Unrestricted least-squares coupling estimate s01 @ s11^-1.

    No symmetry is guaranteed. Raises RankDeficiencyError when s11 exceeds
    the condition bound.
    """
    _check_condition(stats.s11, "s11")
    factor = sla.cho_factor(stats.s11, lower=True)
    return sla.cho_solve(factor, stats.s10).T


def omega_given_pi(stats: SufficientStats, pi: np.ndarray) -> np.ndarray:
    """Concentrated innovation covariance for a fixed coupling matrix.

    Returns s00 - pi s10 - s01 pi' + pi s11 pi', symmetrized against
    round-off before return.
    """
    pi = _as_float_matrix(pi, "pi")
    if pi.shape != (stats.p, stats.p):
        raise InvalidInputError(f"pi must be {stats.p} x {stats.p}")
    cross = pi @ stats.s10
    omega = stats.s00 - cross - cross.T + pi @ stats.s11 @ pi.T
    return (omega + omega.T) / 2.0


def _logdet_pd(m: np.ndarray, context: str) -> float:
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise DegenerateLikelihoodError(
            f"{context}: implied covariance is not positive definite"
        ) from exc
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def profile_loglik(stats: SufficientStats, pi: np.ndarray) -> float:
    """Profile log-likelihood -(N/2) log det of the concentrated covariance.

    Additive constants are omitted throughout, so only differences between
    couplings on the same stats are meaningful.
    """
    omega = omega_given_pi(stats, pi)
    return -0.5 * stats.n_obs * _logdet_pd(omega, "profile_loglik")


def lrt_between(stats: SufficientStats, pi_restricted: np.ndarray, pi_full: np.ndarray) -> float:
    """Likelihood-ratio value of a restricted coupling against a fuller one.

    N * (log det omega_restricted - log det omega_full); negative values are
    possible when the restricted matrix happens to fit better and are not
    clamped.
    """
    ld_r = _logdet_pd(omega_given_pi(stats, pi_restricted), "lrt_between (restricted)")
    ld_f = _logdet_pd(omega_given_pi(stats, pi_full), "lrt_between (full)")
    return stats.n_obs * (ld_r - ld_f)


def simulate_vecm(
    model: VECMModel,
    n_obs: int,
    y0: np.ndarray | None = None,
    seed: int | np.random.SeedSequence = 0,
) -> TimeSeries:
    """Iterate the error-correction recursion with Gaussian innovations.

    The covariance is factored once by Cholesky and innovations are drawn
    up front, so an identical seed gives a bit-identical path.
    """
    if n_obs < 2:
        raise InvalidInputError("need N >= 2")
    p = model.p
    start = np.zeros(p) if y0 is None else _as_float_matrix(y0, "y0").reshape(-1)
    if start.shape[0] != p:
        raise InvalidInputError(f"y0 must have length {p}")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(model.omega)
    noise = chol @ rng.standard_normal((p, n_obs))
    step = np.eye(p) + model.pi
    path = np.empty((p, n_obs))
    prev = start
    for n in range(n_obs):
        prev = step @ prev + model.mu + noise[:, n]
        path[:, n] = prev
    return TimeSeries(y0=start, path=path)
