"""Wild-bootstrap distribution of the trace statistic and sequential rank choice.

Replicates are resampled under the tested rank hypothesis by scaling each
residual vector with an independent standard normal multiplier and
rebuilding the path recursively. Replicate seeding is derived from
(master seed, rank, replicate index), so results do not depend on
execution order or worker count.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CoikError, InvalidInputError
from .johansen import (
    RRRSolution,
    VARIANTS,
    fit_rank,
    rrr_eigenvalues,
    rrr_solve,
    trace_stat,
)
from .kuramoto import i1_condition
from .linmodel import SufficientStats, TimeSeries, suffstats

# Replicates are simulated and reduced in fixed-size batches; the batch
# width is pinned so outputs are identical however batches are scheduled.
_BATCH = 32

# Abort threshold for degenerate replicates.
_MAX_FAIL_FRACTION = 0.01


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, test level, statistic variant, and seeding."""

    replicates: int = 300
    level: float = 0.05
    variant: str = "standard"
    seed: int = 0
    max_rank: int | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidInputError("need at least one bootstrap replicate")
        if not 0.0 < self.level < 1.0:
            raise InvalidInputError("level must lie in (0, 1)")
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}")
        if self.max_rank is not None and self.max_rank < 0:
            raise InvalidInputError("max_rank must be nonnegative")


@dataclass(frozen=True, eq=False)
class RankTestRecord:
    """Outcome of one rank hypothesis: observed statistic versus replicates."""

    rank: int
    observed: float
    quantile: float
    p_value: float
    rejected: bool
    n_failed: int
    replicate_stats: np.ndarray


@dataclass(frozen=True, eq=False)
class RankDecision:
    """Full trajectory of the sequential scan and the selected rank."""

    selected_rank: int
    per_rank: tuple[RankTestRecord, ...]
    truncated: bool = False

    def replicate_matrix(self) -> np.ndarray:
        """Replicate statistics stacked as (replicates, tested ranks)."""
        return np.column_stack([rec.replicate_stats for rec in self.per_rank])


def replicate_seed(seed: int, rank: int, index: int) -> np.random.SeedSequence:
    """Child seed of replicate `index` at the tested rank."""
    return np.random.SeedSequence((int(seed), int(rank), int(index)))


def wild_resample(
    series: TimeSeries, fit, seed: int | np.random.SeedSequence
) -> TimeSeries:
    """One wild-bootstrap path under a fitted coupling matrix.

    Residuals are scaled per time point by one standard normal multiplier
    (the whole residual vector shares it, preserving its cross-sectional
    covariance) and the path is rebuilt recursively from the original
    initial state.
    """
    lag = series.lagged()
    resid = series.diffs() - fit.pi @ lag
    multipliers = np.random.default_rng(seed).standard_normal(series.n_obs)
    scaled = resid * multipliers
    step = np.eye(series.p) + fit.pi
    path = np.empty_like(series.path)
    prev = series.y0
    for n in range(series.n_obs):
        prev = step @ prev + scaled[:, n]
        path[:, n] = prev
    return TimeSeries(y0=series.y0, path=path)


def _batch_stats(
    y0: np.ndarray,
    resid: np.ndarray,
    step: np.ndarray,
    rank: int,
    seeds: list[np.random.SeedSequence],
    n_obs: int,
    variant: str,
) -> np.ndarray:
    """Trace statistics of one batch of replicates; NaN marks a failure."""
    p = resid.shape[0]
    width = len(seeds)
    multipliers = np.stack(
        [np.random.default_rng(s).standard_normal(n_obs) for s in seeds]
    )
    # Innovations laid out (N, p, batch) so each recursion step is one GEMM.
    scaled = resid.T[:, :, None] * multipliers.T[:, None, :]
    levels = np.empty((n_obs + 1, p, width))
    levels[0] = y0[:, None]
    for n in range(1, n_obs + 1):
        np.matmul(step, levels[n - 1], out=levels[n])
        levels[n] += scaled[n - 1]
    del scaled
    batch = np.ascontiguousarray(levels.transpose(2, 1, 0))  # (width, p, N+1)
    del levels
    # Moment matrices from the level grams: with g = sum_n y_n y_n' over
    # n = 0..N and c = sum_n y_n y_{n-1}', the lag, cross, and increment
    # moments follow by rank-one end corrections.
    gram = batch @ batch.transpose(0, 2, 1)
    cross = batch[:, :, 1:] @ batch[:, :, :-1].transpose(0, 2, 1)
    cross /= n_obs
    first = batch[:, :, 0]
    last = batch[:, :, -1]
    s11 = (gram - last[:, :, None] * last[:, None, :]) / n_obs
    syy = (gram - first[:, :, None] * first[:, None, :]) / n_obs
    s01 = cross - s11
    s00 = syy - cross - cross.transpose(0, 2, 1) + s11
    out = np.empty(width)
    for b in range(width):
        try:
            ascending = rrr_eigenvalues(s00[b], s01[b], s11[b])
        except np.linalg.LinAlgError:
            out[b] = np.nan
            continue
        tail = np.clip(ascending[: p - rank], 0.0, np.nextafter(1.0, 0.0))
        if variant == "paper-literal":
            out[b] = float(np.sum(tail))
        else:
            out[b] = float(-n_obs * np.sum(np.log1p(-tail)))
    return out


def _replicate_stats(
    series: TimeSeries,
    stats: SufficientStats,
    sol: RRRSolution,
    rank: int,
    cfg: BootstrapConfig,
    threads: int,
) -> tuple[np.ndarray, int]:
    """All replicate statistics at one rank, in replicate order."""
    fit = fit_rank(stats, rank, sol)
    if rank > 0:
        radius, satisfied = i1_condition((fit.alpha, fit.beta))
        if not satisfied:
            warnings.warn(
                f"rank {rank} fit has recursion radius {radius:.4f} >= 1; "
                "bootstrap paths may diverge",
                RuntimeWarning,
                stacklevel=3,
            )
    resid = series.diffs() - fit.pi @ series.lagged()
    step = np.eye(series.p) + fit.pi
    bounds = [
        (lo, min(lo + _BATCH, cfg.replicates)) for lo in range(0, cfg.replicates, _BATCH)
    ]

    def run(batch: tuple[int, int]) -> np.ndarray:
        lo, hi = batch
        seeds = [replicate_seed(cfg.seed, rank, m) for m in range(lo, hi)]
        return _batch_stats(series.y0, resid, step, rank, seeds, series.n_obs, cfg.variant)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pieces = list(pool.map(run, bounds))
    else:
        pieces = [run(b) for b in bounds]
    values = np.concatenate(pieces)
    n_failed = int(np.sum(np.isnan(values)))
    if n_failed > _MAX_FAIL_FRACTION * cfg.replicates:
        raise CoikError(
            f"{n_failed} of {cfg.replicates} bootstrap replicates failed at rank {rank}"
        )
    return values, n_failed


def _record_from_stats(
    observed: float, values: np.ndarray, n_failed: int, rank: int, cfg: BootstrapConfig
) -> RankTestRecord:
    good = np.sort(values[~np.isnan(values)])
    # Empirical order statistic: the ceil((1-level)*B)-th smallest replicate.
    k = max(1, math.ceil((1.0 - cfg.level) * good.size))
    quantile = float(good[k - 1])
    p_value = float(np.mean(good >= observed))
    return RankTestRecord(
        rank=rank,
        observed=observed,
        quantile=quantile,
        p_value=p_value,
        rejected=bool(observed > quantile),
        n_failed=n_failed,
        replicate_stats=values,
    )


def bootstrap_test(
    series: TimeSeries, rank: int, cfg: BootstrapConfig, threads: int = 1
) -> RankTestRecord:
    """Bootstrap test of one rank hypothesis against the unrestricted model.

    Fits the hypothesis, resamples `cfg.replicates` paths under it,
    recomputes the trace statistic on each, and compares the observed value
    with the empirical (1 - level) quantile. Replicate failures are counted
    and abort the run above one percent.
    """
    if rank >= series.p:
        raise InvalidInputError("tested rank must be below the dimension")
    stats = suffstats(series)
    sol = rrr_solve(stats)
    observed = trace_stat(sol, rank, cfg.variant)
    values, n_failed = _replicate_stats(series, stats, sol, rank, cfg, threads)
    return _record_from_stats(observed, values, n_failed, rank, cfg)


def sequential_rank(
    series: TimeSeries, cfg: BootstrapConfig, threads: int = 1
) -> RankDecision:
    """Scan ranks upward until the first hypothesis that is not rejected.

    Testing starts at rank 0 and stops at the first non-rejection; if every
    rank below the dimension is rejected the full rank is selected. A
    configured max_rank truncates the scan, which is flagged on the
    decision rather than treated as a selection.
    """
    stats = suffstats(series)
    sol = rrr_solve(stats)
    p = series.p
    cap = p - 1 if cfg.max_rank is None else min(cfg.max_rank, p - 1)
    records = []
    for rank in range(cap + 1):
        observed = trace_stat(sol, rank, cfg.variant)
        values, n_failed = _replicate_stats(series, stats, sol, rank, cfg, threads)
        record = _record_from_stats(observed, values, n_failed, rank, cfg)
        records.append(record)
        if not record.rejected:
            return RankDecision(selected_rank=rank, per_rank=tuple(records))
    if cap == p - 1:
        return RankDecision(selected_rank=p, per_rank=tuple(records))
    return RankDecision(selected_rank=cap, per_rank=tuple(records), truncated=True)


def write_decision_csv(decision: RankDecision, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "observed", "quantile", "pvalue", "rejected"])
        for rec in decision.per_rank:
            writer.writerow(
                [
                    str(rec.rank),
                    "%.17g" % rec.observed,
                    "%.17g" % rec.quantile,
                    "%.17g" % rec.p_value,
                    str(rec.rejected).lower(),
                ]
            )


def write_decision_json(decision: RankDecision, cfg: BootstrapConfig, path) -> None:
    payload = {
        "selected_rank": decision.selected_rank,
        "truncated": decision.truncated,
        "config": {
            "replicates": cfg.replicates,
            "level": cfg.level,
            "variant": cfg.variant,
            "seed": cfg.seed,
            "max_rank": cfg.max_rank,
        },
        "per_rank": [
            {
                "r": rec.rank,
                "observed": rec.observed,
                "quantile": rec.quantile,
                "pvalue": rec.p_value,
                "rejected": rec.rejected,
                "failed_replicates": rec.n_failed,
            }
            for rec in decision.per_rank
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
