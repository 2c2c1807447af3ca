"""Cluster recovery from an estimated coupling matrix.

Greedy agglomerative modularity maximization on the magnitude of the
symmetrized estimate, recovery scoring against the ground truth, and
block-wise re-estimation of the per-cluster coupling structure.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CoikError, InvalidInputError, UndefinedMeasureError
from .linmodel import TimeSeries, suffstats, SufficientStats
from .lowrank import estimate_sym, hermitian_part


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Symmetric nonnegative edge weights with an empty diagonal."""

    weights: np.ndarray
    total_weight: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidInputError("weights must be square")
        if not np.allclose(w, w.T, atol=1e-12, rtol=0.0):
            raise InvalidInputError("weights must be symmetric within 1e-12")
        if np.any(np.diag(w) != 0.0):
            raise InvalidInputError("diagonal must be exactly zero")
        if np.any(w < 0.0):
            raise InvalidInputError("weights must be nonnegative")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_weight", float(np.sum(w)))

    @property
    def p(self) -> int:
        return self.weights.shape[0]

    def strengths(self) -> np.ndarray:
        return self.weights.sum(axis=1)


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """1-based cluster label per node plus the partition's modularity."""

    labels: np.ndarray
    n_clusters: int
    modularity: float

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise InvalidInputError("labels must be a vector")
        present = np.unique(labels)
        if not np.array_equal(present, np.arange(1, self.n_clusters + 1)):
            raise InvalidInputError("labels must cover 1..k with no empty cluster")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def p(self) -> int:
        return self.labels.shape[0]

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def from_labels(labels, graph: WeightedGraph | None = None) -> ClusterAssignment:
    """Canonicalize raw labels (relabeled 1..k by first appearance)."""
    raw = np.asarray(labels)
    seen: dict = {}
    canon = np.empty(raw.shape[0], dtype=np.int64)
    for i, lab in enumerate(raw):
        if lab not in seen:
            seen[lab] = len(seen) + 1
        canon[i] = seen[lab]
    q = 0.0
    if graph is not None:
        q = _modularity_of_labels(graph, canon)
    return ClusterAssignment(labels=canon, n_clusters=len(seen), modularity=q)


def graph_from_pi(pi: np.ndarray) -> WeightedGraph:
    """Edge weights from a coupling estimate.

    The estimate is symmetrized, taken entrywise absolute (only the
    magnitude encodes connection strength), and the diagonal is dropped:
    self-decay is not inter-node coupling.
    """
    weights = np.abs(hermitian_part(pi))
    np.fill_diagonal(weights, 0.0)
    return WeightedGraph(weights=weights, total_weight=float(np.sum(weights)))


def _modularity_of_labels(graph: WeightedGraph, labels: np.ndarray) -> float:
    if graph.total_weight <= 0.0:
        raise UndefinedMeasureError("modularity is undefined on a zero-weight graph")
    two_m = graph.total_weight
    strengths = graph.strengths()
    q = 0.0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        q += np.sum(graph.weights[np.ix_(idx, idx)]) / two_m
        q -= (np.sum(strengths[idx]) / two_m) ** 2
    return float(q)


def modularity(graph: WeightedGraph, assignment: ClusterAssignment) -> float:
    """Weighted modularity of a partition.

    Within-community weight fraction minus its expectation under the
    strength-preserving null model; a random structure scores near 0.
    """
    if assignment.p != graph.p:
        raise InvalidInputError("assignment and graph sizes differ")
    return _modularity_of_labels(graph, assignment.labels)


def cnm_cluster(graph: WeightedGraph) -> ClusterAssignment:
    """Greedy modularity agglomeration from singletons.

    Repeatedly merges the community pair with the largest modularity gain
    (2 * (pair weight fraction - strength fraction product)), breaking ties
    toward the lowest index pair, until one community remains. Returns the
    partition attaining the maximal modularity along the merge path.
    """
    if graph.total_weight <= 0.0:
        raise UndefinedMeasureError("clustering is undefined on a zero-weight graph")
    p = graph.p
    two_m = graph.total_weight
    # Community-pair weight fractions and community strength fractions.
    pair = graph.weights / two_m
    frac = graph.strengths() / two_m
    dead = np.zeros(p, dtype=bool)
    owner = np.arange(p)
    q = float(-np.sum(frac**2))
    best_q = q
    best_owner = owner.copy()
    lower = np.tril_indices(p)
    for _ in range(p - 1):
        gains = 2.0 * (pair - np.outer(frac, frac))
        gains[dead, :] = -np.inf
        gains[:, dead] = -np.inf
        gains[lower] = -np.inf
        # argmax takes the first maximum in row-major order, which is the
        # lowest community index pair: the pinned tie-break.
        i, j = divmod(int(np.argmax(gains)), p)
        q += float(gains[i, j])
        # Fold community j into i (the lower index survives).
        pair[i, :] += pair[j, :]
        pair[:, i] += pair[:, j]
        pair[j, :] = 0.0
        pair[:, j] = 0.0
        frac[i] += frac[j]
        frac[j] = 0.0
        owner[owner == j] = i
        dead[j] = True
        if q > best_q:
            best_q = q
            best_owner = owner.copy()
    return from_labels(best_owner, graph)


@dataclass(frozen=True, eq=False)
class ClusterMatch:
    """One true cluster scored against its best-overlap estimated cluster."""

    true_cluster: int
    est_cluster: int | None
    true_members: tuple[int, ...]
    est_members: tuple[int, ...]
    misplaced: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class RecoveryReport:
    matches: tuple[ClusterMatch, ...]
    total_misplaced: int
    ari: float
    singleton_absorbed: bool


def adjusted_rand_index(truth: ClusterAssignment, est: ClusterAssignment) -> float:
    """Pair-counting agreement corrected for chance."""
    if truth.p != est.p:
        raise InvalidInputError("partitions must cover the same nodes")
    n = truth.p
    contingency = np.zeros((truth.n_clusters, est.n_clusters))
    for t, e in zip(truth.labels, est.labels):
        contingency[t - 1, e - 1] += 1

    def pairs(x):
        return float(np.sum(x * (x - 1) / 2.0))

    sum_cells = pairs(contingency)
    sum_rows = pairs(contingency.sum(axis=1))
    sum_cols = pairs(contingency.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    maximum = (sum_rows + sum_cols) / 2.0
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def score_recovery(truth: ClusterAssignment, est: ClusterAssignment) -> RecoveryReport:
    """Match estimated clusters one-to-one to true clusters by overlap.

    Candidate pairs are taken greedily by overlap size (ties resolved by
    lowest cluster indices). A true cluster left unmatched counts all its
    members as misplaced; matched clusters count the members missing from
    their partner. The report flags any singleton true cluster whose member
    was absorbed into a larger estimated cluster.
    """
    if truth.p != est.p:
        raise InvalidInputError("partitions must cover the same nodes")
    overlaps = []
    for t in range(1, truth.n_clusters + 1):
        t_members = set(truth.members(t).tolist())
        for e in range(1, est.n_clusters + 1):
            size = len(t_members & set(est.members(e).tolist()))
            if size > 0:
                overlaps.append((-size, t, e))
    overlaps.sort()
    matched_t: dict[int, int] = {}
    matched_e: set[int] = set()
    for neg, t, e in overlaps:
        if t not in matched_t and e not in matched_e:
            matched_t[t] = e
            matched_e.add(e)
    matches = []
    total_misplaced = 0
    singleton_absorbed = False
    for t in range(1, truth.n_clusters + 1):
        t_members = truth.members(t)
        e = matched_t.get(t)
        e_members = est.members(e) if e is not None else np.array([], dtype=np.int64)
        missing = tuple(int(i) for i in t_members if i not in set(e_members.tolist()))
        total_misplaced += len(missing)
        if t_members.size == 1:
            home = est.members(int(est.labels[t_members[0]]))
            if home.size >= 2:
                singleton_absorbed = True
        matches.append(
            ClusterMatch(
                true_cluster=t,
                est_cluster=e,
                true_members=tuple(int(i) for i in t_members),
                est_members=tuple(int(i) for i in e_members),
                misplaced=missing,
            )
        )
    return RecoveryReport(
        matches=tuple(matches),
        total_misplaced=total_misplaced,
        ari=adjusted_rand_index(truth, est),
        singleton_absorbed=singleton_absorbed,
    )


def per_cluster_reestimate(
    series: TimeSeries,
    assignment: ClusterAssignment,
    stats: SufficientStats | None = None,
) -> np.ndarray:
    """Re-estimate the coupling block-wise under assumed cluster independence.

    Each cluster of size s >= 2 is re-estimated from its own coordinates at
    rank s - 1 with the symmetric low-rank estimator; singletons and all
    off-block entries are exactly zero. A failing block is reported and
    left at zero while the remaining blocks proceed.
    """
    if assignment.p != series.p:
        raise InvalidInputError("assignment must cover every coordinate")
    if stats is None:
        stats = suffstats(series)
    out = np.zeros((series.p, series.p))
    for cluster in range(1, assignment.n_clusters + 1):
        idx = assignment.members(cluster)
        if idx.size < 2:
            continue
        block_stats = SufficientStats(
            s00=stats.s00[np.ix_(idx, idx)],
            s01=stats.s01[np.ix_(idx, idx)],
            s10=stats.s01[np.ix_(idx, idx)].T.copy(),
            s11=stats.s11[np.ix_(idx, idx)],
            n_obs=stats.n_obs,
        )
        try:
            est = estimate_sym(block_stats, idx.size - 1)
        except CoikError as exc:
            warnings.warn(
                f"cluster {cluster} re-estimation failed: {exc}", RuntimeWarning, stacklevel=2
            )
            continue
        out[np.ix_(idx, idx)] = est.pi
    return out


def write_recovery_json(
    report: RecoveryReport, assignment: ClusterAssignment, path, extra: dict | None = None
) -> None:
    payload = {
        "n_clusters": assignment.n_clusters,
        "modularity": assignment.modularity,
        "ari": report.ari,
        "total_misplaced": report.total_misplaced,
        "singleton_absorbed": report.singleton_absorbed,
        "clusters": [
            {
                "true_cluster": m.true_cluster,
                "est_cluster": m.est_cluster,
                "true_members": list(m.true_members),
                "est_members": list(m.est_members),
                "misplaced": list(m.misplaced),
            }
            for m in report.matches
        ],
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_cluster_table_csv(report: RecoveryReport, couplings, path) -> None:
    """Per-true-cluster table: coupling, true members, recovered members.

    Members are printed 1-based, ordered by decreasing coupling strength.
    """
    couplings = list(couplings)
    if len(couplings) != len(report.matches):
        raise InvalidInputError("need one coupling per true cluster")
    order = sorted(range(len(couplings)), key=lambda i: (-couplings[i], i))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_coupling", "true_members", "estimated_members"])
        for i in order:
            match = report.matches[i]
            writer.writerow(
                [
                    "%.17g" % couplings[i],
                    " ".join(str(m + 1) for m in match.true_members),
                    " ".join(str(m + 1) for m in match.est_members),
                ]
            )
