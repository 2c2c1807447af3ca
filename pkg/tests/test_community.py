"""Cluster recovery: graph construction, modularity, CNM, scoring, re-estimation."""

import numpy as np
import pytest

from coik.community import (
    ClusterAssignment,
    WeightedGraph,
    adjusted_rand_index,
    cnm_cluster,
    from_labels,
    graph_from_pi,
    modularity,
    per_cluster_reestimate,
    score_recovery,
    write_cluster_table_csv,
    write_recovery_json,
)
from coik.errors import InvalidInputError, UndefinedMeasureError
from coik.kuramoto import KuramotoSpec, build_cluster_block, build_system
from coik.linmodel import VECMModel, simulate_vecm, suffstats
from coik.lowrank import estimate_sym


def single_edge_graph(weight=1.0):
    w = np.array([[0.0, weight], [weight, 0.0]])
    return WeightedGraph(weights=w, total_weight=float(w.sum()))


def two_cliques_graph():
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = 1.0
    w[2, 3] = w[3, 2] = 1.0
    return WeightedGraph(weights=w, total_weight=4.0)


class TestGraphFromPi:
    def test_cluster_block_weights(self):
        g = graph_from_pi(build_cluster_block(2, 1.0))
        np.testing.assert_array_equal(g.weights, np.array([[0.0, 0.5], [0.5, 0.0]]))
        assert g.total_weight == pytest.approx(1.0)

    def test_zero_matrix(self):
        g = graph_from_pi(np.zeros((3, 3)))
        assert g.total_weight == 0.0

    def test_asymmetric_symmetrized(self):
        pi = np.array([[0.0, 0.4], [-0.2, 0.0]])
        g = graph_from_pi(pi)
        np.testing.assert_allclose(g.weights, np.array([[0.0, 0.1], [0.1, 0.0]]))

    def test_graph_invariants_enforced(self):
        with pytest.raises(InvalidInputError):
            WeightedGraph(weights=np.array([[1.0, 0.0], [0.0, 0.0]]), total_weight=1.0)
        with pytest.raises(InvalidInputError):
            WeightedGraph(weights=np.array([[0.0, -0.5], [-0.5, 0.0]]), total_weight=-1.0)


class TestModularity:
    def test_single_edge_one_community(self):
        g = single_edge_graph()
        part = from_labels([1, 1], g)
        assert modularity(g, part) == pytest.approx(0.0, abs=1e-12)

    def test_single_edge_singletons(self):
        g = single_edge_graph()
        part = from_labels([1, 2], g)
        assert modularity(g, part) == pytest.approx(-0.5, abs=1e-12)

    def test_two_cliques_true_split(self):
        g = two_cliques_graph()
        part = from_labels([1, 1, 2, 2], g)
        assert modularity(g, part) == pytest.approx(0.5, abs=1e-12)

    def test_zero_graph_undefined(self):
        g = WeightedGraph(weights=np.zeros((2, 2)), total_weight=0.0)
        part = ClusterAssignment(labels=np.array([1, 2]), n_clusters=2, modularity=0.0)
        with pytest.raises(UndefinedMeasureError):
            modularity(g, part)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(0)
        w = np.abs(rng.standard_normal((6, 6)))
        w = (w + w.T) / 2
        np.fill_diagonal(w, 0.0)
        g = WeightedGraph(weights=w, total_weight=float(w.sum()))
        labels = np.array([1, 1, 2, 2, 3, 3])
        perm = rng.permutation(6)
        w_perm = w[np.ix_(perm, perm)]
        g_perm = WeightedGraph(weights=w_perm, total_weight=float(w_perm.sum()))
        q_a = modularity(g, from_labels(labels, g))
        q_b = modularity(g_perm, from_labels(labels[perm], g_perm))
        assert q_a == pytest.approx(q_b, abs=1e-12)


class TestCnmCluster:
    def test_disconnected_cliques(self):
        g = two_cliques_graph()
        part = cnm_cluster(g)
        assert part.n_clusters == 2
        assert part.labels[0] == part.labels[1]
        assert part.labels[2] == part.labels[3]
        assert part.modularity == pytest.approx(0.5, abs=1e-12)

    def test_reported_q_matches_direct_formula(self):
        rng = np.random.default_rng(1)
        w = np.abs(rng.standard_normal((10, 10)))
        w = (w + w.T) / 2
        np.fill_diagonal(w, 0.0)
        g = WeightedGraph(weights=w, total_weight=float(w.sum()))
        part = cnm_cluster(g)
        assert part.modularity == pytest.approx(modularity(g, part), abs=1e-10)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        w = np.abs(rng.standard_normal((8, 8)))
        w = (w + w.T) / 2
        np.fill_diagonal(w, 0.0)
        g = WeightedGraph(weights=w, total_weight=float(w.sum()))
        a = cnm_cluster(g)
        b = cnm_cluster(g)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_zero_graph_raises(self):
        g = WeightedGraph(weights=np.zeros((3, 3)), total_weight=0.0)
        with pytest.raises(UndefinedMeasureError):
            cnm_cluster(g)

    def test_recovers_kuramoto_clusters(self):
        # End-to-end on a small system: estimate, weight, cluster.
        spec = KuramotoSpec(
            cluster_sizes=(4, 4, 4), couplings=(1.5, 1.0, 0.7), seed=23
        )
        system = build_system(spec)
        model = VECMModel(pi=system.pi, mu=np.zeros(12), omega=np.eye(12))
        series = simulate_vecm(model, 2000, seed=23)
        est = estimate_sym(suffstats(series), system.true_rank)
        part = cnm_cluster(graph_from_pi(est.pi))
        truth = from_labels(system.assignment)
        report = score_recovery(truth, part)
        assert report.ari > 0.9


class TestScoreRecovery:
    def test_identical_partitions(self):
        part = from_labels([1, 1, 2, 2, 3])
        report = score_recovery(part, part)
        assert report.total_misplaced == 0
        assert report.ari == pytest.approx(1.0)
        assert not report.singleton_absorbed

    def test_degenerate_partitions(self):
        truth = from_labels([1, 2, 3, 4])
        est = from_labels([1, 1, 1, 1])
        report = score_recovery(truth, est)
        assert report.ari == pytest.approx(0.0)
        assert report.singleton_absorbed

    def test_misplacement_counting(self):
        truth = from_labels([1, 1, 1, 2, 2, 2])
        est = from_labels([1, 1, 2, 2, 2, 2])
        report = score_recovery(truth, est)
        assert report.total_misplaced == 1
        first = report.matches[0]
        assert first.misplaced == (2,)

    def test_unmatched_true_cluster(self):
        truth = from_labels([1, 1, 2, 2])
        est = from_labels([1, 1, 1, 1])
        report = score_recovery(truth, est)
        by_true = {m.true_cluster: m for m in report.matches}
        assert by_true[2].est_cluster is None
        assert by_true[2].misplaced == (2, 3)

    def test_ari_identical_degenerate(self):
        part = from_labels([1, 1, 1])
        assert adjusted_rand_index(part, part) == pytest.approx(1.0)


class TestPerClusterReestimate:
    def test_single_cluster_equals_full_estimate(self):
        system = build_system(KuramotoSpec(cluster_sizes=(4,), couplings=(1.0,)))
        model = VECMModel(pi=system.pi, mu=np.zeros(4), omega=np.eye(4))
        series = simulate_vecm(model, 1500, seed=29)
        assignment = from_labels([1, 1, 1, 1])
        out = per_cluster_reestimate(series, assignment)
        expected = estimate_sym(suffstats(series), 3).pi
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_all_singletons_zero(self):
        series = simulate_vecm(
            VECMModel(pi=np.zeros((3, 3)), mu=np.zeros(3), omega=np.eye(3)), 100, seed=31
        )
        out = per_cluster_reestimate(series, from_labels([1, 2, 3]))
        np.testing.assert_array_equal(out, np.zeros((3, 3)))

    def test_offblock_exactly_zero_and_symmetric(self):
        spec = KuramotoSpec(cluster_sizes=(3, 3, 1), couplings=(1.2, 0.8, 0.0), seed=37)
        system = build_system(spec)
        model = VECMModel(pi=system.pi, mu=np.zeros(7), omega=np.eye(7))
        series = simulate_vecm(model, 1200, seed=37)
        assignment = from_labels(system.assignment)
        out = per_cluster_reestimate(series, assignment)
        for c in range(1, 4):
            outside = np.ones(7, dtype=bool)
            outside[assignment.members(c)] = False
            block_rows = out[np.ix_(~outside, outside)]
            np.testing.assert_array_equal(block_rows, np.zeros_like(block_rows))
        np.testing.assert_array_equal(out, out.T)
        rank = np.linalg.matrix_rank(out)
        assert rank <= 4  # sum of (size - 1)


class TestExports:
    def test_recovery_json(self, tmp_path):
        import json

        truth = from_labels([1, 1, 2])
        est = from_labels([1, 1, 2])
        report = score_recovery(truth, est)
        target = tmp_path / "recovery.json"
        write_recovery_json(report, est, target, extra={"expected_clusters_hint": 2})
        payload = json.loads(target.read_text())
        assert payload["ari"] == 1.0
        assert payload["expected_clusters_hint"] == 2
        assert len(payload["clusters"]) == 2

    def test_cluster_table_orders_by_coupling(self, tmp_path):
        truth = from_labels([1, 1, 2, 2])
        est = from_labels([2, 2, 1, 1])
        report = score_recovery(truth, est)
        target = tmp_path / "table.csv"
        write_cluster_table_csv(report, [0.5, 1.5], target)
        lines = target.read_text().splitlines()
        assert lines[0] == "true_coupling,true_members,estimated_members"
        assert lines[1].startswith("1.5,")
        assert lines[2].startswith("0.5,")
        # Members are reported 1-based.
        assert lines[1].split(",")[1] == "3 4"
