import numpy as np
import pytest

from src.graphcore import component_stats, components
from src.harness import empirical_pmf, tv_distance
from src.models import Graph, WeightedVertexSet
from src.observables import (
    aldous_walk,
    assumption_diagnostics,
    blob_counts,
    free_edge_susceptibilities,
    graph_susceptibilities,
    record_to_row,
    riordan_walk,
    size_biased_order,
    vertex_susceptibilities,
)
from src.samplers import HalfEdgeState, cm_dynamic, gen_gxq, regular_degrees, replica_rng


def test_singletons():
    rec = graph_susceptibilities(Graph(5))
    assert rec.s2_bar == 1 and rec.s3_bar == 1 and rec.D_bar == 0
    assert rec.x_bar == 1
    assert rec.exact


def test_one_component():
    rec = graph_susceptibilities(Graph.from_pairs(4, [(0, 1), (1, 2), (2, 3)]))
    assert rec.s2_bar == 4
    assert rec.I == 4
    assert rec.diam_max == 3


def test_edge_plus_singleton():
    rec = graph_susceptibilities(Graph.from_pairs(3, [(0, 1)]))
    assert rec.s2_bar == pytest.approx(5 / 3)
    assert rec.D_bar == pytest.approx(2 / 3)


def test_partial_stats_mark_record_inexact():
    g = Graph.from_pairs(4, [(0, 1)])
    decomp = components(g)
    rec = vertex_susceptibilities(decomp, component_stats(g, decomp, max_components=1), g.n)
    assert not rec.exact
    assert rec.s2_bar == pytest.approx(6 / 4)


def test_double_counting_identity():
    g = gen_gxq(WeightedVertexSet.uniform(200, 0.1), 1.0, replica_rng(1))
    rec = graph_susceptibilities(g)
    decomp = components(g)
    per_vertex = decomp.sizes[decomp.labels]
    assert rec.s2_star * g.n == pytest.approx(per_vertex.sum())


def test_free_edge_susceptibilities_at_time_zero():
    d = np.array([1, 2, 3, 2])
    rec = free_edge_susceptibilities(HalfEdgeState(d))
    assert rec.g_bar == pytest.approx(d.mean())
    assert rec.s2_bar == pytest.approx(np.mean(d ** 2))
    assert rec.D_bar == 0


def test_free_edge_susceptibilities_single_edge():
    for seed in range(100):
        state = HalfEdgeState([2, 2])
        u, v = state.fire(replica_rng(seed))
        if u != v:
            break
    rec = free_edge_susceptibilities(state)
    assert rec.s2_bar == pytest.approx(4 / 2)
    assert rec.g_bar == pytest.approx(2 * 2 / 2)
    assert rec.D_bar == pytest.approx(2 / 2)


def test_matched_pair_has_no_free_weight():
    state = HalfEdgeState([1, 1])
    state.fire(replica_rng(0))
    rec = free_edge_susceptibilities(state)
    assert rec.s1_bar == 0 and rec.s2_bar == 0 and rec.g_bar == 0


def test_free_weight_identity_on_dynamic_run():
    state = cm_dynamic(regular_degrees(300, 3), 0.4, replica_rng(2))
    rec = free_edge_susceptibilities(state)
    decomp = components(state.graph())
    expected = float(np.sum(state.free_stubs() * decomp.sizes[decomp.labels]))
    assert rec.g_bar * state.n == pytest.approx(expected)


def test_free_edge_susceptibilities_after_absorption():
    state = cm_dynamic(regular_degrees(24_000, 3), float("inf"), replica_rng(3))
    assert state.alive_count == 0
    rec = free_edge_susceptibilities(state)
    assert rec.s1_bar == 0 and rec.D_bar == 0
    assert rec.I > 10_000
    assert rec.diam_max > 0


def test_record_to_row_precision():
    rec = graph_susceptibilities(Graph.from_pairs(3, [(0, 1)]), t=0.25)
    row = record_to_row(rec)
    assert row["t"] == "0.25"
    assert row["s2"] == "1.66666666667"
    assert row["I"] == "2"


def test_size_biased_first_pick():
    rng = replica_rng(3)
    firsts = [size_biased_order([2.0, 1.0], rng)[0] for _ in range(20_000)]
    assert np.mean(np.array(firsts) == 0) == pytest.approx(2 / 3, abs=0.015)


def test_size_biased_full_order():
    rng = replica_rng(4)
    hits = [tuple(size_biased_order([3.0, 2.0, 1.0], rng)) == (0, 1, 2) for _ in range(20_000)]
    assert np.mean(hits) == pytest.approx(1 / 3, abs=0.015)


def test_size_biased_rejects_zero_weight():
    with pytest.raises(ValueError):
        size_biased_order([1.0, 0.0], replica_rng(0))


def test_aldous_walk_single_vertex():
    g, trace, masses = aldous_walk(WeightedVertexSet([0.7]), 1.0, replica_rng(5))
    assert g.num_edges == 0
    assert trace.component_sizes.tolist() == [1]
    assert masses.tolist() == [0.7]


def test_aldous_walk_tiny_q_gives_singletons():
    x = [3.0, 2.0, 1.0]
    _, trace, masses = aldous_walk(WeightedVertexSet(x), 1e-12, replica_rng(6))
    assert trace.component_sizes.tolist() == [1, 1, 1]
    assert sorted(masses.tolist()) == sorted(x)


def test_aldous_walk_bookkeeping():
    w = WeightedVertexSet(replica_rng(7).uniform(0.2, 1.0, size=40))
    g, trace, masses = aldous_walk(w, 3.0, replica_rng(8))
    assert trace.component_sizes.sum() == 40
    assert masses.sum() == pytest.approx(w.x.sum())
    # component k ends at the first visit to -k
    for k, b in enumerate(trace.boundaries, 1):
        assert trace.steps[b] == -k
        assert trace.steps[:b].min() > -k
    decomp = components(g)
    assert sorted(decomp.sizes.tolist()) == sorted(trace.component_sizes.tolist())
    edges_per_component = trace.component_sizes - 1 + trace.component_surplus()
    assert edges_per_component.sum() == g.num_edges


def test_aldous_walk_partition_law_matches_gen_gxq():
    w = WeightedVertexSet.uniform(3, 1.0)
    rng = replica_rng(9)
    walked = [tuple(sorted(aldous_walk(w, 0.6, rng)[1].component_sizes.tolist())) for _ in range(20_000)]
    direct = [tuple(sorted(components(gen_gxq(w, 0.6, rng)).sizes.tolist())) for _ in range(20_000)]
    assert tv_distance(empirical_pmf(walked), empirical_pmf(direct)) < 0.03


def test_riordan_single_blob_self_pairing():
    trace, g, masses = riordan_walk([0, 2, 0], replica_rng(10))
    assert trace.order.tolist() == [1]
    assert trace.component_surplus().tolist() == [1]
    assert trace.steps.tolist() == [0, -2]
    assert g.edge_list() == [(1, 1)]


def test_riordan_two_single_stub_blobs():
    trace, g, masses = riordan_walk([1, 1], replica_rng(11))
    assert trace.component_sizes.tolist() == [2]
    assert trace.component_surplus().tolist() == [0]
    assert g.num_edges == 1
    assert masses.tolist() == [2.0]


def test_riordan_increments_and_boundaries():
    rng = replica_rng(12)
    a = rng.integers(0, 4, size=200)
    a[0] += a.sum() % 2
    sizes = rng.integers(1, 5, size=200)
    trace, g, masses = riordan_walk(a, rng, blob_sizes=sizes)
    dz = np.diff(trace.steps)
    # Z moves by eta - 2 - 2 theta on every step
    assert np.array_equal(dz, trace.increments - 2 - 2 * trace.surplus_marks)
    for k, b in enumerate(trace.boundaries, 1):
        assert trace.steps[b] == -2 * k
    assert masses.sum() == sizes[a > 0].sum()
    assert trace.component_surplus().sum() == g.num_edges - (len(trace.order) - len(trace.boundaries))


def test_riordan_odd_total_drops_a_stub():
    trace, g, _ = riordan_walk([1, 1, 1], replica_rng(13))
    assert g.num_edges == 1


def test_assumption_diagnostics_arithmetic():
    report = assumption_diagnostics(WeightedVertexSet([1.0, 2.0]), 1.0)
    assert report["sigma2"] == 5
    assert report["sigma3"] == 9
    assert report["sigma3_over_sigma2_cubed"] == pytest.approx(9 / 125)
    assert report["scaling_factor"] == 5


def test_assumption_diagnostics_erdos_renyi_weights():
    n, lam = 1000, 0.7
    report = assumption_diagnostics(WeightedVertexSet.uniform(n, n ** (-2 / 3)), n ** (1 / 3) + lam)
    assert report["sigma3_over_sigma2_cubed"] == pytest.approx(1.0)
    assert report["lambda_estimate"] == pytest.approx(lam)


def test_assumption_diagnostics_with_blob_distances():
    report = assumption_diagnostics(WeightedVertexSet([1.0, 1.0]), 1.0, u=[0.0, 0.0], d_max=0.0)
    assert report["scaling_factor"] == pytest.approx(2.0)
    report = assumption_diagnostics(WeightedVertexSet([1.0, 1.0]), 1.0, u=[1.0, 1.0], d_max=2.0)
    assert report["scaling_factor"] == pytest.approx(1.0)
    assert "dmax_ratio" in report


def test_blob_counts():
    g = Graph.from_pairs(5, [(0, 1), (1, 2), (3, 4)])
    decomp = components(g)
    assert blob_counts(np.array([0, 0, 1, 2, 2]), decomp).tolist() == [2, 1]
