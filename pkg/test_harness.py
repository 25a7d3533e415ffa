import json

import numpy as np
import pytest

from src import harness
from src.harness import (
    aggregate_rows,
    empirical_pmf,
    fit_exponent,
    ks_statistic,
    model_scaling,
    replica_observables,
    resolve_workers,
    run_sweep,
    simulate,
    tv_distance,
    universality_pipeline,
)
from src.models import ExperimentConfig, Graph
from src.samplers import replica_rng

IRG_PARAMS = {"kappa": [[1.5, 0.5], [0.5, 1.5]], "mu": [0.5, 0.5]}


def sweep_config(tmp_path, name="sweep.csv", **overrides):
    values = dict(
        model="er",
        n_grid=[50, 100, 200],
        lambda_grid=[0.0, 1.0],
        replicas=2,
        seed=7,
        output=str(tmp_path / name),
        observables=["C1", "C1_scaled", "surplus1"],
    )
    values.update(overrides)
    return ExperimentConfig(**values)


def test_fit_exponent_recovers_power_laws():
    ns = [100, 200, 400, 800]
    slope, stderr = fit_exponent([(n, 3 * n) for n in ns])
    assert slope == pytest.approx(1.0)
    assert stderr == pytest.approx(0.0, abs=1e-9)
    slope, _ = fit_exponent([(n, n ** (2 / 3)) for n in ns for _ in range(3)])
    assert slope == pytest.approx(2 / 3)


def test_fit_exponent_uses_medians():
    pairs = [(n, v) for n in (10, 100, 1000) for v in (n, n, 10 ** 6)]
    slope, _ = fit_exponent(pairs)
    assert slope == pytest.approx(1.0)


def test_fit_exponent_errors():
    with pytest.raises(ValueError):
        fit_exponent([(10, 1.0), (20, 2.0)])
    with pytest.raises(ValueError):
        fit_exponent([(10, 1.0), (20, 0.0), (40, 2.0)])


def test_ks_statistic():
    rng = replica_rng(1)
    a = rng.uniform(size=5000)
    assert ks_statistic(a, a) == 0.0
    assert ks_statistic(a, rng.uniform(0.5, 1.5, size=5000)) == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        ks_statistic([], a)


def test_tv_distance():
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([1.0], [0.5, 0.5]) == 0.5
    assert tv_distance({"a": 0.5, "b": 0.5}, {"a": 0.5, "c": 0.5}) == 0.5
    with pytest.raises(ValueError):
        tv_distance([], [1.0])
    with pytest.raises(ValueError):
        tv_distance({}, {"a": 1.0})


def test_empirical_pmf():
    assert empirical_pmf(["x", "y", "x", "x"]) == {"x": 0.75, "y": 0.25}


def test_replica_observables_of_a_small_graph():
    g = Graph.from_pairs(6, [(0, 1), (1, 2), (2, 0), (3, 4)])
    scaling = model_scaling("er", {}, 8)
    values = replica_observables(g, harness.OBSERVABLES, scaling)
    assert values["C1"] == 3 and values["C2"] == 2
    assert values["C1_scaled"] == pytest.approx(3 / 4)
    assert values["surplus1"] == 1
    assert values["diam1"] == 1
    assert values["s2"] == pytest.approx((9 + 4 + 1) / 6)
    assert values["components"] == 3


def test_replica_observables_rejects_unknown():
    with pytest.raises(ValueError):
        replica_observables(Graph(2), ["C3"], model_scaling("er", {}, 2))


def test_model_scaling_of_erdos_renyi():
    s = model_scaling("er", {}, 1000, lam=0.5)
    assert s.distance == pytest.approx(0.1)
    assert s.mass == pytest.approx(0.01)
    assert s.crit_lambda == 0.5
    with pytest.raises(ValueError):
        model_scaling("ba", {}, 10)


@pytest.mark.parametrize("model,params", [
    ("er", {}),
    ("cm_percolation", {"degree": 3}),
    ("cm_dynamic", {"poisson_mean": 2.0, "min_degree": 1}),
    ("irg", IRG_PARAMS),
])
def test_simulate_models(model, params):
    g = simulate(model, params, 400, 0.0, replica_rng(2))
    assert g.n == 400
    assert g.num_edges > 0


def test_simulate_percolation_with_fixed_retention():
    g = simulate("cm_percolation", {"degree": 3, "p": 1.0}, 100, 0.0, replica_rng(3))
    assert np.array_equal(g.degrees(), np.full(100, 3))


def test_simulate_cm_needs_degree_law():
    with pytest.raises(ValueError):
        simulate("cm_dynamic", {}, 10, 0.0, replica_rng(0))


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("CRITWIN_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    assert resolve_workers(0) == 1
    monkeypatch.setenv("CRITWIN_WORKERS", "many")
    assert resolve_workers() >= 1


def test_aggregate_rows():
    rows = [{"n": 10, "lambda": 0.0, "replica": r, "C1": v} for r, v in enumerate([1, 2, 3, 4, 5])]
    [agg] = aggregate_rows(rows, ["C1"])
    assert agg["count"] == 5
    assert agg["mean"] == 3.0 and agg["median"] == 3.0
    assert agg["q10"] == pytest.approx(1.4)
    assert agg["q90"] == pytest.approx(4.6)


def test_run_sweep_rows_and_outputs(tmp_path):
    cfg = sweep_config(tmp_path)
    result = run_sweep(cfg, workers=1)
    assert len(result.rows) == result.expected_rows == 12
    keys = [(r["n"], r["lambda"], r["replica"]) for r in result.rows]
    assert keys == sorted(keys)
    assert "C1@0" in result.exponents
    assert (tmp_path / "sweep.csv").exists()
    assert (tmp_path / "sweep_aggregates.csv").exists()
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert summary["metadata"]["rows"] == 12
    assert summary["metadata"]["config"]["model"] == "er"


def test_run_sweep_is_deterministic(tmp_path):
    run_sweep(sweep_config(tmp_path, "first.csv"), workers=1)
    run_sweep(sweep_config(tmp_path, "second.csv"), workers=1)
    assert (tmp_path / "first.csv").read_bytes() == (tmp_path / "second.csv").read_bytes()


def test_run_sweep_resumes_from_state(tmp_path, monkeypatch):
    state_file = str(tmp_path / "state.json")
    first = run_sweep(sweep_config(tmp_path, "a.csv"), workers=1, state_file=state_file)

    def fail(*args):
        raise AssertionError("replica was recomputed")

    monkeypatch.setattr(harness, "_replica_task", fail)
    second = run_sweep(sweep_config(tmp_path, "b.csv"), workers=1, state_file=state_file)
    assert second.rows == first.rows
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_run_sweep_restarts_for_a_different_config(tmp_path):
    state_file = str(tmp_path / "state.json")
    run_sweep(sweep_config(tmp_path, replicas=1), workers=1, state_file=state_file)
    result = run_sweep(sweep_config(tmp_path, seed=8, replicas=1), workers=1, state_file=state_file)
    assert len(result.rows) == 6
    saved = json.loads((tmp_path / "state.json").read_text())
    assert saved["config"]["seed"] == 8


def test_run_sweep_rejects_unknown_model(tmp_path):
    with pytest.raises(ValueError):
        run_sweep(sweep_config(tmp_path, model="ba"), workers=1)


def test_pipeline_conserves_blob_mass():
    n = 3000
    report = universality_pipeline("er", {}, n, replica_rng(4), top=2)
    assert report.masses.sum() == pytest.approx(n ** (1 / 3))
    assert np.all(np.diff(report.masses) <= 0)
    assert len(report.sizes) == 2
    assert report.sizes[0] >= report.sizes[1]
    assert np.all(report.surpluses >= 0)
    assert np.all(report.diameters >= 0)
    assert report.scaling_factor > 0
    assert report.warnings == []


def test_pipeline_warns_outside_delta_range():
    report = universality_pipeline("er", {}, 1000, replica_rng(5), delta=0.3, top=1)
    assert any("outside" in w for w in report.warnings)


def test_pipeline_for_dynamic_configuration_model():
    report = universality_pipeline("cm_dynamic", {"degree": 3}, 2000, replica_rng(6), top=1)
    assert report.free_weight_ratio is not None
    assert report.masses.sum() > 0


def test_pipeline_rejects_unsupported_model():
    with pytest.raises(ValueError):
        universality_pipeline("bsr", {}, 100, replica_rng(0))
