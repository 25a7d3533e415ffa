import csv
import json

import numpy as np
import pytest

from src.csv_output import format_value, write_edge_list, write_susceptibility_csv, write_sweep_csv
from src.input_parser import (
    load_config,
    load_kernel,
    load_space,
    parse_degrees,
    parse_edge_list,
    parse_grid,
    save_space,
)
from src.main import build_parser
from src.models import ExperimentConfig, Graph, MeasuredMetricSpace
from src.observables import graph_susceptibilities
from src.state_manager import SweepStateManager


def test_parse_degrees_skips_comments_and_bad_lines(tmp_path, caplog):
    path = tmp_path / "degrees.txt"
    path.write_text("# cubic-ish\n3\n2  # inline\n\nx\n-1\n1\n")
    assert parse_degrees(str(path)).tolist() == [3, 2, 1]
    assert caplog.text.count("Skipping invalid degree") == 2


def test_edge_list_round_trip(tmp_path):
    g = Graph.from_pairs(5, [(0, 1), (1, 1), (3, 4), (0, 1)])
    path = tmp_path / "graph.edges"
    assert write_edge_list(g, str(path)) == 4
    back = parse_edge_list(str(path))
    assert back.n == 5
    assert back.edge_list() == g.edge_list()


def test_edge_list_header_sets_vertex_count(tmp_path):
    path = tmp_path / "graph.edges"
    write_edge_list(Graph.from_pairs(6, [(0, 1)]), str(path))
    assert path.read_text().splitlines()[0] == "n=6"
    path.write_text("n=6\n0 1\n1 2\n")
    g = parse_edge_list(str(path))
    assert g.n == 6
    assert g.edge_list() == [(0, 1), (1, 2)]


def test_edge_list_first_edge_is_not_a_header(tmp_path, caplog):
    path = tmp_path / "plain.edges"
    path.write_text("5 3\n0 1\n1 2\n2 3\n")
    g = parse_edge_list(str(path))
    assert g.n == 6
    assert g.edge_list() == [(5, 3), (0, 1), (1, 2), (2, 3)]
    assert "Skipping" not in caplog.text


def test_edge_list_without_header(tmp_path):
    path = tmp_path / "plain.edges"
    path.write_text("0 2\n2 3\n")
    g = parse_edge_list(str(path))
    assert g.n == 4
    assert g.edge_list() == [(0, 2), (2, 3)]
    assert parse_edge_list(str(path), n=10).n == 10


def test_edge_list_bad_lines_and_range(tmp_path, caplog):
    path = tmp_path / "bad.edges"
    path.write_text("0 1\n1 2 3\na b\n1 2\n")
    g = parse_edge_list(str(path))
    assert g.edge_list() == [(0, 1), (1, 2)]
    assert caplog.text.count("Skipping invalid edge") == 2
    with pytest.raises(ValueError):
        parse_edge_list(str(path), n=2)


def test_load_kernel(tmp_path):
    path = tmp_path / "kernel.json"
    path.write_text(json.dumps({"kappa": [[1.5, 0.5], [0.5, 1.5]], "mu": [0.5, 0.5], "b": [0.1, -0.1]}))
    kernel = load_kernel(str(path))
    assert kernel.K == 2
    assert kernel.A is None
    path.write_text(json.dumps({"kappa": [[1.0]]}))
    with pytest.raises(ValueError):
        load_kernel(str(path))


def test_space_files(tmp_path):
    space = MeasuredMetricSpace(dist=[[0, 1, 2], [1, 0, 1], [2, 1, 0]], mass=[0.2, 0.3, 0.5])
    path = tmp_path / "spaces" / "x.json"
    save_space(space, str(path))
    loaded = load_space(str(path))
    assert np.allclose(loaded.dist, space.dist)
    path.write_text(json.dumps({"points": 3, "dist": [1, 5, 1], "mass": [1, 1, 1]}))
    with pytest.raises(ValueError):
        load_space(str(path))


def test_load_config(tmp_path, caplog):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"model": "er", "n_grid": [100, 200], "replicas": 3, "colour": "blue"}))
    cfg = load_config(str(path))
    assert cfg.model == "er" and cfg.replicas == 3
    assert "colour" in caplog.text
    path.write_text(json.dumps({"n_grid": [100]}))
    with pytest.raises(ValueError):
        load_config(str(path))
    path.write_text("{not json")
    with pytest.raises(ValueError):
        load_config(str(path))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(model="er", n_grid=[200, 100])
    with pytest.raises(ValueError):
        ExperimentConfig(model="er", n_grid=[100], replicas=0)


def test_format_value():
    assert format_value(None) == ""
    assert format_value(1 / 3) == "0.333333333333"
    assert format_value(7) == "7"


def test_susceptibility_csv(tmp_path):
    records = [graph_susceptibilities(Graph.from_pairs(3, [(0, 1)]), t=t) for t in (0.0, 0.5)]
    path = tmp_path / "out" / "s.csv"
    assert write_susceptibility_csv(records, str(path)) == 2
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert rows[1]["t"] == "0.5"
    assert rows[0]["D"] == "0.666666666667"


def test_sweep_csv_blank_for_missing_values(tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv([{"n": 10, "lambda": 0.0, "replica": 0, "C1": 4, "diam1": None}],
                    ["n", "lambda", "replica", "C1", "diam1"], str(path))
    lines = path.read_text().splitlines()
    assert lines == ["n,lambda,replica,C1,diam1", "10,0,0,4,"]


def config(**overrides):
    values = dict(model="er", n_grid=[10, 20, 40], replicas=2, output="a.csv")
    values.update(overrides)
    return ExperimentConfig(**values)


def test_state_manager_round_trip(tmp_path):
    state_file = str(tmp_path / "state" / "sweep.json")
    manager = SweepStateManager(state_file)
    manager.load()
    assert manager.matches(config())
    manager.record({"n": 20, "lambda": 0.0, "replica": 1, "C1": 5})
    manager.record({"n": 10, "lambda": 0.0, "replica": 0, "C1": 3})
    manager.save()

    restored = SweepStateManager(state_file)
    restored.load()
    assert restored.matches(config(output="elsewhere.csv"))
    assert not restored.matches(config(seed=1))
    assert [r["n"] for r in restored.rows()] == [10, 20]
    assert restored.get_row((20, 0.0, 1))["C1"] == 5
    assert restored.get_row((40, 0.0, 0)) is None


def test_state_manager_reset_and_corrupt_file(tmp_path, caplog):
    path = tmp_path / "state.json"
    path.write_text("{broken")
    manager = SweepStateManager(str(path))
    manager.load()
    assert "Failed to parse sweep state" in caplog.text
    assert manager.rows() == []
    manager.record({"n": 10, "lambda": 0.0, "replica": 0})
    manager.reset(config())
    assert manager.rows() == []
    assert manager.matches(config())


def test_parse_grid():
    assert parse_grid("0.3,0.1,0.2").tolist() == [0.1, 0.2, 0.3]
    assert parse_grid("0:1:5").tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        parse_grid("0:1")
    with pytest.raises(ValueError):
        parse_grid("0:1:0")


def run_cli(*argv):
    args = build_parser().parse_args(list(argv))
    args.func(args)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_limits_command_writes_bohman_frieze_trajectories(tmp_path):
    out = tmp_path / "bf.csv"
    run_cli("limits", "--model", "bf", "--grid", "0:0.6:4", "--output", str(out))
    rows = read_rows(out)
    assert [float(r["t"]) for r in rows] == pytest.approx([0.0, 0.2, 0.4, 0.6])
    assert list(rows[0]) == ["t", "x", "s2", "s3", "y", "v"]
    assert float(rows[0]["x"]) == 1.0 and float(rows[0]["s2"]) == 1.0
    assert float(rows[-1]["s2"]) > float(rows[1]["s2"])
    constants = {r["name"]: r["value"] for r in read_rows(tmp_path / "bf_constants.csv")}
    assert float(constants["alpha"]) == pytest.approx(1.063, abs=0.01)
    assert constants["v_form"] == "primary"


def test_limits_command_writes_cm_trajectories(tmp_path):
    degrees = tmp_path / "degrees.txt"
    degrees.write_text("3\n" * 10)
    out = tmp_path / "cm.csv"
    run_cli("limits", "--model", "cm", "--degrees", str(degrees), "--grid", "0,0.1", "--output", str(out))
    rows = read_rows(out)
    assert len(rows) == 2
    assert float(rows[0]["s2"]) == pytest.approx(9.0)
    constants = {r["name"]: float(r["value"]) for r in read_rows(tmp_path / "cm_constants.csv")}
    assert constants["nu"] == pytest.approx(2.0)


def test_limits_command_flattens_irg_constants(tmp_path):
    kernel = tmp_path / "kernel.json"
    kernel.write_text(json.dumps({"kappa": [[1.5, 0.5], [0.5, 1.5]], "mu": [0.5, 0.5]}))
    out = tmp_path / "irg.csv"
    run_cli("limits", "--model", "irg", "--kernel", str(kernel), "--output", str(out))
    constants = {r["name"]: r["value"] for r in read_rows(out)}
    assert float(constants["u[1]"]) == pytest.approx(0.5)
    assert "M[1][0]" in constants
    assert constants["zeta"] == ""
