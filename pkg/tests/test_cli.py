import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tacempc.cli import csv_header, main
from tacempc.config import load_config, parse_history
from tacempc.errors import ConfigError


# ---------------------------------------------------------------------------
# configuration loading


def test_load_builtin_defaults():
    cfg = load_config(model_name="mueller-koehler")
    assert (cfg.N, cfg.T, cfg.K) == (12, 6, 30)
    assert cfg.ss.x_s[0] == pytest.approx(2.0)
    np.testing.assert_array_equal(cfg.initial_state(), cfg.ss.x_s)
    assert cfg.history().columns.shape == (1, 5)


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError):
        load_config(model_name="no-such-model")


def test_history_shorthands():
    cfg = load_config(model_name="mueller-koehler")
    steady = parse_history("steady", cfg.model, cfg.ss, 6)
    np.testing.assert_array_equal(steady.columns, np.zeros((1, 5)))
    # constant:x,u evaluates h there: h(1, 1) = -2
    const = parse_history("constant:1,1", cfg.model, cfg.ss, 4)
    np.testing.assert_array_equal(const.columns, [[-2.0, -2.0, -2.0]])
    explicit = parse_history("-2,-2,-2,-2,-1", cfg.model, cfg.ss, 6)
    np.testing.assert_array_equal(explicit.columns, [[-2, -2, -2, -2, -1]])
    with pytest.raises(ConfigError):
        parse_history("constant:1", cfg.model, cfg.ss, 4)  # needs n + m numbers
    with pytest.raises(ConfigError):
        parse_history("-2,-2", cfg.model, cfg.ss, 6)  # wrong length


def test_config_file_sections(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "model": "mueller-koehler",
        "experiment": {"N": 10, "T": 3, "K": 4, "x0": [1.0],
                       "history": "constant:1,1"},
        "solver": {"feas_tol": 1e-7, "seed": 3},
    }))
    cfg = load_config(str(path))
    assert (cfg.N, cfg.T, cfg.K) == (10, 3, 4)
    assert cfg.options.feas_tol == 1e-7
    assert cfg.options.seed == 3
    np.testing.assert_array_equal(cfg.initial_state(), [1.0])


def test_config_overrides_route_to_sections(tmp_path):
    cfg = load_config(model_name="mueller-koehler",
                      overrides={"N": "10", "T": 3, "seed": 7, "K": None})
    assert cfg.N == 10 and cfg.T == 3 and cfg.K == 30
    assert cfg.options.seed == 7


def test_config_errors(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad_json))
    with pytest.raises(ConfigError):
        load_config(model_name="mueller-koehler", overrides={"N": 3, "T": 6})
    with pytest.raises(ConfigError):
        load_config(model_name="mueller-koehler", overrides={"x0": "1,2"})
    cfg_file = tmp_path / "solver.json"
    cfg_file.write_text(json.dumps({"solver": {"bogus_option": 1}}))
    with pytest.raises(ConfigError):
        load_config(str(cfg_file))


# ---------------------------------------------------------------------------
# subcommands


def test_steady_state_command(capsys):
    rc = main(["steady-state", "--model", "mueller-koehler"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "x_s = 2" in out
    assert "u_s = 1" in out
    assert "ell_s = 2" in out
    assert "h_s = 0" in out


def test_steady_state_without_output_constraint(tmp_path, capsys):
    path = tmp_path / "droph.json"
    path.write_text(json.dumps({
        "model": {"builtin": "mueller-koehler", "h": ["0 * x1"],
                  "steady_state": None, "lam": "0 * x1", "L_h": 1.0},
    }))
    rc = main(["steady-state", "--config", str(path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "x_s = 3" in out
    assert "ell_s = 1" in out


def test_steady_state_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "crossed.json"
    path.write_text(json.dumps({
        "model": {"builtin": "mueller-koehler",
                  "z_lower": [10.0, -10.0], "z_upper": [-10.0, 10.0]},
    }))
    rc = main(["steady-state", "--config", str(path)])
    err = capsys.readouterr().err
    assert rc == 1
    assert "error:" in err


def test_simulate_single_step_from_steady(tmp_path, capsys):
    rc = main(["simulate", "--model", "mueller-koehler",
               "--K", "1", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "trace.csv").read_text().strip().split("\n")
    assert lines[0] == csv_header(1, 1, 1)
    assert len(lines) == 2  # header + one step
    row = lines[1].split(",")
    assert row[0] == "0"
    assert float(row[1]) == pytest.approx(2.0)  # starts at x_s
    assert float(row[4]) == pytest.approx(2.0, abs=1e-3)  # ell near ell_s
    assert row[-1] == ""  # W undefined for a 1-step run


def _simulate_reference(tmp_path, K=8, svg=False):
    args = ["simulate", "--model", "mueller-koehler",
            "--K", str(K), "--x0", "2", "--history=-2,-2,-2,-2,-1",
            "--out", str(tmp_path)]
    if svg:
        args.append("--svg")
    return main(args)


def test_simulate_csv_layout(tmp_path, capsys):
    rc = _simulate_reference(tmp_path)
    assert rc == 0
    lines = (tmp_path / "trace.csv").read_text().strip().split("\n")
    assert lines[0] == "k,x_1,u_1,h_1,ell,Jstar,Jtildestar,Hnorm,What,W"
    assert len(lines) == 9
    rows = [line.split(",") for line in lines[1:]]
    # W column is empty for the last T - 1 = 5 rows, filled before that
    for row in rows[:3]:
        assert row[-1] != ""
    for row in rows[3:]:
        assert row[-1] == ""
    # What is defined on every row
    assert all(row[-2] != "" for row in rows)


def test_simulate_csv_round_trip(tmp_path, capsys):
    # the 12-significant-digit format must reproduce the dynamics:
    # reparsing x, u and applying f matches the next printed state
    rc = _simulate_reference(tmp_path)
    assert rc == 0
    lines = (tmp_path / "trace.csv").read_text().strip().split("\n")
    rows = [line.split(",") for line in lines[1:]]
    for prev, nxt in zip(rows, rows[1:]):
        x, u = float(prev[1]), float(prev[2])
        assert float(nxt[1]) == pytest.approx(x * u, rel=1e-11)
        assert float(prev[3]) == pytest.approx(2 * x + u - 5, rel=1e-11, abs=1e-11)


def test_simulate_svg(tmp_path, capsys):
    rc = _simulate_reference(tmp_path, svg=True)
    assert rc == 0
    root = ET.parse(tmp_path / "chart.svg").getroot()
    assert root.get("width") == "800"
    assert root.get("height") == "480"
    ns = "{http://www.w3.org/2000/svg}"
    names = {el.get("data-series") for el in root.iter(f"{ns}polyline")}
    assert {"Jstar", "Jtildestar", "Hnorm", "What", "W"} <= names


def test_simulate_infeasible_exit_code(tmp_path, capsys):
    rc = main(["simulate", "--model", "mueller-koehler",
               "--T", "2", "--K", "2", "--x0", "2", "--history", "40",
               "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert rc == 2
    assert "halted" in captured.err


def test_turnpike_command(capsys):
    rc = main(["turnpike", "--model", "mueller-koehler",
               "--T", "3", "--x0", "1", "--history=constant:1,1",
               "--N", "10,12"])
    out = capsys.readouterr().out
    assert rc == 0
    lines = [line for line in out.strip().split("\n") if line.startswith("N=")]
    assert len(lines) == 2
    qs = [int(line.split("Q=")[1].split(",")[0]) for line in lines]
    assert qs[1] >= qs[0]
    assert all("holds=True" in line for line in lines)
