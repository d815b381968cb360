from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from closednet.cli import export_csv, run
from closednet.des import SimConfig, simulate
from closednet.fluid import solve_constant_env, solve_semi_markov
from closednet.scenario import load_scenario

from conftest import four_state

ROOT = Path(__file__).resolve().parents[1]
FOUR_STATE = ROOT / "scenarios" / "four_state.json"
RELIABILITY = ROOT / "scenarios" / "two_station_reliability.json"


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def write_scenario(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def four_state_doc():
    return json.loads(FOUR_STATE.read_text())


class TestFluidCommand:
    def test_value_at_horizon(self, tmp_path):
        out = tmp_path / "f.csv"
        assert run(["fluid", "--scenario", str(FOUR_STATE), "--mode", "example", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["t", "state", "q_1", "q_2", "frozen_mask"]
        assert len(rows) - 1 == 3001
        last = rows[-1]
        assert float(last[0]) == 3.0
        assert float(last[2]) == pytest.approx(0.16661, abs=1e-4)

    def test_frozen_mask_bits(self, tmp_path):
        out = tmp_path / "f.csv"
        run(["fluid", "--scenario", str(FOUR_STATE), "--out", str(out)])
        rows = {row[0]: row for row in read_rows(out)[1:]}
        assert rows["0.3"][4] == "3" and rows["0.3"][2] == "0"
        assert rows["0.05"][4] == "0"
        assert rows["2"][1] == "2"

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run(["fluid", "--scenario", str(FOUR_STATE), "--mode", "ode", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_sample_step_flag(self, tmp_path):
        out = tmp_path / "f.csv"
        run(["fluid", "--scenario", str(FOUR_STATE), "--sample-step", "0.01", "--out", str(out)])
        assert len(read_rows(out)) == 302


class TestOtherCommands:
    def test_validate_ok(self, tmp_path):
        out = tmp_path / "v.json"
        assert run(["validate", "--scenario", str(FOUR_STATE), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["valid"] and doc["monotone"]["property1"] and doc["monotone"]["property2"]

    def test_validate_bad_routing(self, tmp_path, capsys):
        doc = four_state_doc()
        doc["environment"]["routing"][1] = [0.5, 0.4]
        assert run(["validate", "--scenario", str(write_scenario(tmp_path, doc))]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ValidationError"
        assert [v["code"] for v in err["violations"]] == ["RoutingNotStochastic"]

    def test_unknown_key_rejected(self, tmp_path, capsys):
        doc = four_state_doc()
        doc["network"]["colour"] = "red"
        assert run(["validate", "--scenario", str(write_scenario(tmp_path, doc))]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "ScenarioError"

    def test_unknown_top_level_block(self, tmp_path):
        doc = four_state_doc()
        doc["plot"] = {}
        assert run(["validate", "--scenario", str(write_scenario(tmp_path, doc))]) == 1

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run(["validate", "--scenario", str(p)]) == 1

    def test_shape_error_is_validation_error(self, tmp_path, capsys):
        doc = four_state_doc()
        doc["network"]["mu"] = [2.0]
        assert run(["fluid", "--scenario", str(write_scenario(tmp_path, doc))]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["violations"][0]["code"] == "ShapeMismatch"

    def test_reliability(self, tmp_path):
        out = tmp_path / "r.json"
        assert run(["reliability", "--scenario", str(RELIABILITY), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["t_gamma"] == pytest.approx(0.025647, abs=1e-5)
        assert doc["branch"] == "gamma<=alpha"

    def test_reliability_infeasible_is_runtime_error(self, tmp_path, capsys):
        doc = json.loads(RELIABILITY.read_text())
        doc["reliability"]["k"] = 3
        assert run(["reliability", "--scenario", str(write_scenario(tmp_path, doc))]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "InfeasibleConfidence"

    def test_compare(self, tmp_path):
        out = tmp_path / "c.json"
        assert run(["compare", "--scenario", str(FOUR_STATE), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["preferred"] == "b"
        assert doc["total_b"] == pytest.approx(1.0 + doc["x_b"])

    def test_simulate(self, tmp_path):
        doc = four_state_doc()
        doc["simulate"] = {"N": 500, "replications": 2, "grid": 0.01}
        out = tmp_path / "d.csv"
        p = write_scenario(tmp_path, doc)
        assert run(["simulate", "--scenario", str(p), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["rep", "t", "q_1", "q_2"]
        assert len(rows) - 1 == 2 * 301
        again = tmp_path / "d2.csv"
        run(["simulate", "--scenario", str(p), "--out", str(again)])
        assert out.read_bytes() == again.read_bytes()
        other = tmp_path / "d3.csv"
        run(["simulate", "--scenario", str(p), "--seed", "99", "--out", str(other)])
        assert out.read_bytes() != other.read_bytes()

    def test_converge(self, tmp_path):
        doc = four_state_doc()
        doc["converge"] = {"Ns": [50, 1000], "replications": 3, "grid": 0.01}
        out = tmp_path / "cv.json"
        assert run(["converge", "--scenario", str(write_scenario(tmp_path, doc)), "--out", str(out)]) == 0
        rows = json.loads(out.read_text())["rows"]
        assert [r["N"] for r in rows] == [50, 1000]

    def test_module_entry_point(self, tmp_path):
        out = tmp_path / "r.json"
        proc = subprocess.run(
            [sys.executable, "-m", "closednet", "reliability", "--scenario", str(RELIABILITY), "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(out.read_text())["t_gamma"] == pytest.approx(0.025647, abs=1e-5)


class TestExportCsv:
    def test_fluid_rows_and_precision(self, tmp_path):
        env, net, path = four_state()
        out = tmp_path / "f.csv"
        export_csv(solve_semi_markov(env, path, net), out, 1e-3)
        rows = read_rows(out)
        assert len(rows) == 3002
        ts = np.array([float(r[0]) for r in rows[1:]])
        assert np.all(np.diff(ts) > 0)
        assert all(len(v.replace("-", "").replace(".", "").lstrip("0").split("e")[0]) <= 9 for r in rows[1:] for v in r[2:4])

    def test_constant_env_state_column(self, tmp_path):
        out = tmp_path / "f.csv"
        export_csv(solve_constant_env([1.0], [2.0], [0.1], 1.0), out, 0.1)
        assert {r[1] for r in read_rows(out)[1:]} == {"-1"}

    def test_simulation_result(self, tmp_path):
        env, net, path = four_state()
        result = simulate(env, path, net, SimConfig(100, sample_grid=np.linspace(0, 3, 4), replications=2))
        out = tmp_path / "d.csv"
        export_csv(result, out)
        rows = read_rows(out)
        assert [r[0] for r in rows[1:]] == ["0"] * 4 + ["1"] * 4

    def test_rejects_other_objects(self, tmp_path):
        with pytest.raises(TypeError):
            export_csv(object(), tmp_path / "x.csv")


def test_alternative_overrides():
    sc = load_scenario(FOUR_STATE)
    alt = sc.alternative()
    assert list(alt.environment().lam) == [2, 4, 4, 4]
    assert list(sc.environment().lam) == [2, 4, 6, 6]
