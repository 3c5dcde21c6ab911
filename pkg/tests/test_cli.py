import json

import numpy as np
import pytest

from optreg.cli import main
from optreg.sim.scenario import bundled_path


def _write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _doc(name):
    return json.loads(bundled_path(name).read_text())


def test_check_passes_on_bundled(capsys):
    assert main(["check", "example3"]) == 0
    out = capsys.readouterr().out
    for name in ("connectivity", "convexity_bounds", "regulator_rank", "minimality", "exosystem_observable",
                 "relative_degree", "minimum_phase"):
        assert name in out


def test_disconnected_graph_exit_3(tmp_path, capsys):
    doc = _doc("example2")
    doc["graph"]["edges"] = [[1, 2], [3, 4]]
    path = _write(tmp_path, doc)
    assert main(["check", path]) == 3
    assert main(["simulate", path, "-o", str(tmp_path / "out")]) == 3
    assert "connect" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_schema_error_exit_2(tmp_path):
    doc = _doc("example2")
    doc["integration"]["dt"] = -1
    assert main(["simulate", _write(tmp_path, doc)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[")
    assert main(["check", str(bad)]) == 2


def test_oracle_prints_theta(capsys):
    assert main(["oracle", "example2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["theta"] == pytest.approx(0.864, abs=1e-8)
    assert np.allclose(doc["y_star"], [4.57, 2.41, 1.69, 1.33], atol=1e-8)


def test_oracle_bracket_failure_exit_4(tmp_path):
    doc = _doc("example2")
    for a in doc["agents"]:
        a["cost"] = {"kind": "quadratic", "a": 1e-12, "b": 0.0, "c": 0.0, "d": 1e7}
    assert main(["oracle", _write(tmp_path, doc)]) == 4


def test_synthesize_writes_gains(tmp_path, capsys):
    out = tmp_path / "gains.json"
    assert main(["synthesize", "example3", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    a = doc["agents"][0]
    assert a["Lbar"]["shape"] == [2, 2] and len(a["Lbar"]["data"]) == 4
    assert a["high_gain"]["compensation_input"] == "eta"
    assert max(a["regulator"]["residuals"].values()) <= 1e-10
    assert "abscissa" in capsys.readouterr().err


def test_synthesize_json_is_strict_without_disturbance(tmp_path):
    out = tmp_path / "g1.json"
    assert main(["synthesize", "example1", "-o", str(out)]) == 0
    json.loads(out.read_text(), parse_constant=lambda c: pytest.fail(f"non-standard JSON constant {c}"))


def test_synthesis_failure_exit_3(tmp_path):
    doc = _doc("example3")
    # non-minimum-phase plant under the real-time law: refused by check, then by synthesis
    doc["agents"][0]["plant"] = {
        "A": [[0, 1, 0], [0, 0, 1], [-1, -1, -1]],
        "B": [[0], [0], [1]],
        "C": [[-2, 1, 0]],
        "E": [[0, 0], [0, 0], [1, 0]],
    }
    doc["agents"][0]["x0"] = [0, 0, 0]
    path = _write(tmp_path, doc)
    assert main(["simulate", path, "-o", str(tmp_path / "o")]) == 3
    assert main(["simulate", path, "--force", "-o", str(tmp_path / "o")]) == 3


def test_simulate_with_overrides(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["simulate", "example2", "--tend", "2", "--decimate", "100", "--poles-k1", "-3", "-o", str(out)])
    assert rc == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 1 + 21 * 4
    assert "optimality gap" in capsys.readouterr().out


def test_eps_sweep(tmp_path, capsys):
    rc = main(["simulate", "example3", "--tend", "20", "--decimate", "200", "--sweep", "eps=0.5,0.2", "-o", str(tmp_path)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)["optimality_gap"]
    assert set(summary) == {"0.5", "0.2"}
    assert (tmp_path / "eps=0.5" / "metrics.json").exists()


def test_divergence_exit_4(tmp_path, capsys):
    # eps = 1 is above the stability threshold for this network
    assert main(["simulate", "example3", "--eps", "1", "-o", str(tmp_path / "o")]) == 4
    assert "diverged" in capsys.readouterr().err


def test_invalid_poles_exit_3(tmp_path):
    assert main(["simulate", "example2", "--poles-k1", "5", "-o", str(tmp_path / "o")]) == 3


def test_check_flags_rhp_zero_under_realtime_law(tmp_path, capsys):
    doc = _doc("example3")
    doc["agents"][0]["plant"]["C"] = [[1, -1]]  # numerator 1 - s
    assert main(["check", _write(tmp_path, doc)]) == 3
    out = capsys.readouterr().out
    assert any(line.startswith("FAIL") and "minimum_phase" in line and "agent 1" in line for line in out.splitlines())


def test_check_example2_passes():
    assert main(["check", "example2"]) == 0


def test_simulate_example1_writes_metrics(tmp_path):
    assert main(["simulate", "example1", "--tend", "5", "-o", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert len(doc["runs"]) == 2


def test_oracle_example3(capsys):
    assert main(["oracle", "example3"]) == 0
    y = json.loads(capsys.readouterr().out)["y_star"]
    assert np.allclose(y, [2.2, 0.7, 2.0, 5.1], atol=0.1)
