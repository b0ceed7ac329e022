import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import random_measure
from vecot import induced_demand, sample_achievable
from vecot.cli import EXIT_CAP, EXIT_DIVERGED, EXIT_INPUT, EXIT_OK, main
from vecot.io import instance_to_dict
from vecot.order import kernel_pushforward, random_kernel

SVG = "{http://www.w3.org/2000/svg}"


def _dump(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr().out


@pytest.fixture
def trivial(tmp_path):
    """Negative costs: at zero prices every point goes to its cheapest agent with no ties."""
    rng = np.random.default_rng(0)
    m = random_measure(rng, 8, 2)
    costs = -rng.uniform(0.5, 1.5, size=(2, 8))
    target = induced_demand(m, costs, np.zeros((2, 2)))
    return (_dump(tmp_path / "inst.json", instance_to_dict(m, costs)),
            _dump(tmp_path / "target.json", {"demand": target.tolist()}))


@pytest.fixture
def hard(tmp_path):
    rng = np.random.default_rng(1)
    m = random_measure(rng, 30, 2)
    costs = rng.random((3, 30))
    target, _ = sample_achievable(m, 3, seed=1)
    return (_dump(tmp_path / "inst.json", instance_to_dict(m, costs)),
            _dump(tmp_path / "target.json", target.tolist()))


@pytest.fixture
def malformed(tmp_path):
    doc = {"points": [[0, 0], [1, 0]], "weights": [1, 1], "densities": [[0.5, 0.5], [0.9, 0.3]]}
    return _dump(tmp_path / "bad.json", doc), _dump(tmp_path / "t.json", [[0.1, 0.1]])


@pytest.fixture
def pair_file(tmp_path):
    rng = np.random.default_rng(2)
    mx = random_measure(rng, 6, 2)
    my = kernel_pushforward(mx, random_kernel(6, 4, seed=rng), rng.random((4, 2)))
    doc = {"x": mx.to_dict(), "y": my.to_dict(), "pair_cost": rng.random((6, 4)).tolist()}
    return _dump(tmp_path / "pair.json", doc)


def test_solve_trivial_exits_zero(capsys, trivial):
    code, out = _run(capsys, ["solve", *trivial])
    rep = json.loads(out)
    assert code == EXIT_OK
    assert rep["status"] == "converged" and rep["iterations"] == 0
    assert rep["residual_norm"] == 0.0
    assert "timings" not in rep


def test_solve_witness_exits_two(capsys):
    code, out = _run(capsys, ["solve", "--witness"])
    assert code == EXIT_DIVERGED
    assert json.loads(out)["status"] == "diverged"


def test_solve_iteration_cap_exits_three(capsys, hard):
    code, out = _run(capsys, ["solve", *hard, "--max-iter", "3"])
    assert code == EXIT_CAP
    assert json.loads(out)["status"] == "iteration_cap"


def test_malformed_densities_exit_one(capsys, malformed):
    code, out = _run(capsys, ["solve", *malformed])
    assert code == EXIT_INPUT
    assert json.loads(out) == {"error": {"type": "NonSimplexRow", "row": 1,
                                         "message": json.loads(out)["error"]["message"]}}


@pytest.mark.parametrize("argv", [["solve"], ["frobnicate"], ["check", "missing.json", "t.json"],
                                  ["witness", "2", "3", "--no-grid", "--no-solver"]])
def test_usage_and_io_errors_exit_one(capsys, argv):
    code, out = _run(capsys, argv)
    assert code == EXIT_INPUT
    assert "error" in json.loads(out)


def test_invalid_json_exit_one(capsys, tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text("{not json")
    code, out = _run(capsys, ["check", str(bad), str(bad)])
    assert code == EXIT_INPUT and json.loads(out)["error"]["type"] == "SchemaError"


def test_solve_writes_report_and_history(capsys, hard, tmp_path):
    out = tmp_path / "rep.json"
    code, _ = _run(capsys, ["solve", *hard, "--out", str(out), "--step", "polyak"])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    lines = (tmp_path / "rep.history.csv").read_text().splitlines()
    assert lines[0] == "iter,objective,residual_inf,price_frobenius"
    assert len(lines) == rep["iterations"] + 1
    assert rep["history"] == "rep.history.csv"


def test_solve_reports_are_byte_identical(capsys, hard, tmp_path):
    out = tmp_path / "rep.json"
    runs = []
    for _ in range(2):
        main(["solve", *hard, "--seed", "4", "--max-iter", "400", "--out", str(out)])
        runs.append((out.read_bytes(), (tmp_path / "rep.history.csv").read_bytes()))
    capsys.readouterr()
    assert runs[0] == runs[1]


def test_timings_only_on_request(capsys, trivial):
    _, out = _run(capsys, ["solve", *trivial, "--timings"])
    assert "total_s" in json.loads(out)["timings"]


def test_check_achievable(capsys, trivial):
    code, out = _run(capsys, ["check", *trivial])
    rep = json.loads(out)
    assert code == EXIT_OK and rep["verdict"] is True and rep["mode"] == "exact"
    assert len(rep["labels"]) == 8


def test_check_excess_mass(capsys, trivial, tmp_path):
    t = _dump(tmp_path / "big.json", [[100.0, 0.0], [0.0, 0.0]])
    code, out = _run(capsys, ["check", trivial[0], t])
    rep = json.loads(out)
    assert code == EXIT_OK and rep["verdict"] is False
    assert [v["layer"] for v in rep["violations"]] == [0]


def test_check_downgrades_when_too_large(capsys, hard):
    code, out = _run(capsys, ["check", *hard])
    rep = json.loads(out)
    assert code == EXIT_OK and rep["mode"] == "relaxed" and rep["verdict"] is True
    assert rep["warnings"][0].startswith("TooLarge")


def test_check_relaxed_flag(capsys, trivial):
    _, out = _run(capsys, ["check", *trivial, "--relaxed"])
    rep = json.loads(out)
    assert rep["mode"] == "relaxed" and rep["verdict"] is True


def test_witness_files_feed_check(capsys, tmp_path):
    inst, tgt = tmp_path / "w.json", tmp_path / "wt.json"
    code, out = _run(capsys, ["witness", "--grid-num", "5", "--instance-out", str(inst),
                              "--target-out", str(tgt)])
    rep = json.loads(out)
    assert code == EXIT_OK
    assert rep["instance"]["witness"]["w"] == [0.0, 1.0, 2.0]
    assert rep["evidence"]["threshold"] == [2.0, 1.0]
    assert rep["evidence"]["grid_equilibria"] == 0
    assert rep["uniqueness"] == {"unique": True, "count": 1}
    code, out = _run(capsys, ["check", str(inst), str(tgt)])
    rep = json.loads(out)
    assert rep["verdict"] is True and rep["count"] == 1
    # the stored base prices seed the solver, which then diverges
    code, _ = _run(capsys, ["solve", str(inst), str(tgt)])
    assert code == EXIT_DIVERGED


def test_witness_byte_identical(capsys):
    outs = [_run(capsys, ["witness", "--grid-num", "3", "--seed", "1"])[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_order_pushforward(capsys, pair_file):
    code, out = _run(capsys, ["order", pair_file, "--seed", "0"])
    rep = json.loads(out)
    assert code == EXIT_OK
    assert rep["kernel_exists"] and rep["convex_criterion"] and rep["dominates_n"]
    assert rep["consistent"]
    assert rep["kantorovich"]["relative_gap"] <= 1e-8


def test_render_three_points(capsys, tmp_path):
    inst = _dump(tmp_path / "i.json", {"points": [[0, 0], [1, 0], [0, 1]], "weights": [1, 2, 3],
                                       "densities": [[1, 0], [0, 1], [0.5, 0.5]]})
    labels = _dump(tmp_path / "l.json", [1, 2, 0])
    svg = tmp_path / "o.svg"
    code, out = _run(capsys, ["render", inst, labels, str(svg)])
    assert code == EXIT_OK and json.loads(out)["elements"] == 4
    root = ET.parse(svg).getroot()
    assert root.tag == SVG + "svg"
    assert len(list(root)) == 4
    circles = root.findall(SVG + "circle")
    assert len(circles) == 3
    hollow = [c for c in circles if c.get("fill") == "none"]
    assert len(hollow) == 1 and hollow[0].get("data-label") == "0"
    radii = [float(c.get("r")) for c in circles]
    np.testing.assert_allclose(np.square(radii) / np.square(radii[-1]), [1 / 3, 2 / 3, 1.0], rtol=1e-3)


def test_render_rejects_3d(capsys, tmp_path):
    inst = _dump(tmp_path / "i.json", {"points": [[0, 0, 0]], "weights": [1], "densities": [[1.0]]})
    code, out = _run(capsys, ["render", inst, _dump(tmp_path / "l.json", [1]), str(tmp_path / "o.svg")])
    assert code == EXIT_INPUT and json.loads(out)["error"]["type"] == "SizeMismatch"


def test_thread_env(capsys, trivial, monkeypatch):
    monkeypatch.setenv("VECOT_THREADS", "1")
    assert main(["solve", *trivial]) == EXIT_OK


def test_console_script_exit_code(malformed):
    proc = subprocess.run([sys.executable, "-m", "vecot.cli", "solve", *malformed],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_INPUT
    assert json.loads(proc.stdout)["error"]["type"] == "NonSimplexRow"
