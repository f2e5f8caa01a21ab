import csv
import json
import subprocess
import sys

import pytest

from superint.cli import main, merge_negative_values, parse_range, parse_sweep
from superint.principal_ode import HProfile

SINH = ["solve", "--case", "ii", "--mu", "1", "--A", "1,0,0,0,1", "--x0", "0", "--h0", "0",
        "--root", "nearest:1", "--range", "-2:2", "--n", "401"]


@pytest.fixture(scope="module")
def sinh_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sinh.json"
    assert main(SINH + ["--out", str(path)]) == 0
    return path


def _json(path):
    return json.loads(path.read_text())


def test_parsers():
    assert parse_range("-2:2")[:2] == (-2.0, 2.0)
    assert parse_sweep("-1:1:5") == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert parse_sweep("0.5") == [0.5]
    assert merge_negative_values(["--range", "-2:2"]) == ["--range=-2:2"]


def test_solve_sinh(sinh_file):
    prof = HProfile.from_json(sinh_file.read_text())
    assert prof.params.case.value == "ii"
    assert prof.x_range == (-2.0, 2.0)
    assert prof.at(1.0)[0] == pytest.approx(1.1752011936438014, abs=1e-8)


def test_solve_flat(tmp_path):
    out = tmp_path / "flat.json"
    assert main(["solve", "--case", "iii", "--A", "1,0,0,0,1", "--x0", "0", "--h0", "0",
                 "--root", "positive", "--out", str(out)]) == 0
    assert all(abs(v - 1) <= 1e-14 for v in _json(out)["hx"])


def test_missing_mu(capsys):
    assert main(["solve", "--case", "ii", "--A", "1,0,0,0,1"]) == 1
    assert "mu required" in capsys.readouterr().err


def test_verify_pass_and_fail(sinh_file, tmp_path):
    out = tmp_path / "rep.json"
    assert main(["verify", str(sinh_file), "--points", "10", "--out", str(out)]) == 0
    assert _json(out)["bracket"]["ok"]
    d = _json(sinh_file)
    d["hx"] = [v * 1.001 for v in d["hx"]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert main(["verify", str(bad), "--points", "10", "--out", str(tmp_path / "r2.json")]) == 3


def test_verify_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert main(["verify", str(empty)]) == 1
    assert main(["verify", str(tmp_path / "missing.json")]) == 1


def test_flow_and_classify(sinh_file, tmp_path):
    out, trace = tmp_path / "flow.json", tmp_path / "trace.csv"
    assert main(["flow", str(sinh_file), "--P0", "0,0,0.8,0.6", "--T", "5", "--csv", str(trace),
                 "--out", str(out)]) == 0
    assert trace.read_text().startswith("t,x,y,px,py")
    cls = tmp_path / "cls.json"
    assert main(["classify", str(sinh_file), "--out", str(cls)]) == 0
    assert _json(cls)["family_type"] == 1


def test_sphere_examples(tmp_path):
    out = tmp_path / "s0.json"
    assert main(["sphere", "--Ae", "1", "--A2", "0", "--h0", "0", "--zoll", "5", "--out", str(out)]) == 0
    d = _json(out)
    assert d["curvature_class"] == "Constant" and d["zoll"]["passed"]
    out = tmp_path / "s3.json"
    assert main(["sphere", "--Ae", "1", "--A2", "0", "--h0", "0.3", "--zoll", "5", "--out", str(out)]) == 0
    d = _json(out)
    assert d["curvature_class"] == "Generic"
    assert max(d["zoll"]["return_distances"]) <= 1e-4


def test_sphere_from_raw_params(tmp_path):
    out = tmp_path / "raw.json"
    assert main(["sphere", "--case", "ii", "--mu", "1", "--A", "2,0,2,0,2", "--out", str(out)]) == 0
    d = _json(out)
    assert d["Ae"] == pytest.approx(0.5) and d["A2"] == pytest.approx(1.0)


def test_same_seed_same_json(tmp_path):
    # the output path is part of the recorded config, so both runs write to the same file
    out = tmp_path / "a.json"
    args = ["sphere", "--Ae", "1", "--h0", "0.3", "--zoll", "2", "--seed", "7", "--t-range", "1e-3:1e3",
            "--n", "1201", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_scan_grid(tmp_path):
    out = tmp_path / "scan.csv"
    assert main(["scan", "--case", "ii", "--mu", "1", "--A0", "1", "--A2", "-1:1:2", "--A4", "1:3:2",
                 "--workers", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert {r["status"] for r in rows} <= {"ok", "truncated", "error"}
    assert all(r["classification"] in ("Constant", "Darboux", "Generic", "") for r in rows)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "superint.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
