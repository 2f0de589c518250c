import json
import subprocess
import sys

import numpy as np
import pytest

from absmin import cli
from absmin.scene import load_scene, read_fields_csv


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_scenes_command_lists_bundled(capsys):
    code, out, _ = run(capsys, "scenes")
    assert code == 0
    assert "box_quadratic" in out.split()


def test_distance_matches_closed_form_and_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "distance", "box_quadratic", "--out", str(a))[0] == 0
    assert run(capsys, "distance", "box_quadratic", "--out", str(b), "--threads", "2")[0] == 0
    for name in ("distance.csv", "manifest_distance.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    G = load_scene("box_quadratic").grid()
    f = read_fields_csv(a / "distance.csv", G)
    r = np.hypot(*(G.coords - 0.5).transpose(2, 0, 1))
    far = G.inside & (r > 0.2)
    # H = |p|^2 at level 4: d = 2 |x - x0|
    assert np.max(np.abs(f["d_lambda=4"][far] / (2 * r[far]) - 1)) < 0.03
    man = json.loads((a / "manifest_distance.json").read_text())
    assert man["command"] == "distance" and man["outputs"] == ["distance.csv"]


def test_verify_constant_scene_passes(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "constant_u", "--out", str(tmp_path))
    assert code == 0
    assert "FAIL" not in out.replace("XFAIL", "")
    reports = json.loads((tmp_path / "verify.json").read_text())
    assert {r["name"] for r in reports} == {"convexity", "cica", "slope_identity", "comparison"}


def test_counterexample_reports_expected_failures(tmp_path, capsys):
    code, out, _ = run(capsys, "counterexample", "annulus_counterexample", "--out", str(tmp_path))
    assert code == 0
    assert "XFAIL comparison" in out and "XFAIL small_slope_closeness" in out
    data = json.loads((tmp_path / "counterexample.json").read_text())
    assert data["interior_gap"] >= 0.19
    assert data["boundary_residual"] < 1e-12


def test_unexpected_failure_exits_one(tmp_path, capsys):
    text = {
        "schema": 1, "domain": {"type": "box"}, "h": 0.0625, "hamiltonian": {"kind": "quadratic_isotropic"},
        "functions": {"u": {"kind": "quadratic_form", "matrix": [[-3, 0], [0, -3]], "center": [0.5, 0.5]}},
        "lambdas": [0.25], "checks": ["cica"], "tolerances": {"cica": 1e-6},
    }
    path = tmp_path / "bump.json"
    path.write_text(json.dumps(text))
    code, out, _ = run(capsys, "verify", str(path), "--out", str(tmp_path / "o"))
    assert code == 1
    assert out.startswith("FAIL  cica")


def test_patch_and_report(tmp_path, capsys):
    assert run(capsys, "patch", "box_quadratic", "--out", str(tmp_path))[0] == 0
    assert run(capsys, "verify", "constant_u", "--out", str(tmp_path))[0] == 0
    assert run(capsys, "report", "--out", str(tmp_path))[0] == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    sources = {e["source"] for e in summary["reports"]}
    assert sources == {"patch.json", "verify.json"}
    assert summary["n_reports"] == 8 and summary["n_passed"] == 8


def test_action_fronts_and_pgm(tmp_path, capsys):
    assert run(capsys, "action", "riemannian_fronts", "--out", str(tmp_path), "--pgm")[0] == 0
    data = json.loads((tmp_path / "action.json").read_text())
    assert data["fronts"]["sizes"][0] == 1
    assert all(c["inner_missing"] == 0 for c in data["fronts"]["containment"])
    pgms = sorted(p.name for p in tmp_path.glob("*.pgm"))
    assert pgms and all(p.startswith("action_") for p in pgms)


def test_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n "h": }')
    code, _, err = run(capsys, "verify", str(bad), "--out", str(tmp_path))
    assert code == 2 and "line 2" in err
    neg = tmp_path / "neg.json"
    neg.write_text(json.dumps({"schema": 1, "domain": {"type": "box"}, "h": -1,
                               "hamiltonian": {"kind": "quadratic_isotropic"}}))
    code, _, err = run(capsys, "distance", str(neg), "--out", str(tmp_path))
    assert code == 2 and "scene field 'h'" in err
    code, _, err = run(capsys, "distance", "nowhere", "--out", str(tmp_path))
    assert code == 2 and "bundled scenes" in err
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_flow_of_constant_is_constant(tmp_path, capsys):
    assert run(capsys, "flow", "constant_u", "--out", str(tmp_path))[0] == 0
    scene = load_scene("constant_u")
    f = read_fields_csv(tmp_path / "flow.csv", scene.grid())
    ins = scene.grid().inside
    for name, col in f.items():
        np.testing.assert_array_equal(col[ins], 1.5, err_msg=name)


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "absmin.cli", "scenes"], capture_output=True, text=True)
    assert proc.returncode == 0 and "constant_u" in proc.stdout
