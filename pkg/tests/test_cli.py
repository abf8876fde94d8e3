import json
import os
import subprocess
import sys

import pytest

from flatlas.atlas import car_atlas
from flatlas.cli import main
from flatlas.planner import demo_route_path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_car(capsys):
    code, out, _ = run(capsys, "analyze", "--system", "car")
    d = json.loads(out)
    assert code == 0 and d["hyper_regular"] is True
    assert d["locus"] == ["x'*cos(theta) + y'*sin(theta)"]
    assert d["resolved"]["description"] == "xdot=ydot=thetadot=0"
    assert d["P"]["entries"][0][2] == ["x'*cos(theta) + y'*sin(theta)"]


def test_analyze_chain2_and_missing(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "--system", "chain2")
    d = json.loads(out)
    assert code == 0 and d["hyper_regular"] and d["locus"] == []
    code, _, err = run(capsys, "analyze", "--system", str(tmp_path / "missing.json"))
    assert code == 2 and err.count("\n") == 1


def test_analyze_unsupported_entry(capsys, tmp_path):
    path = tmp_path / "sys.json"
    path.write_text(json.dumps({"n": 2, "m": 1, "F": ["x1' - x2^3"]}))
    code, out, _ = run(capsys, "analyze", "--system", str(path))
    assert code == 0 and json.loads(out)["hyper_regular"]
    path.write_text("{not json")
    assert run(capsys, "analyze", "--system", str(path))[0] == 2


def test_analyze_out_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "analyze", "--out", str(a))
    run(capsys, "analyze", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "point,expect",
    [
        ("x=0,y=0,theta=0,xdot=0,ydot=0,thetadot=0", "CandidateIntrinsic (equilibrium: not first-order controllable here)"),
        ("x=0,y=0,theta=0,xdot=1,ydot=0,thetadot=0", "Regular [U1]"),
        ("x=0,y=0,theta=0,xdot=0,ydot=0,thetadot=1", "OutsideFiber"),
    ],
)
def test_classify(capsys, point, expect):
    code, out, _ = run(capsys, "classify", "--system", "car", "--point", point)
    assert code == 0 and out.strip() == expect


def test_classify_parse_failure(capsys):
    assert run(capsys, "classify", "--point", "x=0,y=zero")[0] == 2
    assert run(capsys, "classify", "--point", "x=0")[0] == 2


def test_atlas_check(capsys, tmp_path):
    code, out, _ = run(capsys, "atlas-check", "--atlas", "car-atlas", "--samples", "16", "--seed", "7")
    d = json.loads(out)
    assert code == 0 and d["passed"] and d["matrix"] == [["pass"] * 3] * 3
    bad = car_atlas().to_dict()
    bad["charts"][2]["phi"][0] = "-(" + bad["charts"][2]["phi"][0] + ")"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, out, _ = run(capsys, "atlas-check", "--atlas", str(path), "--samples", "8")
    d = json.loads(out)
    assert code == 1 and not d["passed"] and "FAIL" in d["matrix"][2]
    one = {"system": "car", "charts": [bad["charts"][0]]}
    path.write_text(json.dumps(one))
    code, out, _ = run(capsys, "atlas-check", "--atlas", str(path), "--samples", "8")
    assert code == 0 and json.loads(out)["matrix"] == [["pass"]]


def test_plan_validate_export(capsys, tmp_path):
    traj = tmp_path / "traj.csv"
    plots = tmp_path / "plots"
    code, out, _ = run(capsys, "plan", "--route", str(demo_route_path()), "--out", str(traj), "--plots", str(plots))
    summary = json.loads(out)
    assert code == 0 and traj.exists()
    assert sorted(os.listdir(plots)) == ["flat_outputs.csv", "route.csv", "speed_profile.csv", "theta_phi.csv"]
    code, out, _ = run(capsys, "validate", "--traj", str(traj), "--system", "car", "--dt", "1e-3")
    rep = json.loads(out)
    assert code == 0 and rep["max_position_error"] < 1e-3 * summary["L"]
    code, out, _ = run(capsys, "export-plots", "--traj", str(traj), "--out-dir", str(tmp_path / "p2"))
    assert code == 0 and (tmp_path / "p2" / "theta_phi.csv").read_text() == (plots / "theta_phi.csv").read_text()
    # determinism
    traj2 = tmp_path / "traj2.csv"
    run(capsys, "plan", "--route", str(demo_route_path()), "--out", str(traj2))
    assert traj.read_bytes() == traj2.read_bytes()


def test_plan_errors_leave_no_output(capsys, tmp_path):
    out = tmp_path / "t.csv"
    route = tmp_path / "r.json"
    route.write_text(json.dumps({"waypoints": [[0, 0]], "speed_segments": [[1, 1]]}))
    code, _, err = run(capsys, "plan", "--route", str(route), "--out", str(out))
    assert code == 1 and "DegenerateWaypoints" in err and not out.exists()
    route.write_text(json.dumps({"waypoints": [[0, 0], [1, 0], [0, 0]], "speed_segments": [[1, 1]]}))
    code, _, err = run(capsys, "plan", "--route", str(route), "--out", str(out))
    assert code == 1 and "NoChartAvailable" in err and "t=2" in err and not out.exists()
    route.write_text(json.dumps({"waypoints": [[0, 0], [1, 0]], "speed_segments": [[1, 2]], "accel": 0.1}))
    code, _, err = run(capsys, "plan", "--route", str(route), "--out", str(out))
    assert code == 1 and "InfeasibleProfile" in err
    assert run(capsys, "plan", "--route", str(tmp_path / "none.json"), "--out", str(out))[0] == 2
    assert not out.exists() and not [p for p in os.listdir(tmp_path) if p.endswith(".tmp")]


def test_validate_malformed(capsys, tmp_path):
    traj = tmp_path / "traj.csv"
    run(capsys, "plan", "--route", str(demo_route_path()), "--out", str(traj))
    lines = traj.read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:10]) + "\n0.5,1,2\n")
    assert run(capsys, "validate", "--traj", str(bad))[0] == 1
    assert run(capsys, "validate", "--traj", str(tmp_path / "nope.csv"))[0] == 2


def test_seed_env_override(capsys, monkeypatch):
    monkeypatch.setenv("FLATLAS_SEED", "11")
    code, out, _ = run(capsys, "atlas-check", "--samples", "4", "--seed", "7")
    monkeypatch.setenv("FLATLAS_SEED", "11")
    code2, out2, _ = run(capsys, "atlas-check", "--samples", "4", "--seed", "99")
    assert code == code2 == 0 and out == out2
    monkeypatch.setenv("FLATLAS_SEED", "x")
    assert run(capsys, "atlas-check", "--samples", "4")[0] == 2


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as ei:
        main([])
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        main(["plan"])
    assert ei.value.code == 2


def test_console_entry_point():
    r = subprocess.run(
        [sys.executable, "-m", "flatlas", "classify", "--point", "x=0,y=0,theta=0,xdot=0,ydot=2,thetadot=0"],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0 and r.stdout.strip() == "OutsideFiber (F does not vanish here)"
