import json
import subprocess
import sys

from singlat import __version__
from singlat.cli import dispatch, emit, read_csv_report


def run(argv, capsysbinary):
    code = dispatch(argv)
    out = capsysbinary.readouterr()
    return code, out.out.decode(), out.err.decode()


def test_witness_found(capsysbinary):
    code, out, _ = run(["witness", "--x", "0.5,0.3333333333", "--r", "0.5,0.5", "--T", "100", "--delta", "0.1"], capsysbinary)
    assert code == 0
    assert out.startswith("q=6 p=3,2")


def test_witness_none(capsysbinary):
    code, out, _ = run(["witness", "--x", "0.6180339887498949", "--r", "1", "--T", "1e4", "--delta", "0.2"], capsysbinary)
    assert code == 1 and out.strip() == "NONE"


def test_unknown_flag(capsysbinary):
    code, _, err = run(["witness", "--bogus"], capsysbinary)
    assert code == 2 and "usage" in err


def test_delta_zero(capsysbinary):
    code, _, _ = run(["witness", "--x", "0.5", "--r", "1", "--T", "10", "--delta", "0"], capsysbinary)
    assert code == 2


def test_rational_flags(capsysbinary):
    code, out, _ = run(["witness", "--x", "1/2,1/3", "--r", "1/2,1/2", "--T", "100", "--delta", "1/10", "--format", "json"], capsysbinary)
    rep = json.loads(out)
    assert code == 0
    assert rep["config"]["x"] == ["1/2", "1/3"] and rep["version"] == __version__
    assert rep["result"]["witness"]["quasinorm"] == 0


def test_budget_exit(capsysbinary):
    code, _, _ = run(["witness", "--x", "0.41421356237,0.7320508075", "--r", "0.5,0.5", "--T", "1e9", "--delta", "0.5", "--cap", "100"], capsysbinary)
    assert code == 3


def test_traj_csv_header(capsysbinary):
    code, out, _ = run(["traj", "--x", "1/2,1/3", "--r", "1/2,1/2", "--times", "0,1,2"], capsysbinary)
    cfg, cols, rows = read_csv_report(out)
    assert code == 0
    assert cols == ["t", "systole", "witness"] and len(rows) == 3
    assert cfg["x"] == ["1/2", "1/3"]


def test_mc_escape_rows_and_determinism(capsysbinary):
    argv = ["mc-escape", "--sampler", "lebesgue:0,1x0,1", "--r", "1/2,1/2", "--t", "2,4", "--eps", "0.1,0.2,0.3", "--n", "500", "--seed", "7"]
    code, a, _ = run(argv, capsysbinary)
    _, b, _ = run(argv, capsysbinary)
    assert code == 0 and a == b
    _, cols, rows = read_csv_report(a)
    assert cols[:2] == ["t", "eps"] and len(rows) == 6


def test_report_regenerates_from_config(capsysbinary):
    argv = ["mc-escape", "--sampler", "cantor:b=3,S=02,m=40,d=2", "--r", "0.7,0.3", "--t", "3", "--eps", "0.2", "--n", "300", "--seed", "2"]
    _, out, _ = run(argv, capsysbinary)
    cfg, _, _ = read_csv_report(out)
    argv2 = ["mc-escape", "--sampler", cfg["sampler"], "--r", ",".join(cfg["r"]), "--t", ",".join(map(repr, cfg["t"])),
             "--eps", ",".join(map(repr, cfg["eps"])), "--n", str(cfg["n"]), "--seed", str(cfg["seed"])]
    _, out2, _ = run(argv2, capsysbinary)
    assert out2 == out


def test_timing_opt_in(capsysbinary):
    _, out, _ = run(["sandwich", "--x", "1/2,1/3", "--r", "1/2,1/2", "--t", "6", "--eps", "0.3"], capsysbinary)
    rep = json.loads(out)
    assert "wall_clock_s" not in rep
    assert rep["result"] == {"lhs": True, "mid": True, "rhs": True, "consistent": True}
    _, out, _ = run(["sandwich", "--x", "1/2,1/3", "--r", "1/2,1/2", "--t", "6", "--eps", "0.3", "--timing"], capsysbinary)
    assert "wall_clock_s" in json.loads(out)


def test_scan_and_systole(capsysbinary):
    code, out, _ = run(["scan", "--x", "1/2,1/3", "--r", "1/2,1/2", "--tmax", "1000"], capsysbinary)
    assert code == 0 and json.loads(out)["result"]["deltas"][0]["T0"] == 16
    code, out, _ = run(["scan", "--x", "0.6180339887498949", "--r", "1", "--deltas", "0.2", "--tmin", "100", "--tmax", "1e4"], capsysbinary)
    assert code == 1
    code, out, _ = run(["systole", "--basis", "2,0,0;0,2,0;0,0,1/4"], capsysbinary)
    assert json.loads(out)["result"]["length"] == 0.25


def test_decay_and_federer(capsysbinary):
    code, out, _ = run(["decay", "--sampler", "lebesgue:0,1x0,1", "--coord", "1", "--value", "1/2", "--eps", "0.1", "--n", "2000"], capsysbinary)
    _, cols, rows = read_csv_report(out)
    assert code == 0 and cols[0] == "eps" and len(rows) == 1
    code, out, _ = run(["federer", "--sampler", "lebesgue:0,1x0,1", "--point", "0.5,0.5", "--rad", "0.1,0.05", "--n", "2000"], capsysbinary)
    _, cols, rows = read_csv_report(out)
    assert cols == ["point", "rad", "ratio"] and len(rows) == 2


def test_construct_and_verify(tmp_path, capsysbinary):
    avoid = tmp_path / "avoid.txt"
    avoid.write_text("# points to avoid\n0.3,0.7\n")
    code, out, _ = run(["construct", "--r", "1/2,1/2", "--depth", "4", "--tmax", "500", "--avoid", str(avoid)], capsysbinary)
    assert code == 0
    rep = json.loads(out)
    x = rep["result"]["x"]
    assert all(len(c.split(".")[1]) == 50 for c in x)
    assert rep["config"]["avoid_points"] == [["3/10", "7/10"]]
    T1 = rep["result"]["certificate"]["T1"]
    code, out, _ = run(["verify", "--x", ",".join(x), "--r", "1/2,1/2", "--tmax", "500", "--t1", repr(T1)], capsysbinary)
    assert code == 0 and json.loads(out)["result"]["passed"]


def test_construct_bad_surface(capsysbinary):
    code, _, _ = run(["construct", "--surface", "f=u,v,u+v+1/2", "--r", "1/3,1/3,1/3"], capsysbinary)
    assert code == 2


def test_threads_env_does_not_change_output(monkeypatch, capsysbinary):
    argv = ["mc-escape", "--sampler", "lebesgue:0,1x0,1", "--r", "1/2,1/2", "--t", "2", "--eps", "0.3", "--n", "200", "--method", "systole"]
    _, a, _ = run(argv, capsysbinary)
    monkeypatch.setenv("SINGLAT_THREADS", "2")
    _, b, _ = run(argv, capsysbinary)
    assert a == b


def test_emit_json_round_trip():
    rep = {"version": "x", "command": "c", "config": {"a": [1, 2]}, "result": {"v": 0.1 + 0.2}}
    assert json.loads(emit(rep)) == rep
    assert emit(rep) == emit(dict(reversed(list(rep.items()))))


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "singlat.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
