import json

import pytest

from plap.cli import SWEEP_COLUMNS, main
from plap.config import load_config, parse_config
from plap.errors import ConfigError


def _write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)



def test_solve_one_dimensional_laplacian(tmp_path):
    cfg = _write(tmp_path, "problem: {dim_axial: 0}\nsolver: {resolution: 64}\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out), "--dump-eigenfunction"]) == 0
    rec = json.loads((out / "solve.json").read_text())
    assert rec["result"]["lambda"] == pytest.approx(9.87, abs=0.01)
    assert set(rec["result"]) == {"lambda", "residual", "iterations", "converged"}
    assert rec["config"]["solver"]["resolution"] == 64
    lines = (out / "eigenfunction.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1] == "x1,u"
    assert len(lines) == 2 + 65


@pytest.mark.parametrize(
    "text, message",
    [
        ("problem: {p: 1.5}\n", "p must be ≥ 2"),
        ("problem: {colour: red}\n", "unknown config key"),
        ("problem: [\n", "malformed"),
        ("sweep: {ells: []}\n", "must not be empty"),
        ("problem: {coefficient: {family: nope}}\n", "unknown coefficient family"),
        ("solver: {resolution: 2}\n", "resolution"),
    ],
)
def test_config_errors_exit_with_two(tmp_path, capsys, text, message):
    cfg = _write(tmp_path, text)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert message in capsys.readouterr().err


def test_missing_config_file_exits_with_two(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_nonconvergence_exits_with_three_and_still_writes(tmp_path):
    cfg = _write(tmp_path, "problem: {dim_axial: 0, p: 3}\nsolver: {max_iter: 2, resolution: 32}\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 3
    assert json.loads((out / "solve.json").read_text())["result"]["converged"] is False


def test_exponent_literals_without_a_dot_are_numbers():
    cfg = parse_config({"solver": {"tol": "1e-9"}})
    assert cfg.tol == 1e-9 and cfg.tree["solver"]["tol"] == 1e-9


def test_geometric_length_range():
    cfg = parse_config({"sweep": {"ells": {"start": 1, "stop": 8, "num": 4}}})
    assert cfg.ells == pytest.approx((1.0, 2.0, 4.0, 8.0))
    with pytest.raises(ConfigError):
        parse_config({"sweep": {"ells": {"start": 1, "stop": 8}}})


def test_default_config_loads_without_a_file():
    assert load_config(None).p == 2.0


def test_dirichlet_sweep_outputs(tmp_path):
    cfg = _write(tmp_path, "problem: {coefficient: {family: coupled, a: 0.3}}\nsolver: {resolution: 8}\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1].split(",") == list(SWEEP_COLUMNS)
    lam = [float(line.split(",")[1]) for line in lines[2:]]
    assert lam == sorted(lam, reverse=True)
    summary = json.loads((out / "sweep.json").read_text())["summary"]
    assert summary["fitted_exponent"] >= 0.75 and summary["gap"] is None


def test_uncoupled_mixed_sweep_reports_no_gap(tmp_path):
    cfg = _write(tmp_path, "problem: {bc: mixed, coefficient: {family: coupled, a: 0.0}}\n"
                           "solver: {resolution: 8}\nsweep: {ells: [1, 4]}\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads((out / "sweep.json").read_text())["summary"]["gap"] == "NoGap"


def test_sweep_is_deterministic_and_report_rebuilds_it(tmp_path):
    cfg = _write(tmp_path, "problem: {bc: mixed, coefficient: {family: coupled, a: 0.5}}\n"
                           "solver: {resolution: 8}\nsweep: {ells: [0.5, 2]}\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", cfg, "--out", str(a)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "sweep.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert json.loads((a / "sweep.json").read_text())["summary"]["gap"] == "Gap"
    before = {n: (a / n).read_bytes() for n in ("sweep.csv", "sweep.json")}
    (a / "sweep.csv").unlink()
    assert main(["report", "--out", str(a)]) == 0
    assert {n: (a / n).read_bytes() for n in before} == before


def test_report_without_a_stored_sweep(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_picone_command(tmp_path):
    out = tmp_path / "o"
    assert main(["picone", "--out", str(out), "--seed", "5"]) == 0
    first = (out / "picone.json").read_bytes()
    assert json.loads(first)["seed"] == 5
    assert main(["picone", "--out", str(out), "--seed", "5"]) == 0
    assert (out / "picone.json").read_bytes() == first
    assert main(["picone", "--out", str(out), "--inject-sign-flip"]) == 1


def test_jobs_from_the_environment(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "solver: {resolution: 8}\nsweep: {ells: [1, 2, 4], warm_start: false}\n")
    monkeypatch.setenv("PLAP_JOBS", "2")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    monkeypatch.setenv("PLAP_JOBS", "many")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "1"]) == 0


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "plap", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "plap" in r.stdout
