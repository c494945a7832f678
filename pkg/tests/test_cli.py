import json
import subprocess
import sys

import pytest

from unbalanced_ot.cli import main
from unbalanced_ot.dynamics import standard_scenario
from unbalanced_ot.measures import canonical_json


def run_cli(*args, check=False):
    proc = subprocess.run(
        [sys.executable, "-m", "unbalanced_ot", *args],
        capture_output=True,
        timeout=300,
    )
    if check:
        assert proc.returncode == 0, proc.stderr.decode()
    return proc


@pytest.fixture
def measure_files(tmp_path):
    mu = tmp_path / "mu.json"
    nu = tmp_path / "nu.json"
    mu.write_text('{"dim":1,"atoms":[{"x":[0.0],"w":1.0}]}')
    nu.write_text('{"dim":1,"atoms":[{"x":[3.0],"w":1.0}]}')
    return str(mu), str(nu)


def test_dist_far_diracs(measure_files):
    mu, nu = measure_files
    proc = run_cli("dist", "--mu", mu, "--nu", nu, "--a", "1", "--b", "1", "--p", "1", check=True)
    doc = json.loads(proc.stdout)
    assert doc["W"] == 2.0
    assert doc["m_star"] == 0.0


def test_dist_identical_files(measure_files):
    mu, _ = measure_files
    proc = run_cli("dist", "--mu", mu, "--nu", mu, check=True)
    assert json.loads(proc.stdout)["W"] == 0.0


def test_dist_malformed_input_exits_2(tmp_path, measure_files):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    proc = run_cli("dist", "--mu", str(bad), "--nu", measure_files[1])
    assert proc.returncode == 2
    assert b"input error" in proc.stderr


def test_dist_missing_file_exits_2(measure_files):
    proc = run_cli("dist", "--mu", "/nonexistent.json", "--nu", measure_files[1])
    assert proc.returncode == 2


def test_check_metric_vacuous(tmp_path):
    proc = run_cli("check", "metric", "--n", "0", check=True)
    doc = json.loads(proc.stdout)
    assert doc["ok"] is True


def test_check_unknown_suite_exits_2():
    proc = run_cli("check", "nonsense")
    assert proc.returncode == 2


def test_check_deterministic_bytes():
    first = run_cli("check", "kr", "--seed", "3", "--n", "4", check=True)
    second = run_cli("check", "kr", "--seed", "3", "--n", "4", check=True)
    assert first.stdout == second.stdout


def test_check_failure_exit_code(monkeypatch, capsys):
    import unbalanced_ot.cli as cli_module

    monkeypatch.setattr(
        cli_module, "run_named_check", lambda name, seed, n: {"ok": False, "failures": [1]}
    )
    assert main(["check", "kr"]) == 1


def test_flat_subcommand(measure_files):
    mu, nu = measure_files
    proc = run_cli("flat", "--mu", mu, "--nu", nu, check=True)
    doc = json.loads(proc.stdout)
    assert doc["flat"] == pytest.approx(2.0, abs=1e-9)
    assert doc["difference"] <= 1e-6
    assert "values" in doc["potential"]


def test_geodesic_subcommand(tmp_path, measure_files):
    mu, nu = measure_files
    csv_path = tmp_path / "traj.csv"
    proc = run_cli(
        "geodesic", "--mu", mu, "--nu", nu, "--k", "4", "--csv", str(csv_path), check=True
    )
    doc = json.loads(proc.stdout)
    assert doc["B"] >= doc["T"] - 1e-12
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "t,atom_id,x0,w"
    assert len(lines) > 2


def test_simulate_subcommand(tmp_path):
    mu0, field, source = standard_scenario()
    scenario = tmp_path / "scenario.json"
    scenario.write_text(
        canonical_json(
            {
                "mu0": mu0.to_json_dict(),
                "field": field.to_json_dict(),
                "source": source.to_json_dict(),
            }
        )
    )
    proc = run_cli("simulate", "--scenario", str(scenario), "--grid", "5", check=True)
    doc = json.loads(proc.stdout)
    assert doc["masses"][-1] == pytest.approx(2.3, abs=1e-9)
    assert "B" in doc


def test_plotdata_convergence_series(tmp_path):
    report = tmp_path / "report.json"
    report.write_text(json.dumps({"levels": [4, 5, 6], "D": [0.1, 0.05, 0.024], "ratios": [0.5, 0.48]}))
    proc = run_cli("plotdata", "--report", str(report), check=True)
    lines = proc.stdout.decode().strip().splitlines()
    assert lines[0] == "k,D_k,ratio"
    assert len(lines) == 4
    assert lines[1].startswith("4,0.1,")


def test_plotdata_cost_curve(tmp_path, measure_files):
    mu, nu = measure_files
    out = tmp_path / "dist.json"
    run_cli("dist", "--mu", mu, "--nu", nu, "--curve", "--out", str(out), check=True)
    proc = run_cli("plotdata", "--report", str(out), check=True)
    lines = proc.stdout.decode().strip().splitlines()
    assert lines[0] == "m,rho,f"
    assert len(lines) >= 2


def test_plotdata_trajectory_masses(tmp_path, measure_files):
    mu, nu = measure_files
    out = tmp_path / "geo.json"
    run_cli("geodesic", "--mu", mu, "--nu", nu, "--k", "3", "--out", str(out), check=True)
    proc = run_cli("plotdata", "--report", str(out), check=True)
    assert proc.stdout.decode().splitlines()[0] == "t,mass"


def test_plotdata_empty_report(tmp_path):
    report = tmp_path / "empty.json"
    report.write_text("{}")
    proc = run_cli("plotdata", "--report", str(report), check=True)
    assert proc.stdout.decode().strip() == "key,value"


def test_plotdata_missing_input_exits_2():
    proc = run_cli("plotdata", "--report", "/does/not/exist.json")
    assert proc.returncode == 2
