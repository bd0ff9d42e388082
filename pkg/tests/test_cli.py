import json
import shutil
import subprocess
import sys

import pytest
from filelock import FileLock

from kflow.cli import main
from kflow.mesh import write_kfmesh
from kflow.scenarios import plane_mesh
from kflow.trajio import read_trajectory

SPHERE = "scenario = round_sphere\nresolution = 2\nflow.stop_factor = 20.0\nflow.snapshot_stride = 5\n"
PLANE = "scenario = holomorphic_graph\nresolution = 12\nscenario.coeffs = [0, 1]\nflow.t_end = 0.02\n"


def _config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def sphere_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = d / "sphere"
    assert main(["run", "--config", _config(d, SPHERE), "--out", str(out)]) == 3
    return out


def test_blow_up_run_exits_with_three(sphere_dir):
    assert (sphere_dir / "manifest.json").exists()
    assert (sphere_dir / "summary.csv").exists()
    assert (sphere_dir / "config.txt").read_text().startswith("schema = kf-config v1")


def test_plane_run_reaches_end_time(tmp_path):
    assert main(["run", "--config", _config(tmp_path, PLANE), "--out", str(tmp_path / "p")]) == 0


def test_config_errors_exit_with_two(tmp_path, capsys):
    assert main(["run", "--config", _config(tmp_path, "flow.cfl = 7\n"), "--out", str(tmp_path / "x")]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--config", _config(tmp_path, "scenario = teapot\n"), "--out", str(tmp_path / "x")]) == 2


def test_missing_trajectory_is_an_io_error(tmp_path):
    assert main(["analyze", str(tmp_path / "nothing"), "--out", str(tmp_path / "a")]) == 1


def test_locked_output_directory(tmp_path, capsys):
    out = tmp_path / "locked"
    out.mkdir()
    with FileLock(str(out / ".kflow.lock")):
        assert main(["run", "--config", _config(tmp_path, PLANE), "--out", str(out)]) == 1
    assert "locked" in capsys.readouterr().err


def test_runs_are_deterministic(tmp_path, sphere_dir):
    again = tmp_path / "again"
    main(["run", "--config", _config(tmp_path, SPHERE), "--out", str(again)])
    assert (again / "summary.csv").read_bytes() == (sphere_dir / "summary.csv").read_bytes()


def test_resume_reproduces_the_uninterrupted_run(tmp_path, sphere_dir):
    copy = tmp_path / "resumed"
    shutil.copytree(sphere_dir, copy)
    assert main(["run", "--config", _config(tmp_path, SPHERE), "--out", str(copy), "--resume-from", "3"]) == 3
    a, b = read_trajectory(copy), read_trajectory(sphere_dir)
    assert [s.step for s in a.snapshots] == [s.step for s in b.snapshots]
    assert (copy / "summary.csv").read_bytes() == (sphere_dir / "summary.csv").read_bytes()


def test_thread_limit_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("KF_THREADS", "1")
    assert main(["run", "--config", _config(tmp_path, PLANE), "--out", str(tmp_path / "t")]) == 0


def test_analyze_sphere(sphere_dir):
    out = sphere_dir / "analysis"
    assert main(["analyze", str(sphere_dir), "--out", str(out), "--write-stacks"]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["type_verdict"] == "I"
    assert doc["T_hat"] == pytest.approx(0.25, rel=2e-2)
    for tr in doc["traces"]:
        assert (out / tr["file"]).exists()
    assert list(out.glob("stack_k*/manifest.json"))


def test_analyze_without_blow_up(tmp_path):
    run_dir = tmp_path / "p"
    main(["run", "--config", _config(tmp_path, PLANE), "--out", str(run_dir)])
    assert main(["analyze", str(run_dir)]) == 0
    doc = json.loads((run_dir / "analysis" / "report.json").read_text())
    assert "no blow-up" in doc["variant"]


def test_report_writes_plot_inputs(sphere_dir):
    out = sphere_dir / "plots"
    assert main(["report", str(sphere_dir), "--out", str(out)]) == 0
    header = (out / "extrema.csv").read_text().splitlines()[0]
    assert header.startswith("t,area,max_A2")
    assert (out / "angles_last.csv").read_text().startswith("face_id,cos_alpha,beta,branch_flag")
    compile((out / "plot_summary.py").read_text(), "plot_summary.py", "exec")


def test_verify_standalone_mesh(tmp_path, capsys):
    path = tmp_path / "plane.kfmesh"
    write_kfmesh(plane_mesh(16, 3.0, "lagrangian"), path)
    assert main(["verify", str(path), "--mode", "lagrangian", "--out", str(tmp_path / "v")]) == 0
    rep = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert rep["minimal"] and rep["beta_spread"] == pytest.approx(0.0, abs=1e-12)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kflow.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("run", "analyze", "verify", "report"):
        assert cmd in proc.stdout


def test_analyze_uses_the_saved_run_config(tmp_path):
    run_dir = tmp_path / "lag"
    text = ("scenario = lagrangian_potential_graph\nresolution = 16\nflow.t_end = 0.01\n"
            "analysis.eps_lag = 0.1\n")
    assert main(["run", "--config", _config(tmp_path, text), "--out", str(run_dir)]) == 0
    assert main(["analyze", str(run_dir)]) == 0
    assert json.loads((run_dir / "analysis" / "report.json").read_text())["mode"] == "lagrangian"
