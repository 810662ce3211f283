import json
import subprocess
import sys

import pytest

from nsfem.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_OK, main
from nsfem.mesh import cylinder_channel_q1, save_mesh
from nsfem.postprocess import read_timeseries

MMS = "[case]\nkind = mms\n[mesh]\nn = 4\n[scheme]\ndt = 0.1\nt_end = 0.5\n"


def _write(tmp_path, text, name="case.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_run_directory_contents(tmp_path, capsys):
    cfg = _write(tmp_path, MMS)
    assert main(["--output-dir", str(tmp_path / "out"), "run", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} == {"effective.ini", "steps.csv", "final.vtk", "report.json"}
    rep = json.loads((out / "report.json").read_text())
    assert rep["steps"] == 5 and rep["mean_iterations"] == 1.0
    data = read_timeseries(out / "steps.csv")
    assert len(data["t"]) == 5 and data["t"][-1] == pytest.approx(0.5)
    assert "L2_vx" in json.loads(capsys.readouterr().out)["errors"]


def test_rerun_is_bitwise_identical(tmp_path):
    cfg = _write(tmp_path, MMS)
    for d in ("a", "b"):
        assert main(["--output-dir", str(tmp_path / d), "run", str(cfg)]) == EXIT_OK
    assert (tmp_path / "a" / "steps.csv").read_bytes() == (tmp_path / "b" / "steps.csv").read_bytes()
    assert (tmp_path / "a" / "final.vtk").read_bytes() == (tmp_path / "b" / "final.vtk").read_bytes()


def test_default_output_dir_next_to_config(tmp_path):
    cfg = _write(tmp_path, MMS, "small.ini")
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (tmp_path / "small_out" / "effective.ini").exists()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[mesh]\nbogus = 1\n")
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "mesh.bogus" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "none.ini")]) == EXIT_CONFIG


def test_wrong_command_for_case_kind(tmp_path):
    cfg = _write(tmp_path, MMS)
    assert main(["cylinder", str(cfg)]) == EXIT_CONFIG


def test_mms_sweep_writes_convergence_and_guards(tmp_path):
    text = MMS + "[mms]\ndts = 0.1, 0.05, 0.025\nschemes = bdf1\nconvections = proposed\n"
    cfg = _write(tmp_path, text)
    assert main(["--output-dir", str(tmp_path / "o"), "mms", str(cfg)]) == EXIT_OK
    o = tmp_path / "o"
    assert (o / "convergence_bdf1_proposed.csv").exists()
    assert (o / "bdf1_proposed_2" / "steps.csv").exists()
    # a 4x4 mesh is dominated by spatial error so a slope of 3 cannot be met
    cfg = _write(tmp_path, text + "min_slope = 3\n", "guard.ini")
    assert main(["--output-dir", str(tmp_path / "g"), "mms", str(cfg)]) == EXIT_GUARD


def test_custom_case_with_traction_outlet(tmp_path):
    text = (
        "[case]\nkind = custom\n[mesh]\nelement = p2p1\nn = 3\n[scheme]\ndt = 0.1\nt_end = 0.2\n"
        "[bc.left]\nkind = dirichlet\nvalue = 1, 0\n[bc.bottom]\nkind = slip\n[bc.top]\nkind = slip\n"
        "[bc.right]\nkind = traction\n"
    )
    assert main(["--output-dir", str(tmp_path / "c"), "run", str(_write(tmp_path, text))]) == EXIT_OK
    bad = text.replace("[bc.right]", "[bc.outlet]")
    assert main(["--output-dir", str(tmp_path / "d"), "run", str(_write(tmp_path, bad, "bad.ini"))]) == EXIT_CONFIG


def test_short_cylinder_flags_insufficient_periods(tmp_path):
    mesh = cylinder_channel_q1(upstream=4, downstream=8, half_width=4, n_box=8, n_radial=4, n_upstream=3, n_downstream=6, n_lateral=3)
    save_mesh(mesh, tmp_path / "cyl.msh")
    text = (
        "[case]\nkind = cylinder\n[mesh]\nsource = file\nfile = cyl.msh\n"
        "[scheme]\ndt = 0.2\nt_end = 2\n[output]\nwrite_final_fields = no\n"
    )
    cfg = _write(tmp_path, text)
    assert main(["--output-dir", str(tmp_path / "o"), "cylinder", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["steps"] == 10 and rep["cl_amplitude"] is None
    assert any("insufficient periods" in f for f in rep["flags"])
    # a configured band cannot be met without a measurement
    cfg = _write(tmp_path, text + "[cylinder]\nst_range = 0.16, 0.176\n", "band.ini")
    assert main(["--output-dir", str(tmp_path / "b"), "cylinder", str(cfg)]) == EXIT_GUARD


def test_check_subcommand_in_subprocess():
    res = subprocess.run([sys.executable, "-m", "nsfem.cli", "check"], capture_output=True, text=True, timeout=60)
    assert res.returncode == 0, res.stdout + res.stderr
    assert "8/8 checks passed" in res.stdout
