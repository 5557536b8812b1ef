import json

import pytest

from bolab.cli import ExperimentConfig, run
from bolab.spectral import load_field_binary, load_field_text


def call(tmp_path, *argv, out="out"):
    return run([*argv, "--out", str(tmp_path / out)])


def report(tmp_path, command, out="out"):
    return json.loads((tmp_path / out / f"{command}.json").read_text())


def test_construct(tmp_path, capsys):
    assert call(tmp_path, "construct", "--speeds", "1,2", "--phases=-3,3", "--grid", "64:1024") == 0
    doc = report(tmp_path, "construct")
    assert doc["passed"] and doc["config"]["speeds"] == [1.0, 2.0]
    assert doc["results"]["tau_vs_scattering"] <= 1e-10
    assert sorted(doc["files"]) == ["field.bof", "field.txt", "params.txt"]
    u = load_field_text(tmp_path / "out" / "field.txt")
    assert (u.values == load_field_binary(tmp_path / "out" / "field.bof").values).all()
    assert "PASS" in capsys.readouterr().out


def test_reports_are_byte_identical(tmp_path):
    argv = ("construct", "--speeds", "1,2", "--grid", "32:512")
    assert call(tmp_path, *argv, out="a") == 0
    assert call(tmp_path, *argv, out="b") == 0
    assert (tmp_path / "a" / "construct.json").read_bytes() == (tmp_path / "b" / "construct.json").read_bytes()
    assert (tmp_path / "a" / "field.bof").read_bytes() == (tmp_path / "b" / "field.bof").read_bytes()


def test_output_directory_is_created(tmp_path):
    assert call(tmp_path, "construct", "--grid", "32:256", out="deep/nested/dir") == 0
    assert (tmp_path / "deep" / "nested" / "dir" / "construct.json").exists()


def test_functionals(tmp_path):
    assert call(tmp_path, "functionals", "--speeds", "1", "--grid", "256:4096") == 0
    doc = report(tmp_path, "functionals")
    assert len(doc["results"]["H"]) == 9
    assert (tmp_path / "out" / "tower.csv").exists()


def test_variational(tmp_path):
    assert call(tmp_path, "variational", "--speeds", "1,2", "--phases=-5,5", "--grid", "64:1024") == 0
    doc = report(tmp_path, "variational")
    assert doc["results"]["mu"] == [2.0, 3.0]
    assert doc["results"]["p_of_D"] == 1


def test_inertia_and_spectrum(tmp_path):
    assert call(tmp_path, "inertia", "--speeds", "1", "--grid", "64:512") == 0
    assert report(tmp_path, "inertia")["results"]["negative"] == 1
    assert call(tmp_path, "spectrum", "--speeds", "1", "--grid", "64:512") == 0
    lines = (tmp_path / "out" / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "index,eigenvalue" and len(lines) == 513


def test_evolve_exit_codes(tmp_path):
    # dt=0.008 drifts by ~1e-7, above the 1e-8 bound, while the oracle check passes
    assert call(tmp_path, "evolve", "--speeds", "1", "--grid", "64:512", "--dt", "0.008", "--T", "1") == 1
    failed = {c["name"] for c in report(tmp_path, "evolve")["checks"] if not c["passed"]}
    assert failed == {"H1 drift", "H2 drift"}
    assert call(tmp_path, "evolve", "--speeds", "1", "--grid", "64:512", "--dt", "0.002", "--T", "1",
                out="fine") == 0
    assert (tmp_path / "fine" / "trace.csv").exists()


def test_stability(tmp_path):
    argv = ("stability", "--speeds", "1", "--grid", "64:512", "--dt", "0.008", "--T", "1", "--delta", "1e-3")
    assert call(tmp_path, *argv) == 0
    doc = report(tmp_path, "stability")
    assert doc["results"]["threshold"] == pytest.approx(1e-2)


def test_report_all_single_criterion(tmp_path, capsys):
    assert call(tmp_path, "report-all", "--criteria", "5") == 0
    assert "AC5  PASS" in capsys.readouterr().out
    assert (tmp_path / "out" / "summary.csv").read_text().splitlines()[1] == "5,multiplier Hessian D,PASS"


def test_tolerance_override_can_force_failure(tmp_path):
    tol = tmp_path / "tol.txt"
    tol.write_text("construct_agreement = 1e-300\n")
    assert call(tmp_path, "construct", "--speeds", "1,2", "--grid", "32:512", "--tol-overrides", str(tol)) == 1
    doc = report(tmp_path, "construct")
    assert doc["tolerances"]["construct_agreement"] == 1e-300
    assert not doc["passed"]


def test_config_file(tmp_path):
    cfg = tmp_path / "run.txt"
    cfg.write_text("# two solitons\nspeeds = [1, 2]\nphases = [-3, 3]\ngrid = [32, 512]\n")
    assert call(tmp_path, "construct", "--config", str(cfg)) == 0
    assert report(tmp_path, "construct")["config"]["phases"] == [-3.0, 3.0]


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.txt"
    cfg.write_text("speeds = [1, 2]\ngrid = [32, 512]\n")
    assert call(tmp_path, "construct", "--config", str(cfg), "--speeds", "1.5") == 0
    assert report(tmp_path, "construct")["config"]["speeds"] == [1.5]


def test_bad_config_key_reports_line(tmp_path, capsys):
    cfg = tmp_path / "run.txt"
    cfg.write_text("speeds = [1]\n\nspeedz = [2]\n")
    assert call(tmp_path, "construct", "--config", str(cfg)) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ("construct", "--speeds", "2,1"),
    ("construct", "--speeds", "1", "--phases", "0,0"),
    ("construct", "--grid", "64"),
    ("construct", "--grid", "64:513"),
    ("report-all", "--criteria", "11"),
    ("report-all", "--preset", "other"),
    ("inertia", "--speeds", "1,2,3,4"),
    ("variational", "--speeds", "1"),
    ("frobnicate",),
    (),
])
def test_usage_errors_exit_two(tmp_path, argv):
    assert run([*argv, "--out", str(tmp_path / "out")] if argv else []) == 2


def test_config_digest_ignores_output_directory():
    a = ExperimentConfig("construct", out="x")
    b = ExperimentConfig("construct", out="y")
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig("construct", seed=1).digest()
