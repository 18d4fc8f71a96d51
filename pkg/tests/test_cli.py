import os
import subprocess
import sys

import pytest

from mafem.adapt import CSV_HEADER, records_from_csv
from mafem.cli import main
from mafem.config import RunConfig, parse_config, serialize_config
from mafem.errors import ConfigError
from mafem.mesh import unit_square_mesh, write_mesh


@pytest.fixture
def run(tmp_path):
    def _run(command, text, *extra):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(text)
        out = tmp_path / "out.csv"
        code = main([command, "--config", str(cfg), "--out", str(out), *extra])
        return code, (out.read_text() if out.exists() else "")
    return _run


def test_solve_quadratic(run):
    code, csv = run("solve", "problem.name = quadratic\nmesh.n = 2\nfe.degree = 3\n")
    assert code == 0
    (rec,) = records_from_csv(csv)
    assert rec.err_u_H1 <= 1e-9 and rec.level == 0


def test_degree_two_is_a_config_error(run, capsys):
    code, _ = run("solve", "problem.name = quadratic\nfe.degree = 2\n")
    assert code == 1
    assert "degree k must be >= 3" in capsys.readouterr().err


def test_unknown_problem_lists_builtins(run, capsys):
    code, _ = run("solve", "problem.name = parabola\n")
    assert code == 1
    err = capsys.readouterr().err
    assert all(n in err for n in ("quadratic", "product_quadratic", "exp_radial", "ball"))


def test_bad_usage_and_missing_config(tmp_path):
    assert main(["explode", "--config", "x"]) == 1
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_solver_failure_exit_code(run, capsys):
    code, _ = run("solve", "problem.name = exp_radial\nnewton.max_iters = 1\n")
    assert code == 2
    assert "solver failure" in capsys.readouterr().err


def test_study_csv_and_order_comment(run):
    code, csv = run("study", "problem.name = exp_radial\nmesh.n = 4\nstudy.levels = 3\n")
    assert code == 0
    lines = csv.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(records_from_csv(csv)) == 3
    assert lines[-1].startswith("# observed_order_u_h1=")
    assert 2.7 <= float(lines[-1].split("=")[1]) <= 3.3


def test_study_single_level_has_no_comment(run):
    code, csv = run("study", "problem.name = exp_radial\nmesh.n = 2\n", "--levels", "1")
    assert code == 0
    assert len(records_from_csv(csv)) == 1
    assert not any(ln.startswith("#") for ln in csv.splitlines())


def test_adapt_ball_with_vtu(run, tmp_path):
    vtu = tmp_path / "vtu"
    code, csv = run("adapt", f"problem.name = ball\nmesh.n = 2\nadapt.theta = 0.5\n"
                             f"adapt.max_levels = 4\noutput.vtu_dir = {vtu}\n")
    assert code == 0
    ndof = [r.ndof for r in records_from_csv(csv)]
    assert len(ndof) == 4 and all(b > a for a, b in zip(ndof, ndof[1:]))
    files = sorted(os.listdir(vtu))
    assert files == [f"level_{i:02d}.vtu" for i in range(4)]
    body = (vtu / files[-1]).read_text()
    assert 'Name="theta_K"' in body and 'Name="u"' in body and 'Name="zeta_K"' in body
    assert '<DataArray type="UInt8" Name="types" format="ascii">5' in body


def test_adapt_theta_zero(run, capsys):
    code, _ = run("adapt", "problem.name = ball\nadapt.theta = 0\n")
    assert code == 1
    assert "theta" in capsys.readouterr().err


def test_output_is_byte_identical(run):
    text = "problem.name = exp_radial\nmesh.n = 2\nstudy.levels = 2\n"
    _, a = run("study", text)
    _, b = run("study", text)
    assert a == b and a


def test_mesh_file_input(run, tmp_path):
    path = tmp_path / "square.mesh"
    path.write_text(write_mesh(unit_square_mesh(2)))
    code, csv = run("solve", f"problem.name = quadratic\nmesh.file = {path}\n")
    assert code == 0 and records_from_csv(csv)[0].ndof == 49
    path.write_text("3 1 3\n0 0\n1 0\n")
    code, _ = run("solve", f"problem.name = quadratic\nmesh.file = {path}\n")
    assert code == 1


def test_config_round_trip_is_idempotent():
    text = ("# comment\nproblem.name = ball\nfe.degree = 4\nadapt.theta = 0.3\n"
            "newton.tol_residual = 1e-11\nthreads = 2\n")
    once = serialize_config(parse_config(text))
    assert serialize_config(parse_config(once)) == once
    assert parse_config(once) == parse_config(text)
    assert serialize_config(RunConfig()) == serialize_config(parse_config(""))


@pytest.mark.parametrize("text,msg", [("fe.degree = three\n", "bad value"),
                                       ("colour = red\n", "unknown key"),
                                       ("problem.name\n", "key = value"),
                                       ("adapt.theta = 1.5\n", "theta")])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "q.cfg"
    cfg.write_text("problem.name = quadratic\nmesh.n = 1\n")
    res = subprocess.run([sys.executable, "-m", "mafem", "solve", "--config", str(cfg)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == CSV_HEADER
