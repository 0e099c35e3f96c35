"""Command-line driver: validation, exit codes, artifacts and the expression parser."""
import math
import pathlib

import numpy as np
import pytest

from spectral_flow.cli import ExperimentConfig, main, parse_expression, validate
from spectral_flow.errors import ConfigError

CONFIGS = sorted((pathlib.Path(__file__).parent.parent / "configs").glob("*.ini"))


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL_SDE = """
[experiment]
name = simulate-sde
seed = 4

[kernel]
kind = dyson

[params]
N = 20
dt = 1e-2
t_end = 0.2
beta = 8
replicas = 2
record_times = 0.1, 0.2
"""


# --- validation ---------------------------------------------------------------

@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", "--config", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_wishart_c_below_one(tmp_path):
    cfg = ExperimentConfig("[experiment]\nname = simulate-matrix\n[kernel]\nkind = wishart\n"
                           "[params]\nn = 100\nm = 50\n")
    diags = validate(cfg)
    assert any("m >= n" in d for d in diags)


def test_validate_zero_dt_and_valid_dyson():
    bad = ExperimentConfig("[experiment]\nname = solve-pde\n[params]\ndt = 0\n")
    assert any("dt" in d for d in validate(bad))
    good = ExperimentConfig(SMALL_SDE)
    assert validate(good) == []


def test_validate_reports_bad_values(tmp_path, capsys):
    p = write(tmp_path, "[experiment]\nname = solve-pde\n[params]\nh = abc\nN = -3\n")
    assert main(["validate", "--config", p]) == 2
    out = capsys.readouterr().out
    assert "h" in out and "N must be a positive integer" in out


# --- exit codes ---------------------------------------------------------------

def test_config_error_exit_2(tmp_path, capsys):
    p = write(tmp_path, "[experiment]\nname = simulate-sde\n[kernel]\nkind = general\n"
                        "f = x +* y\n[params]\nN = 10\n")
    assert main(["simulate-sde", "--config", p, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: kind=config")


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["solve-pde", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "kind=config" in capsys.readouterr().err


def test_numerical_error_exit_3(tmp_path, capsys):
    # default Dyson noise from a tight cluster collides
    p = write(tmp_path, "[experiment]\nname = simulate-sde\n[params]\nN = 50\ndt = 1e-2\n"
                        "t_end = 0.1\n")
    assert main(["simulate-sde", "--config", p, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "kind=numerical" in err and "StiffnessError" in err


# --- artifacts ----------------------------------------------------------------

def _files(d):
    return {p.name: p.read_bytes() for p in sorted(pathlib.Path(d).iterdir())}


def test_byte_identical_reruns(tmp_path):
    p = write(tmp_path, SMALL_SDE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate-sde", "--config", p, "--out", str(a)]) == 0
    assert main(["simulate-sde", "--config", p, "--out", str(b)]) == 0
    fa, fb = _files(a), _files(b)
    assert set(fa) >= {"run.meta", "cdf.csv", "trajectory_r0.csv", "trajectory_r1.csv"}
    assert fa == fb


def test_meta_suffices_to_rerun(tmp_path):
    p = write(tmp_path, SMALL_SDE)
    a = tmp_path / "a"
    main(["simulate-sde", "--config", p, "--out", str(a), "--seed", "9"])
    meta = (a / "run.meta").read_text().splitlines()
    assert "seed=9" in meta and "seed_override=9" in meta
    assert any(m.startswith("config_hash=") for m in meta)
    text = "\n".join(m[len("config: "):] for m in meta if m.startswith("config: "))
    q = write(tmp_path, text, "echo.ini")
    b = tmp_path / "b"
    main(["simulate-sde", "--config", q, "--out", str(b), "--seed", "9"])
    assert (a / "cdf.csv").read_bytes() == (b / "cdf.csv").read_bytes()
    c = tmp_path / "c"
    main(["simulate-sde", "--config", p, "--out", str(c)])
    assert (a / "cdf.csv").read_bytes() != (c / "cdf.csv").read_bytes()


def test_calibrate_report_has_nominal_and_fitted(tmp_path):
    p = write(tmp_path, "[experiment]\nname = calibrate\n[params]\nfamily = semicircle\n"
                        "n = 100\nreplicas = 3\n")
    assert main(["calibrate", "--config", p, "--out", str(tmp_path / "o")]) == 0
    rep = dict(l.split("=", 1) for l in (tmp_path / "o" / "calibration.txt").read_text().split())
    assert float(rep["nominal_radius_coeff"]) == 1.0
    assert float(rep["fitted_radius_coeff"]) == pytest.approx(2.0, abs=0.1)


def test_dominance_equal_spectra_zero_violations(tmp_path):
    p = write(tmp_path, "[experiment]\nname = dominance\n[params]\nN = 20\ndt = 1e-3\n"
                        "t_end = 0.2\npairs = 2\ninitial = equal\n")
    assert main(["dominance", "--config", p, "--out", str(tmp_path / "o")]) == 0
    rep = (tmp_path / "o" / "dominance.txt").read_text().split()
    assert "violations=0" in rep


def test_solve_pde_outputs(tmp_path):
    p = write(tmp_path, "[experiment]\nname = solve-pde\n[params]\nh = 0.02\ndt = 0.05\n"
                        "t_end = 0.5\nrecord_times = 0.25, 0.5\n")
    assert main(["solve-pde", "--config", p, "--out", str(tmp_path / "o")]) == 0
    names = set(_files(tmp_path / "o"))
    assert {"cdf_t0.25.csv", "cdf_t0.5.csv", "cdf.csv", "trace.csv", "run.meta"} <= names
    rows = np.loadtxt(tmp_path / "o" / "cdf.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(rows[:, 1]) >= -1e-14) and rows[-1, 1] == 1.0


def test_plots_are_written(tmp_path):
    pytest.importorskip("matplotlib")
    p = write(tmp_path, "[experiment]\nname = solve-pde\n[params]\nh = 0.02\ndt = 0.05\n"
                        "t_end = 0.25\n")
    assert main(["solve-pde", "--config", p, "--out", str(tmp_path / "o"), "--plots"]) == 0
    assert any(n.endswith(".svg") for n in _files(tmp_path / "o"))


# --- expression parser --------------------------------------------------------

@pytest.mark.parametrize("text,value", [
    ("1 + x^2", 5.0),
    ("-x^2", -4.0),
    ("2^3^2", 512.0),
    ("x ** 2 / 4", 1.0),
    ("(1 + tanh(x)^2) * (1 + tanh(y)^2)", (1 + math.tanh(2) ** 2) * (1 + math.tanh(3) ** 2)),
    ("sqrt(1 + x^2) * sqrt(1 + y^2)", math.sqrt(5) * math.sqrt(10)),
    ("abs(x - y) + exp(0) + log(e)", 3.0),
    ("pi * x", 2 * math.pi),
    ("x - -y", 5.0),
    ("1e-3*x", 2e-3),
])
def test_parser_values(text, value):
    assert parse_expression(text, ("x", "y"))(2.0, 3.0) == pytest.approx(value, rel=1e-14)


@pytest.mark.parametrize("text", ["x +", "foo(x)", "x y", "__import__(1)", "w", "(x", ""])
def test_parser_rejects(text):
    with pytest.raises(ConfigError):
        parse_expression(text, ("x", "y"))


def test_parser_broadcasts():
    f = parse_expression("x * y + 1", ("x", "y"))
    out = f(np.arange(3.0)[:, None], np.arange(2.0)[None, :])
    assert out.shape == (3, 2) and out[2, 1] == 3.0
    assert parse_expression("2", ("x",))(np.zeros(4)).shape == (4,)
