import csv
import io
import json
import math

import numpy as np
import pytest

from spinboson_nm.spectral import QuadratureError
from spinboson_nm.toolcli import (ConfigError, SweepSpec, emit_figure_data, load_config,
                                  parse_config, run_sweep, write_sweep)
from spinboson_nm.toolcli import cli, figures, sweep

MINIMAL = """
spectral = "lorentzian"

[sweep]
param = "delta"
start = -1.0
stop = 0.5
"""

QUICK_RUN = """
[run]
n_polar = 3
n_azimuth = 4
cpt_times = 4
horizon_factor = 2
"""


def read_csv(text):
    body = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


# ---------------------------------------------------------------------------
# configuration


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(MINIMAL)
    spec = load_config(p)
    assert spec == SweepSpec("lorentzian", "delta", -1.0, 0.5)
    assert spec.points == 61 and spec.lam == 0.1 and spec.alpha == 0.01
    assert spec.engines == ("full", "rwa", "sa") and spec.cpt_times == 50
    assert np.allclose(spec.values()[[0, -1]], [-1.0, 0.5])


def test_nonpositive_lambda_names_lambda():
    with pytest.raises(ConfigError) as exc:
        parse_config("lambda = -0.1\n" + MINIMAL)
    assert exc.value.field == "lambda"
    assert "lambda" in str(exc.value)


def test_omega_c_in_lorentzian_sweep_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config("omega_c = 2.0\n" + MINIMAL)
    assert exc.value.field == "omega_c"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config("colour = 1\n" + MINIMAL)
    assert exc.value.field == "colour"
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "step = 3\n")
    assert exc.value.field == "sweep.step"
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "[run]\nthreads = 3\n")


def test_parse_error_carries_line_number():
    with pytest.raises(ConfigError) as exc:
        parse_config('spectral = "ohmic"\n[sweep\nparam = 1\n', source="bad.toml")
    assert exc.value.line == 2
    assert "bad.toml:2" in str(exc.value)


@pytest.mark.parametrize("text,field", [
    ('spectral = "ohmic"\n[sweep]\nparam = "delta"\nstart = 1\nstop = 2\n', "param"),
    ('spectral = "ohmic"\n[sweep]\nstart = 0\nstop = 2\n', "start"),
    (MINIMAL + "points = 1\n", "points"),
    (MINIMAL + 'spacing = "cubic"\n', "spacing"),
    ("alpha = 0\n" + MINIMAL, "alpha"),
    (MINIMAL + '[run]\nengines = ["exact"]\n', "engines"),
    ('spectral = "ohmic"\nlambda = 0.1\n[sweep]\nstart = 1\nstop = 2\n', "lambda"),
    ("delta = 0.1\n" + MINIMAL, "delta"),
    ('spectral = "gaussian"\n[sweep]\nstart = 1\nstop = 2\n', "spectral"),
])
def test_validation_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field


# ---------------------------------------------------------------------------
# sweeps


def quick_spec(**kw):
    base = dict(spectral="ohmic", param="omega_c", start=0.5, stop=10.0, points=3,
                spacing="log", n_polar=3, n_azimuth=4, cpt_times=4, horizon_factor=2.0)
    base.update(kw)
    return SweepSpec(**base)


@pytest.fixture(scope="module")
def ohmic_rows():
    return run_sweep(quick_spec())


def test_ohmic_sweep_rows(ohmic_rows):
    assert [r["status"] for r in ohmic_rows] == ["ok"] * 3
    assert [r["value"] for r in ohmic_rows] == pytest.approx([0.5, math.sqrt(5), 10.0])
    for r in ohmic_rows:
        assert r["N_RWA"] == 0 and r["N_SA"] == 0
        assert r["N_full"] > 0
        assert r["cpt_pass"] == "pass"
        assert r["N_ana"] == pytest.approx(sweep.n_ana_of_nu(r["nu"]))


def test_sweep_output_byte_identical_across_workers(tmp_path, ohmic_rows):
    spec = quick_spec()
    a = write_sweep(spec, ohmic_rows, tmp_path / "a.csv")
    b = write_sweep(spec, run_sweep(spec, workers=3), tmp_path / "b.csv")
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.startswith("# spinboson_nm ")
    rows = read_csv(a)
    assert list(rows[0]) == list(sweep.COLUMNS)
    assert float(rows[1]["N_full"]) == ohmic_rows[1]["N_full"]       # repr round-trips


def test_failed_point_is_isolated(monkeypatch):
    real = sweep.build_coefficients

    def flaky(model, horizon=None):
        if abs(model.omega_c - math.sqrt(5)) < 1e-9:
            raise QuadratureError("forced failure")
        return real(model, horizon=horizon)

    monkeypatch.setattr(sweep, "build_coefficients", flaky)
    rows = run_sweep(quick_spec(engines=("rwa", "sa")))
    assert rows[0]["status"] == "ok" and rows[2]["status"] == "ok"
    assert rows[1]["status"].startswith("numerical")
    assert math.isnan(rows[1]["N_RWA"])


def test_lorentzian_dip_near_zero_detuning():
    spec = SweepSpec("lorentzian", "delta", -0.9, 0.3, points=5, engines=("full",),
                     n_polar=3, n_azimuth=4, cpt_times=0, horizon_factor=2.0)
    rows = run_sweep(spec)
    N = [r["N_full"] for r in rows]
    assert int(np.argmin(N)) == 3           # delta = 0
    assert N[3] < 0.01 * N[0]


# ---------------------------------------------------------------------------
# figure data


def test_fig4_columns(tmp_path):
    text = emit_figure_data("fig4", tmp_path / "f4.csv")
    rows = read_csv(text)
    assert list(rows[0]) == ["omega", "gi_t1", "gi_t2", "J_O", "J_L"]
    assert len(rows) == 601
    jl = np.array([float(r["J_L"]) for r in rows])
    w = np.array([float(r["omega"]) for r in rows])
    assert w[np.argmax(jl)] == pytest.approx(1.0) and jl.max() == pytest.approx(1.0)
    jo = np.array([float(r["J_O"]) for r in rows])
    assert w[np.argmax(jo)] == pytest.approx(1.0, abs=0.01)
    g1 = np.array([float(r["gi_t1"]) for r in rows])
    k = int(np.argmin(np.abs(w - 1)))
    assert g1[k] == pytest.approx(-math.sin(10.0) ** 2 / 2, abs=1e-12)


def test_fig1b_rwa_sa_identically_zero(tmp_path):
    text = emit_figure_data("fig1b", tmp_path / "f1b.csv", points=3)
    rows = read_csv(text)
    assert list(rows[0]) == ["omega_c", "N_full", "N_RWA", "N_SA", "status"]
    assert all(float(r["N_RWA"]) == 0 and float(r["N_SA"]) == 0 for r in rows)
    assert "# figure = fig1b" in text


def test_unknown_figure(tmp_path):
    with pytest.raises(ValueError):
        emit_figure_data("fig9", tmp_path / "x.csv")


def test_envelope_fit_on_synthetic_rows():
    t = np.linspace(0, 3e4, 300)
    rows = [{"t": a, "sigma_numeric": 2 * math.exp(-a / 1.5e4), "kind": "cycle_max"} for a in t]
    assert figures.envelope_fit(rows) == pytest.approx(1.5e4)


# ---------------------------------------------------------------------------
# command line


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_coeffs_json(capsys):
    code, out, _ = run_cli(capsys, "coeffs")
    assert code == 0
    d = json.loads(out)
    assert d["tau_r_over_tau_c"] == pytest.approx(1494, rel=0.01)


def test_cli_coeffs_csv(capsys, tmp_path):
    p = tmp_path / "c.csv"
    code, _, _ = run_cli(capsys, "coeffs", "--format", "csv", "--out", str(p), "--tmax", "20")
    assert code == 0
    header = [l for l in p.read_text().splitlines() if not l.startswith("#")][0]
    assert header == "t,f_plus,f_minus,g_re,g_im,h,Gamma_re,Gamma_im"


def test_cli_kraus(capsys):
    code, out, _ = run_cli(capsys, "kraus", "--at", "1,100,1000")
    assert code == 0
    d = json.loads(out)
    assert d["all_pass"] and len(d["reports"]) == 3
    rep = d["reports"][0]
    assert set(rep) >= {"t", "Lambda", "completeness_residual", "pass"}


def test_cli_analytic(capsys):
    code, out, _ = run_cli(capsys, "analytic", "--windows", "3")
    assert code == 0
    d = json.loads(out)
    assert d["nu"] == pytest.approx(5.628, abs=1e-3)
    assert d["N_ana"] == pytest.approx(1.347, abs=1e-3)
    assert len(d["windows"]) >= 3


def test_cli_evolve_and_measure(capsys):
    code, out, _ = run_cli(capsys, "--engine", "sa", "evolve", "--state", "0,0,1",
                           "--tmax", "50", "--samples", "5")
    assert code == 0
    assert len(json.loads(out)["t"]) == 5
    code, out, _ = run_cli(capsys, "--spectral", "ohmic", "--omega-c", "2", "--engine", "rwa",
                           "measure", "--horizon", "0.2")
    assert code == 0
    d = json.loads(out)
    assert d["N"] == 0 and d["N_closed"] == 0


def test_cli_sweep(capsys, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text('spectral = "ohmic"\n[sweep]\nstart = 0.5\nstop = 2\npoints = 2\n'
                   '[run]\nengines = ["rwa", "sa"]\ncpt_times = 3\nhorizon_factor = 1\n')
    out = tmp_path / "s.csv"
    code, _, _ = run_cli(capsys, "sweep", str(cfg), "--out", str(out))
    assert code == 0
    rows = read_csv(out.read_text())
    assert [r["status"] for r in rows] == ["ok", "ok"]


@pytest.mark.parametrize("argv", [
    ["--alpha", "-1", "coeffs"],
    ["coeffs", "--spectral", "gaussian"],
    ["evolve", "--state", "2,0,0"],
    ["sweep", "/nonexistent/config.toml"],
    ["nosuchcommand"],
    ["--spectral", "table:/nonexistent.txt", "--tau-c", "1", "coeffs"],
])
def test_cli_validation_exit_code(capsys, argv):
    code, _, _ = run_cli(capsys, *argv)
    assert code == 1


def test_cli_numerical_exit_code(capsys, monkeypatch):
    def boom(*a, **k):
        raise QuadratureError("forced")
    monkeypatch.setattr(cli, "build_coefficients", boom)
    code, _, err = run_cli(capsys, "coeffs")
    assert code == 2 and "numerical failure" in err


def test_cli_subcommand_flags_do_not_reset_globals(capsys):
    code, out, _ = run_cli(capsys, "--delta", "0.0", "analytic")
    assert code == 0
    nu0 = json.loads(out)["nu"]
    code, out, _ = run_cli(capsys, "analytic", "--delta", "0.0")
    assert json.loads(out)["nu"] == nu0
    assert nu0 < 0.05
