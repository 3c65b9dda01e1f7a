"""Parameter sweeps over Lorentzian detuning or Ohmic cutoff.

Each point is computed in isolation (its own coefficients, engines and CPT
scan) so points can run in worker processes; rows are written in sweep order
after all points complete, which keeps the output independent of the worker
count.
"""

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import __version__
from ..chimap import check_cpt, kraus_from_mapstate
from ..dynamics import MapState, map_trajectory
from ..integrate import IntegrationError
from ..measure import MeasureConfig, n_ana_of_nu, n_rwa_closed, n_sa_closed, nonmarkovianity
from ..spectral import (ExtensionValidityWarning, QuadratureError, RegimeError, SpectralModel,
                        asymptotic_coefficients, build_coefficients)

COLUMNS = ("param", "value", "status", "extension_valid", "tau_s", "tau_c", "tau_r", "nu", "mu",
           "theta_inf", "N_full", "xi0", "N_RWA", "N_SA", "N_ana", "residual_estimate",
           "cpt_pass", "min_lambda", "max_residual")


def model_for(spec, value):
    if spec.spectral == "lorentzian":
        return SpectralModel.lorentzian(spec.alpha, spec.lam, value)
    return SpectralModel.ohmic(spec.alpha, value)


def cpt_scan(coeffs, n_times=50, t_max=None, tol=1e-9):
    """CPT certificates at ``n_times`` log-spaced times up to ``t_max`` (default horizon).

    Returns (all passed, min Lambda, max completeness residual).
    """
    if n_times == 0:
        return True, math.nan, math.nan
    t_max = coeffs.horizon if t_max is None else t_max
    t_min = min(coeffs.model.tau_s, coeffs.model.tau_c) / 40.0
    times = np.geomspace(t_min, t_max, n_times)
    maps = map_trajectory(coeffs, times, method="rk4")
    lam_min, res_max, ok = math.inf, 0.0, True
    for i, t in enumerate(times):
        ms = MapState(float(t), complex(maps["Gamma"][i]), float(maps["u"][i]),
                      complex(maps["v1"][i]), complex(maps["v2"][i]))
        rep = check_cpt(kraus_from_mapstate(ms), tol)
        lam_min = min(lam_min, rep.min_lambda)
        res_max = max(res_max, rep.residual)
        ok = ok and rep.passed
    return ok, lam_min, res_max


def sweep_point(spec, value):
    """One row of the sweep table; failures are recorded in ``status``."""
    row = dict.fromkeys(COLUMNS, math.nan)
    row.update(param=spec.param, value=float(value), status="ok", cpt_pass="")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtensionValidityWarning)
            model = model_for(spec, value)
        row["extension_valid"] = model.extension_valid if model.kind == "lorentzian" else True
        tau_r = 1 / _gr_inf(model)
        coeffs = build_coefficients(model, horizon=spec.horizon_factor * tau_r)
        row.update(tau_s=model.tau_s, tau_c=model.tau_c, tau_r=tau_r,
                   nu=coeffs.nu, mu=coeffs.mu, theta_inf=coeffs.theta_inf,
                   N_ana=n_ana_of_nu(coeffs.nu))
        if "full" in spec.engines:
            cfg = MeasureConfig(horizon_factor=spec.horizon_factor, n_polar=spec.n_polar,
                                n_azimuth=spec.n_azimuth, restarts=spec.restarts,
                                seed=spec.seed)
            res = nonmarkovianity("bloch", coeffs, cfg)
            row.update(N_full=res.N, residual_estimate=res.residual_estimate,
                       xi0=math.nan if res.xi0 is None else res.xi0)
            if not res.converged:
                row["status"] = "refinement-not-converged"
        if "rwa" in spec.engines:
            row["N_RWA"] = n_rwa_closed(coeffs)
        if "sa" in spec.engines:
            row["N_SA"] = n_sa_closed(coeffs)
        ok, lam_min, res_max = cpt_scan(coeffs, spec.cpt_times)
        row.update(cpt_pass="" if spec.cpt_times == 0 else ("pass" if ok else "fail"),
                   min_lambda=lam_min, max_residual=res_max)
    except (RegimeError, ValueError) as exc:
        row["status"] = f"invalid: {exc}"
    except (QuadratureError, IntegrationError, FloatingPointError, ArithmeticError) as exc:
        row["status"] = f"numerical: {exc}"
    return row


def _gr_inf(model):
    g_r = asymptotic_coefficients(model).g.real
    if g_r <= 0:
        raise RegimeError("g_r(inf) <= 0")
    return g_r


def _point_job(args):
    spec, value = args
    return sweep_point(spec, value)


def run_sweep(spec, workers=None):
    """Rows (dicts keyed by COLUMNS) in sweep order."""
    workers = spec.workers if workers is None else workers
    jobs = [(spec, float(v)) for v in spec.values()]
    if workers <= 1:
        return [_point_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_job, jobs, chunksize=1))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def header_lines(provenance):
    lines = [f"# spinboson_nm {__version__}"]
    for k, v in provenance.items():
        lines.append(f"# {k} = {_fmt(v) if not isinstance(v, str) else v}")
    return lines


def format_table(rows, columns, provenance):
    """CSV text with a '#' provenance block; floats written with repr (round-trip exact)."""
    buf = io.StringIO()
    for line in header_lines(provenance):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_table(path, rows, columns, provenance):
    text = format_table(rows, columns, provenance)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def write_sweep(spec, rows, path=None):
    path = spec.out if path is None else path
    if path is None:
        raise ValueError("no output path")
    return write_table(path, rows, COLUMNS, spec.provenance())
