"""Data files behind each figure, with the published parameter values built in.

Only data is written; plotting is left to the reader (see notebooks/).
"""

import math

import numpy as np

from ..measure import AnalyticMeasure, PairDynamics, _unit, nonmarkovianity, sigma_perp_ana
from ..spectral import SpectralModel, build_coefficients, gi_kernel
from .config import SweepSpec
from .sweep import run_sweep, write_table

FIGURES = ("fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b", "fig4")

# published parameter values
ALPHA = 0.01
LAMBDA = 0.1
FIG2_DELTA = -0.9
DELTA_RANGE = (-1.0, 0.5)
OMEGA_C_RANGE = (0.2, 20.0)
FIG4_TIMES = (10.0, 40.0)


def fig2_model():
    return SpectralModel.lorentzian(ALPHA, LAMBDA, FIG2_DELTA)


def _sweep_spec(which, points, workers, start, stop):
    if which in ("fig1a", "fig3a"):
        lo, hi = DELTA_RANGE
        return SweepSpec("lorentzian", "delta", lo if start is None else start,
                         hi if stop is None else stop, points=points, alpha=ALPHA, lam=LAMBDA,
                         engines=("full", "rwa", "sa") if which == "fig1a" else ("full",),
                         workers=workers, cpt_times=0)
    lo, hi = OMEGA_C_RANGE
    return SweepSpec("ohmic", "omega_c", lo if start is None else start,
                     hi if stop is None else stop, points=points, spacing="log", alpha=ALPHA,
                     engines=("full", "rwa", "sa") if which == "fig1b" else ("full",),
                     workers=workers, cpt_times=0)


def _sweep_figure(which, out, points, workers, start, stop):
    spec = _sweep_spec(which, points, workers, start, stop)
    rows = run_sweep(spec)
    if which in ("fig1a", "fig1b"):
        cols = ("value", "N_full", "N_RWA", "N_SA", "status")
    else:
        cols = ("value", "N_full", "N_ana", "nu", "status")
    for r in rows:
        r[spec.param] = r["value"]
    cols = (spec.param,) + cols[1:]
    prov = {"figure": which, **spec.provenance()}
    return write_table(out, rows, cols, prov)


def sigma_sa_rows(t_max=60.0):
    """Positive part of sigma for the SA equation with its optimal pair."""
    co = build_coefficients(fig2_model())
    res = nonmarkovianity("sa", co)
    dyn = PairDynamics.build("sa", co, t_max)
    _, s = dyn.pair(res.lambda0)
    rows = [{"t": t, "sigma_sa": max(x, 0.0)} for t, x in zip(dyn.t, s)]
    return rows, {"figure": "fig2a", "lambda0": ",".join(repr(float(x)) for x in res.lambda0)}


def sigma_perp_rows(xi0=math.pi, t_detail=100.0, horizon_factor=5.0):
    """Full-equation sigma for the equatorial pair xi0 against the analytic form.

    Every sample up to ``t_detail`` is written (kind = detail); beyond that
    one row per oscillation cycle at the cycle maximum (kind = cycle_max),
    which is the quantity whose decay gives tau_r.
    """
    co = build_coefficients(fig2_model())
    am = AnalyticMeasure.from_coeffs(co)
    T = horizon_factor * am.tau_r
    dyn = PairDynamics.build("bloch", co, T)
    _, s = dyn.pair(_unit(np.pi / 2, 0.5 * xi0))
    sa = sigma_perp_ana(am, xi0, dyn.t)
    rows = [{"t": t, "sigma_numeric": x, "sigma_ana": y, "kind": "detail"}
            for t, x, y in zip(dyn.t, s, sa) if t <= t_detail]
    rows.extend(cycle_maxima(dyn.t, s, sa, math.pi / (am.omega_a - am.g_i), t_detail))
    return rows, {"figure": "fig2b", "xi0": xi0, "tau_r": am.tau_r, "mu": am.mu}


def cycle_maxima(t, s, sa, period, t_start=0.0):
    """Per-cycle maxima of numeric and analytic sigma; one row per complete cycle."""
    h = t[1] - t[0]
    per = max(1, int(round(period / h)))
    i0 = int(math.ceil(t_start / h))
    n = (t.size - i0) // per
    blk = s[i0: i0 + n * per].reshape(n, per)
    blk_a = sa[i0: i0 + n * per].reshape(n, per)
    k = np.argmax(blk, axis=1)
    tt = t[i0: i0 + n * per].reshape(n, per)[np.arange(n), k]
    return [{"t": a, "sigma_numeric": b, "sigma_ana": c, "kind": "cycle_max"}
            for a, b, c in zip(tt, blk.max(axis=1), blk_a.max(axis=1))]


def gi_rows(omega_max=3.0, points=601, times=FIG4_TIMES):
    """gi kernel at two times with Ohmic and Lorentzian densities peaked at omega_A."""
    w = np.linspace(0.0, omega_max, points)
    ohm = SpectralModel.ohmic(1.0, 1.0).density(w)
    lor = SpectralModel.lorentzian(1.0, LAMBDA, 0.0).density(w)
    ohm = ohm / ohm.max()
    lor = lor / lor.max()
    g1 = gi_kernel(w, times[0])
    g2 = gi_kernel(w, times[1])
    rows = [{"omega": a, "gi_t1": b, "gi_t2": c, "J_O": d, "J_L": e}
            for a, b, c, d, e in zip(w, g1, g2, ohm, lor)]
    return rows, {"figure": "fig4", "t1": times[0], "t2": times[1], "lambda": LAMBDA,
                  "omega_c": 1.0, "J_scale": "peak normalised to 1"}


def emit_figure_data(which, out, points=61, workers=1, start=None, stop=None):
    """Write the data for figure ``which`` to ``out`` and return the CSV text."""
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; choose from {FIGURES}")
    if which in ("fig1a", "fig1b", "fig3a", "fig3b"):
        return _sweep_figure(which, out, points, workers, start, stop)
    if which == "fig2a":
        rows, prov = sigma_sa_rows()
        cols = ("t", "sigma_sa")
    elif which == "fig2b":
        rows, prov = sigma_perp_rows()
        cols = ("t", "sigma_numeric", "sigma_ana", "kind")
    else:
        rows, prov = gi_rows()
        cols = ("omega", "gi_t1", "gi_t2", "J_O", "J_L")
    if which != "fig4":
        prov = {**prov, "alpha": ALPHA, "lambda": LAMBDA, "delta": FIG2_DELTA}
    return write_table(out, rows, cols, prov)


def envelope_fit(rows):
    """tau from a log-linear fit of the cycle maxima of sigma_numeric."""
    t = np.array([r["t"] for r in rows if r["kind"] == "cycle_max"])
    s = np.array([r["sigma_numeric"] for r in rows if r["kind"] == "cycle_max"])
    keep = s > 0
    slope, _ = np.polyfit(t[keep], np.log(s[keep]), 1)
    return -1.0 / slope

