"""Command-line interface: ``spinboson-nm <subcommand> [flags]``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

import argparse
import json
import math
import sys
import warnings

import numpy as np

from .. import __version__
from ..chimap import check_cpt, kraus_from_mapstate
from ..dynamics import ENGINES, EvolutionConfig, MapState, QubitState, evolve, map_trajectory
from ..integrate import IntegrationError
from ..measure import (AnalyticMeasure, MeasureConfig, n_ana_eps, n_ana_finite_T, n_rwa_closed,
                       n_sa_closed, nonmarkovianity, positivity_windows)
from ..spectral import (QuadratureError, RegimeError, SpectralModel, build_coefficients,
                        load_table, timescales)
from .config import ConfigError, load_config
from .figures import FIGURES, emit_figure_data
from .sweep import COLUMNS, format_table, run_sweep, write_sweep

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
ENGINE_ALIASES = {"full": "bloch"}


def _common(suppress=False):
    # the same flags are accepted before and after the subcommand; the copy on
    # each subparser has no defaults so it cannot overwrite a value given earlier
    def d(value):
        return argparse.SUPPRESS if suppress else value

    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model and output (frequencies in units of omega_A)")
    g.add_argument("--spectral", default=d("lorentzian"),
                   help="lorentzian, ohmic or table:<path> (two columns omega, J)")
    g.add_argument("--alpha", type=float, default=d(0.01))
    g.add_argument("--lambda", dest="lam", type=float, default=d(0.1))
    g.add_argument("--delta", type=float, default=d(-0.9))
    g.add_argument("--omega-c", type=float, default=d(1.0))
    g.add_argument("--tau-c", type=float, default=d(None),
                   help="correlation time for table input")
    g.add_argument("--engine", default=d("bloch"),
                   choices=sorted(set(ENGINES) | set(ENGINE_ALIASES)))
    g.add_argument("--tmax", type=float, default=d(None))
    g.add_argument("--out", default=d(None), help="output file (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default=d("json"))
    g.add_argument("--workers", type=int, default=d(1))
    g.add_argument("--seed", type=int, default=d(0))
    return p


def build_parser():
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="spinboson-nm", parents=[_common()],
                                     description="Spin-boson qubit TCL2 dynamics and "
                                                 "trace-distance non-Markovianity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("coeffs", parents=[common], help="coefficients and asymptotics")

    p = sub.add_parser("evolve", parents=[common], help="evolve one initial state")
    p.add_argument("--state", default="1,0,0", help="initial Bloch vector x,y,z")
    p.add_argument("--samples", type=int, default=201)

    p = sub.add_parser("kraus", parents=[common], help="operator-sum form and CPT check")
    p.add_argument("--at", "--times", dest="times", default=None,
                   help="comma-separated times (default 20 log-spaced)")
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("measure", parents=[common], help="non-Markovianity measure")
    p.add_argument("--xi0", default="auto", help="'auto' or a fixed equatorial angle (radians)")
    p.add_argument("--horizon", type=float, default=10.0, help="horizon in units of tau_r")
    p.add_argument("--restarts", type=int, default=0)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep from a TOML config")
    p.add_argument("config")

    p = sub.add_parser("analytic", parents=[common], help="analytic measure and windows")
    p.add_argument("--xi0", type=float, default=math.pi)
    p.add_argument("--windows", type=int, default=5)

    p = sub.add_parser("figure", parents=[common], help="write data for a figure")
    p.add_argument("which", choices=FIGURES)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--stop", type=float, default=None)
    return parser


def make_model(args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.spectral == "lorentzian":
            model = SpectralModel.lorentzian(args.alpha, args.lam, args.delta)
        elif args.spectral == "ohmic":
            model = SpectralModel.ohmic(args.alpha, args.omega_c)
        elif args.spectral.startswith("table:"):
            if args.tau_c is None:
                raise ValueError("--tau-c is required for table input")
            model = load_table(args.spectral[len("table:"):], args.tau_c)
        else:
            raise ValueError(f"unknown --spectral {args.spectral!r}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return model


def _coeffs(model, args, horizon_factor=10.0):
    if args.tmax is not None:
        return build_coefficients(model, horizon=args.tmax)
    return build_coefficients(model, horizon=horizon_factor * timescales(model).tau_r)


def _emit(args, payload=None, rows=None, columns=None, provenance=None):
    if args.format == "csv" and rows is not None:
        text = format_table(rows, columns, provenance or {})
    else:
        text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _engine(args):
    return ENGINE_ALIASES.get(args.engine, args.engine)


def cmd_coeffs(args):
    model = make_model(args)
    co = _coeffs(model, args)
    ts = timescales(model, co)
    payload = {"model": model.describe(), "f_plus_inf": co.f_plus_inf,
               "f_minus_inf": co.f_minus_inf, "g_inf": complex(co.g_inf),
               "h_inf": co.h_inf, "theta_inf": co.theta_inf, "nu": co.nu, "mu": co.mu,
               "tau_s": ts.tau_s, "tau_c": ts.tau_c, "tau_r": ts.tau_r,
               "tau_r_over_tau_c": ts.tau_r / ts.tau_c, "weak_coupling": ts.weak_coupling,
               "t_tail": co.t_tail, "grid_step": co.step}
    c = co.at(co.t)
    G = co.integrals(co.t)[0]
    rows = [dict(t=t, f_plus=a, f_minus=b, g_re=g.real, g_im=g.imag, h=h, Gamma_re=x.real,
                 Gamma_im=x.imag)
            for t, a, b, g, h, x in zip(co.t, c.f_plus, c.f_minus, c.g, c.h, G)]
    cols = ("t", "f_plus", "f_minus", "g_re", "g_im", "h", "Gamma_re", "Gamma_im")
    _emit(args, payload, rows, cols, model.describe())


def _parse_vec(text):
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise ValueError(f"cannot parse vector {text!r}") from None
    if len(v) != 3:
        raise ValueError("a Bloch vector needs three components")
    return v


def cmd_evolve(args):
    model = make_model(args)
    co = _coeffs(model, args, horizon_factor=1.0)
    state = QubitState.from_bloch(*_parse_vec(args.state))
    if args.samples < 2:
        raise ValueError("--samples must be >= 2")
    times = tuple(np.linspace(0.0, co.horizon, args.samples))
    traj = evolve(co, state, EvolutionConfig(engine=_engine(args), times=times,
                                             t_max=co.horizon))
    rows = [dict(t=t, lx=b[0], ly=b[1], lz=b[2]) for t, b in zip(traj.t, traj.bloch)]
    payload = {"engine": traj.engine, "model": model.describe(), "t": traj.t,
               "bloch": traj.bloch}
    _emit(args, payload, rows, ("t", "lx", "ly", "lz"), model.describe())


def cmd_kraus(args):
    model = make_model(args)
    co = _coeffs(model, args)
    if args.times:
        times = np.array(sorted(float(x) for x in args.times.split(",")))
    else:
        times = np.geomspace(min(model.tau_s, model.tau_c) / 40, co.horizon, 20)
    if np.any(times <= 0) or times[-1] > co.horizon:
        raise ValueError("times must lie in (0, horizon]")
    maps = map_trajectory(co, times)
    rows, reports = [], []
    for i, t in enumerate(times):
        ms = MapState(float(t), complex(maps["Gamma"][i]), float(maps["u"][i]),
                      complex(maps["v1"][i]), complex(maps["v2"][i]))
        kd = kraus_from_mapstate(ms)
        rep = check_cpt(kd, args.tol)
        reports.append({**rep.as_dict(), "Lambda": kd.Lambda,
                        "w": [[complex(w).real, complex(w).imag] for w in kd.w]})
        rows.append({"t": t, **{f"Lambda{j + 1}": kd.Lambda[j] for j in range(4)},
                     "residual": rep.residual, "pass": rep.passed})
    cols = ("t", "Lambda1", "Lambda2", "Lambda3", "Lambda4", "residual", "pass")
    _emit(args, {"model": model.describe(), "reports": reports,
                 "all_pass": all(r["pass"] for r in reports)}, rows, cols, model.describe())
    return EXIT_OK


def cmd_measure(args):
    model = make_model(args)
    tau_r = timescales(model).tau_r
    co = build_coefficients(model, horizon=args.horizon * tau_r)
    xi0 = None if args.xi0 == "auto" else float(args.xi0)
    cfg = MeasureConfig(horizon_factor=args.horizon, xi0=xi0, restarts=args.restarts,
                        seed=args.seed)
    res = nonmarkovianity(_engine(args), co, cfg)
    payload = res.as_dict()
    if res.engine == "rwa":
        payload["N_closed"] = n_rwa_closed(co)
    elif res.engine == "sa":
        payload["N_closed"] = n_sa_closed(co)
    _emit(args, payload)


def cmd_sweep(args):
    spec = load_config(args.config)
    rows = run_sweep(spec, workers=args.workers if args.workers > 1 else None)
    out = args.out or spec.out
    if out:
        write_sweep(spec, rows, out)
    else:
        sys.stdout.write(format_table(rows, COLUMNS, spec.provenance()))
    bad = [r for r in rows if r["status"].startswith("numerical")]
    return EXIT_NUMERICAL if bad and len(bad) == len(rows) else EXIT_OK


def cmd_analytic(args):
    model = make_model(args)
    co = _coeffs(model, args)
    am = AnalyticMeasure.from_coeffs(co)
    payload = {"nu": am.nu, "mu": am.mu, "theta_inf": am.theta, "tau_r": am.tau_r,
               "eps": am.eps, "N_ana": am.n_ana, "N_ana_eps": n_ana_eps(am, args.xi0),
               "N_ana_eps_lowest_order": n_ana_eps(am, args.xi0, lowest_order=True),
               "N_ana_T": n_ana_finite_T(am, co.horizon), "T": co.horizon,
               "windows": positivity_windows(am, args.xi0, args.windows),
               "unreliable_near_dip": am.unreliable}
    _emit(args, payload)


def cmd_figure(args):
    out = args.out or f"{args.which}.csv"
    emit_figure_data(args.which, out, points=args.points, workers=args.workers,
                     start=args.start, stop=args.stop)
    print(out)


COMMANDS = {"coeffs": cmd_coeffs, "evolve": cmd_evolve, "kraus": cmd_kraus,
            "measure": cmd_measure, "sweep": cmd_sweep, "analytic": cmd_analytic,
            "figure": cmd_figure}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        if args.workers < 1:
            raise ValueError("--workers must be >= 1")
        code = COMMANDS[args.command](args)
        return EXIT_OK if code is None else code
    except (ConfigError, RegimeError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (QuadratureError, IntegrationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
