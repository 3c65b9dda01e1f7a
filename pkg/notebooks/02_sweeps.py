"""Reduced-resolution versions of the Fig.-1 and Fig.-3 sweeps.

Run with ``python3 notebooks/02_sweeps.py [points] [workers]`` (defaults: 15
points, 1 worker).  Each panel is a CSV next to this script.  The Lorentzian
curve dips where g_i(inf) changes sign near delta = 0; the Ohmic curve
vanishes at omega_c = omega_A, and there the RWA and SA columns are zero
throughout.
"""

import csv
import sys
from pathlib import Path

import numpy as np

from spinboson_nm.toolcli import emit_figure_data

HERE = Path(__file__).resolve().parent
points = int(sys.argv[1]) if len(sys.argv) > 1 else 15
workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1


def read_table(text):
    """Columns of a figure CSV (provenance lines skipped) as arrays."""
    rows = list(csv.DictReader(l for l in text.splitlines() if not l.startswith("#")))
    out = {}
    for k in rows[0]:
        vals = [r[k] for r in rows]
        try:
            out[k] = np.array(vals, dtype=float)
        except ValueError:
            out[k] = np.array(vals)
    return out


tables = {}
for which in ("fig1a", "fig1b", "fig3a"):
    d = tables[which] = read_table(emit_figure_data(which, HERE / f"{which}.csv", points=points,
                                                    workers=workers))
    name = next(iter(d))
    k = int(np.argmin(d["N_full"]))
    print(f"{which}: min N(full) = {d['N_full'][k]:.3g} at {name} = {d[name][k]:.3g}")

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit(0)

fig, ax = plt.subplots(1, 3, figsize=(13, 3.5))
for a, which in zip(ax, ("fig1a", "fig1b", "fig3a")):
    d = tables[which]
    name = next(iter(d))
    x = d[name]
    a.plot(x, d["N_full"], label="full")
    if which == "fig3a":
        a.plot(x, d["N_ana"], ":", label="analytic")
    else:
        a.plot(x, d["N_RWA"], "--", label="RWA")
        a.plot(x, d["N_SA"], "-.", label="SA")
    if which == "fig1b":
        a.set_xscale("log")
    a.set_yscale("symlog", linthresh=1e-4)
    a.set_xlabel(name)
    a.legend()
fig.tight_layout()
fig.savefig(HERE / "sweeps.png", dpi=120)
print("wrote", HERE / "sweeps.png")
