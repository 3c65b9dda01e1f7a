"""Spectral densities and the time-dependent coefficients of the TCL2 master equation.

Frequencies are measured in units of the qubit splitting ``omega_a`` (1 by
default) and times in units of ``1/omega_a``.

All coefficients are built from two frequency kernels

    P(b, t) = int dw J(w) sin((w - b) t) / (w - b)
    Q(b, t) = int dw J(w) (1 - cos((w - b) t)) / (w - b)

evaluated at b = +omega_a and b = -omega_a:

    f_minus = 2 P(+wa)          f_plus = 2 P(-wa)
    g_r     = P(+wa) + P(-wa)   g_i    = Q(+wa) - Q(-wa)
    h       = Q(+wa)

Each spectral family has an exact, vectorised evaluation of P and Q (the
fast path used on time grids).  The functions ``coeff_f``, ``coeff_g`` and
``coeff_h`` compute the same quantities pointwise by frequency quadrature
and serve as the independent reference.
"""

import csv
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from ._special import cin, exp_e1, expm_ei, sinc, xlog_abs

LORENTZIAN = "lorentzian"
OHMIC = "ohmic"
TABULATED = "tabulated"
KINDS = (LORENTZIAN, OHMIC, TABULATED)

# (omega_a - delta)/lam below which the negative-frequency extension is flagged
LORENTZIAN_VALIDITY_RATIO = 5.0
# |w - wa| below which gi_kernel switches to the cancellation-free branch
GI_SERIES_WIDTH = 1e-3
WEAK_COUPLING_RATIO = 100.0


class ExtensionValidityWarning(UserWarning):
    """The Lorentzian is integrated over negative frequencies where it is not small."""


class RegimeError(ValueError):
    """g_r(inf) <= 0: outside the regime the relaxation-time analysis assumes."""


class QuadratureError(RuntimeError):
    """A frequency quadrature did not reach its tolerance."""


def _positive(name, value):
    if value is None or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class SpectralModel:
    """Environment spectral density J(w).

    Build instances with :meth:`lorentzian`, :meth:`ohmic`, :meth:`tabulated`
    or :func:`load_table` rather than calling the constructor directly.
    """

    kind: str
    alpha: float = 0.0
    lam: float | None = None
    delta: float | None = None
    omega_c: float | None = None
    nodes: tuple = ()
    values: tuple = ()
    tau_c_user: float | None = None
    omega_a: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectral density kind {self.kind!r}")
        _positive("omega_a", self.omega_a)
        if self.kind == LORENTZIAN:
            _positive("alpha", self.alpha)
            _positive("lambda", self.lam)
            if self.delta is None or not np.isfinite(self.delta):
                raise ValueError(f"delta must be finite, got {self.delta!r}")
            if not self.extension_valid:
                warnings.warn(
                    f"(omega_a - delta)/lambda = {self.extension_ratio:.3g} < "
                    f"{LORENTZIAN_VALIDITY_RATIO}; the negative-frequency part of the "
                    "Lorentzian is not negligible",
                    ExtensionValidityWarning,
                    stacklevel=3,
                )
        elif self.kind == OHMIC:
            _positive("alpha", self.alpha)
            _positive("omega_c", self.omega_c)
        else:
            w = np.asarray(self.nodes, dtype=float)
            j = np.asarray(self.values, dtype=float)
            if w.size == 0:
                raise ValueError("tabulated spectral density needs at least one sample")
            if w.size < 2 or w.shape != j.shape:
                raise ValueError("tabulated spectral density needs matching omega and J columns")
            if w[0] != 0.0:
                raise ValueError("tabulated omega samples must start at omega = 0")
            if np.any(np.diff(w) <= 0):
                raise ValueError("tabulated omega samples must be strictly increasing")
            if np.any(j < 0) or not np.all(np.isfinite(j)):
                raise ValueError("tabulated J values must be finite and >= 0")
            _positive("tau_c", self.tau_c_user)

    # constructors

    @classmethod
    def lorentzian(cls, alpha, lam, delta, omega_a=1.0):
        return cls(LORENTZIAN, alpha=float(alpha), lam=float(lam), delta=float(delta),
                   omega_a=float(omega_a))

    @classmethod
    def ohmic(cls, alpha, omega_c, omega_a=1.0):
        return cls(OHMIC, alpha=float(alpha), omega_c=float(omega_c), omega_a=float(omega_a))

    @classmethod
    def tabulated(cls, omega, J, tau_c, omega_a=1.0):
        omega = tuple(float(x) for x in np.asarray(omega, dtype=float).ravel())
        J = tuple(float(x) for x in np.asarray(J, dtype=float).ravel())
        return cls(TABULATED, nodes=omega, values=J,
                   tau_c_user=None if tau_c is None else float(tau_c),
                   omega_a=float(omega_a))

    # derived properties

    @property
    def omega_0(self):
        """Lorentzian peak frequency omega_a - delta."""
        return self.omega_a - self.delta

    @property
    def extension_ratio(self):
        return (self.omega_a - self.delta) / self.lam

    @property
    def extension_valid(self):
        if self.kind != LORENTZIAN:
            return True
        return self.extension_ratio >= LORENTZIAN_VALIDITY_RATIO

    @property
    def tau_c(self):
        if self.kind == LORENTZIAN:
            return 1.0 / self.lam
        if self.kind == OHMIC:
            return 1.0 / self.omega_c
        return self.tau_c_user

    @property
    def tau_s(self):
        return 1.0 / self.omega_a

    @property
    def support(self):
        """Frequency range the integrals run over."""
        if self.kind == LORENTZIAN:
            return (-np.inf, np.inf)
        if self.kind == OHMIC:
            return (0.0, np.inf)
        return (self.nodes[0], self.nodes[-1])

    @cached_property
    def _table(self):
        return np.asarray(self.nodes, dtype=float), np.asarray(self.values, dtype=float)

    def density(self, omega):
        """J(omega), vectorised."""
        w = np.asarray(omega, dtype=float)
        if self.kind == LORENTZIAN:
            lam2 = self.lam ** 2
            return self.alpha / (2 * np.pi) * lam2 / ((w + self.delta - self.omega_a) ** 2 + lam2)
        if self.kind == OHMIC:
            c2 = self.omega_c ** 2
            return self.alpha / np.pi * (w / self.omega_a) * c2 / (w ** 2 + c2)
        nodes, vals = self._table
        return np.interp(w, nodes, vals, left=0.0, right=0.0)

    def describe(self):
        """Flat parameter dictionary (used for provenance headers)."""
        if self.kind == LORENTZIAN:
            return {"spectral": self.kind, "alpha": self.alpha, "lambda": self.lam,
                    "delta": self.delta, "omega_a": self.omega_a}
        if self.kind == OHMIC:
            return {"spectral": self.kind, "alpha": self.alpha, "omega_c": self.omega_c,
                    "omega_a": self.omega_a}
        return {"spectral": self.kind, "n_samples": len(self.nodes),
                "tau_c": self.tau_c_user, "omega_a": self.omega_a}


def eval_spectral_density(model, omega):
    """J(omega) for ``model``.  Negative omega is only meaningful for the Lorentzian."""
    if not isinstance(model, SpectralModel):
        raise TypeError("model must be a SpectralModel")
    w = np.asarray(omega, dtype=float)
    if model.kind != LORENTZIAN and np.any(w < 0):
        raise ValueError("omega must be >= 0 for Ohmic and tabulated densities")
    out = model.density(w)
    return float(out) if np.ndim(out) == 0 else out


def load_table(path, tau_c, omega_a=1.0):
    """Read a two-column (omega, J) text file; lines starting with '#' are comments."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no samples")
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, found {data.shape[1]}")
    return SpectralModel.tabulated(data[:, 0], data[:, 1], tau_c, omega_a=omega_a)


# ---------------------------------------------------------------------------
# exact kernels


def _lorentzian_kernels(m, b, t):
    # int J e^{i(w-b)s} dw = (alpha lam/2) e^{-z s},  z = lam + i(b - w0)
    z = m.lam + 1j * (b - m.omega_0)
    e = -np.expm1(-z * t) / z
    pref = 0.5 * m.alpha * m.lam
    return pref * e.real, pref * e.imag


def _lorentzian_kernels_inf(m, b):
    z = m.lam + 1j * (b - m.omega_0)
    pref = 0.5 * m.alpha * m.lam
    return pref * (1 / z).real, pref * (1 / z).imag


def _ohmic_parts(m, b):
    c = m.omega_c
    kappa = m.alpha / np.pi * c * c / m.omega_a
    den = c * c + b * b
    return c, kappa, b / den, c * c / den


def _ohmic_kernels(m, b, t):
    # partial fractions: w/((w^2+c^2)(w-b)) = A/(w-b) + (B w + C)/(w^2+c^2), B = -A
    c, kappa, A, C = _ohmic_parts(m, b)
    t = np.asarray(t, dtype=float)
    P = np.zeros_like(t)
    Q = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    x = c * tp
    ea = expm_ei(x)
    eb = exp_e1(x)
    s1 = 0.5 * np.pi * np.exp(-x)        # int_0^inf w sin(wt)/(w^2+c^2)
    c0 = s1 / c                          # int_0^inf cos(wt)/(w^2+c^2)
    s0 = (ea + eb) / (2 * c)             # int_0^inf sin(wt)/(w^2+c^2)
    c1 = -(ea - eb) / 2                  # int_0^inf w cos(wt)/(w^2+c^2), regularised
    si, ci = special.sici(abs(b) * tp)
    cb = np.cos(b * tp)
    sb = np.sin(b * tp)
    P[pos] = kappa * (A * (0.5 * np.pi + np.sign(b) * si)
                      + cb * (-A * s1 + C * s0) - sb * (-A * c1 + C * c0))
    # the log-divergent parts of the A and B terms cancel
    Q[pos] = kappa * (A * (ci - np.log(abs(b)) + np.log(c) + cb * c1 + sb * s1)
                      + C * (0.5 * np.pi / c - cb * c0 - sb * s0))
    return P, Q


def _ohmic_kernels_inf(m, b):
    c, kappa, A, C = _ohmic_parts(m, b)
    P = kappa * A * np.pi if b > 0 else 0.0
    Q = kappa * (A * (np.log(c) - np.log(abs(b))) + C * 0.5 * np.pi / c)
    return P, Q


def _table_segments(m, b):
    w, j = m._table
    y = w - b
    slope = np.diff(j) / np.diff(w)
    beta = j[:-1] + slope * (b - w[:-1])     # J = beta + slope * (w - b) on each segment
    return y, slope, beta


def _tabulated_kernels(m, b, t):
    y, slope, beta = _table_segments(m, b)
    d = np.diff(y)
    mid = 0.5 * (y[1:] + y[:-1])
    t = np.asarray(t, dtype=float)
    P = np.empty_like(t)
    Q = np.empty_like(t)
    chunk = max(1, 2_000_000 // y.size)
    for start in range(0, t.size, chunk):
        tc = t[start:start + chunk, None]
        si = np.sign(y) * special.sici(np.abs(y) * tc)[0]
        cn = cin(y * tc)
        sc = sinc(0.5 * d * tc)
        P[start:start + chunk] = (beta * np.diff(si, axis=1)
                                  + slope * d * np.sin(mid * tc) * sc).sum(axis=1)
        Q[start:start + chunk] = (beta * np.diff(cn, axis=1)
                                  + slope * d * (1 - np.cos(mid * tc) * sc)).sum(axis=1)
    return P, Q


def _tabulated_kernels_inf(m, b):
    y, slope, beta = _table_segments(m, b)
    w, j = m._table
    P = 0.5 * np.pi * np.sum(beta * np.diff(np.sign(y)))
    if (y[0] == 0 and j[0] > 0) or (y[-1] == 0 and j[-1] > 0):
        raise ValueError("principal value diverges: J jumps to zero at omega = |b|")
    # sum_j beta_j (ln|y_j+1| - ln|y_j|) regrouped per node so that y = 0 is harmless
    cpad = np.concatenate(([0.0], slope, [0.0]))
    Q = np.sum(np.diff(cpad) * xlog_abs(y)) + np.sum(slope * np.diff(y))
    if j[-1] > 0:
        Q += j[-1] * np.log(abs(y[-1]))
    if j[0] > 0:
        Q -= j[0] * np.log(abs(y[0]))
    return float(P), float(Q)


def kernels(model, b, t):
    """Exact (P, Q) kernels at offset ``b`` for an array of times ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    if model.kind == LORENTZIAN:
        return _lorentzian_kernels(model, b, t)
    if model.kind == OHMIC:
        return _ohmic_kernels(model, b, t)
    return _tabulated_kernels(model, b, t)


def kernels_inf(model, b):
    """t -> infinity limit of the (P, Q) kernels."""
    if model.kind == LORENTZIAN:
        return _lorentzian_kernels_inf(model, b)
    if model.kind == OHMIC:
        return _ohmic_kernels_inf(model, b)
    return _tabulated_kernels_inf(model, b)


@dataclass(frozen=True)
class Coeffs:
    """Master-equation coefficients at one or many times."""

    f_plus: np.ndarray
    f_minus: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def g_r(self):
        return np.real(self.g)

    @property
    def g_i(self):
        return np.imag(self.g)


def coefficients(model, t):
    """f_plus, f_minus, g and h at times ``t`` from the exact kernels."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("times must be finite and >= 0")
    wa = model.omega_a
    Pm, Qm = kernels(model, wa, t)
    Pp, Qp = kernels(model, -wa, t)
    return Coeffs(2 * Pp, 2 * Pm, (Pm + Pp) + 1j * (Qm - Qp), Qm)


def asymptotic_coefficients(model):
    """Coefficients in the t -> infinity limit."""
    wa = model.omega_a
    Pm, Qm = kernels_inf(model, wa)
    Pp, Qp = kernels_inf(model, -wa)
    return Coeffs(2 * Pp, 2 * Pm, complex(Pm + Pp, Qm - Qp), Qm)


# ---------------------------------------------------------------------------
# pointwise quadrature path


_QUAD_LIMIT = 2000
_QUAD_EPSREL = 1e-11


def _check_time(t):
    t = float(t)
    if math.isnan(t) or t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    return t


def _quad_checked(fn, a, b, **kw):
    out = integrate.quad(fn, a, b, full_output=1, limit=_QUAD_LIMIT, **kw)
    val, err = out[0], out[1]
    if len(out) > 3 and not np.isfinite(val):
        raise QuadratureError(f"quadrature over [{a}, {b}] failed")
    if len(out) > 3:
        msg = out[3]
        if err > 1e-7 * max(abs(val), 1e-14):
            raise QuadratureError(f"quadrature over [{a}, {b}] did not converge: {msg}")
    return val


def _osc(fn, a, b, t, phase, trig, scale):
    """int_a^b fn(w) trig(w t - phase) dw; ``b`` may be +inf.  QUADPACK QAWO/QAWF."""
    cp, sp = math.cos(phase), math.sin(phase)
    if t == 0.0:
        base = _quad_checked(fn, a, b, epsabs=1e-14 * scale, epsrel=_QUAD_EPSREL)
        return base * (cp if trig == "cos" else -sp)
    kw = dict(wvar=t, epsabs=1e-15 * scale)
    if math.isfinite(b):
        kw["epsrel"] = _QUAD_EPSREL
    ic = _quad_checked(fn, a, b, weight="cos", **kw)
    is_ = _quad_checked(fn, a, b, weight="sin", **kw)
    if trig == "sin":   # sin(wt - p) = sin wt cos p - cos wt sin p
        return is_ * cp - ic * sp
    return ic * cp + is_ * sp


def _breakpoints(model, b):
    lo, hi = model.support
    pts = {b - 1.0, b, b + 1.0}
    if model.kind == LORENTZIAN:
        w0, lam = model.omega_0, model.lam
        pts |= {w0 - 10 * lam, w0, w0 + 10 * lam}
    elif model.kind == OHMIC:
        pts |= {model.omega_c, 10 * model.omega_c}
    else:
        pts |= set(model.nodes)
    inner = sorted(p for p in pts if lo < p < hi)
    return [lo] + inner + [hi]


def _kernel_quadrature(model, b, t, which):
    """P (which='P') or Q (which='Q') at offset b and finite time t by quadrature."""
    J = model.density
    Jb = float(J(b)) if model.support[0] <= b <= model.support[1] else 0.0
    scale = max(model.alpha, float(np.max(model.values)) if model.kind == TABULATED else 0.0)
    h = 1e-6 * max(1.0, abs(b))
    dJb = float((J(b + h) - J(b - h)) / (2 * h))

    def R(w):
        d = w - b
        if abs(d) < 1e-10:
            return dJb
        return (float(J(w)) - Jb) / d

    def direct(w):
        return float(J(w)) / (w - b)

    pts = _breakpoints(model, b)
    total = 0.0
    for a, c in zip(pts[:-1], pts[1:]):
        adjacent = (a == b or c == b)
        if math.isinf(a):
            # mirror (-inf, c] onto [-c, inf)
            def fm(s):
                return direct(-s)
            if which == "P":
                total += -_osc(fm, -c, np.inf, t, -b * t, "sin", scale)
            else:
                plain = _quad_checked(fm, -c, np.inf, epsabs=1e-15 * scale, epsrel=_QUAD_EPSREL)
                total += plain - _osc(fm, -c, np.inf, t, -b * t, "cos", scale)
            continue
        if math.isinf(c):
            if which == "P":
                total += _osc(direct, a, np.inf, t, b * t, "sin", scale)
            else:
                plain = _quad_checked(direct, a, np.inf, epsabs=1e-15 * scale, epsrel=_QUAD_EPSREL)
                total += plain - _osc(direct, a, np.inf, t, b * t, "cos", scale)
            continue
        if adjacent:
            y0, y1 = (a - b) * t, (c - b) * t
            if which == "P":
                si = special.sici(np.array([abs(y0), abs(y1)]))[0]
                total += Jb * (np.sign(y1) * si[1] - np.sign(y0) * si[0])
                total += _osc(R, a, c, t, b * t, "sin", scale)
            else:
                total += Jb * float(cin(y1) - cin(y0))
                plain = _quad_checked(R, a, c, epsabs=1e-15 * scale, epsrel=_QUAD_EPSREL)
                total += plain - _osc(R, a, c, t, b * t, "cos", scale)
        else:
            if which == "P":
                total += _osc(direct, a, c, t, b * t, "sin", scale)
            else:
                plain = _quad_checked(direct, a, c, epsabs=1e-15 * scale, epsrel=_QUAD_EPSREL)
                total += plain - _osc(direct, a, c, t, b * t, "cos", scale)
    return total


def _lorentzian_f_closed(m, sign, t):
    # literal Appendix-A form; f_plus is f_minus with delta -> delta - 2 wa
    delta = m.delta if sign < 0 else m.delta - 2 * m.omega_a
    lam = m.lam
    j_res = m.alpha / (2 * np.pi) * lam ** 2 / (delta ** 2 + lam ** 2)
    if math.isinf(t):
        return 2 * np.pi * j_res
    bracket = math.cos(delta * t) - delta / lam * math.sin(delta * t)
    return 2 * np.pi * j_res * (1 - math.exp(-lam * t) * bracket)


def _sign_value(sign):
    if sign in ("+", +1, 1):
        return +1
    if sign in ("-", "−", -1):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def coeff_f(model, sign, t):
    """f_plus (sign '+') or f_minus (sign '-') at time t.

    Lorentzian uses the closed form; other families integrate the s-integral
    analytically and the frequency integral by oscillatory QUADPACK rules.
    ``t = inf`` returns the asymptotic value.
    """
    s = _sign_value(sign)
    t = _check_time(t)
    if model.kind == LORENTZIAN:
        return _lorentzian_f_closed(model, s, t)
    b = -s * model.omega_a
    if math.isinf(t):
        return 2 * kernels_inf(model, b)[0]
    if t == 0:
        return 0.0
    return 2 * _kernel_quadrature(model, b, t, "P")


def coeff_h(model, t):
    """RWA Lamb-shift coefficient h(t) by frequency quadrature."""
    t = _check_time(t)
    if math.isinf(t):
        return kernels_inf(model, model.omega_a)[1]
    if t == 0:
        return 0.0
    return _kernel_quadrature(model, model.omega_a, t, "Q")


def gi_kernel(omega, t, omega_a=1.0):
    """Frequency kernel of g_i: -int_0^t cos(w s) sin(wa s) ds.

    Near w = +-wa the direct quotient cancels catastrophically; there the
    equivalent form -sin^2((w+wa)t/2)/(w+wa) + sin^2((w-wa)t/2)/(w-wa),
    written with sinc factors, is used instead.
    """
    w = np.asarray(omega, dtype=float)
    t = float(t)
    wa = float(omega_a)
    dm = w - wa
    dp = w + wa
    near = (np.abs(dm) < GI_SERIES_WIDTH * wa) | (np.abs(dp) < GI_SERIES_WIDTH * wa)
    out = np.empty(np.broadcast(w, t).shape)
    # (t^2 d / 4) sinc^2(d t / 2) = sin^2(d t/2)/d without the division
    stable = 0.25 * t * t * (dm * sinc(0.5 * dm * t) ** 2 - dp * sinc(0.5 * dp * t) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (wa - wa * np.cos(w * t) * np.cos(wa * t)
                  - w * np.sin(w * t) * np.sin(wa * t)) / (w * w - wa * wa)
    out[...] = np.where(near, stable, direct)
    return float(out) if out.ndim == 0 else out


def _gi_quadrature(model, t):
    """2 int J(w) gi_kernel(w, t) dw by composite Gauss-Legendre plus Fourier tails."""
    wa = model.omega_a
    lo, hi = model.support
    if model.kind == LORENTZIAN:
        W = max(50 * wa, abs(model.omega_0) + 200 * model.lam)
        width_j = model.lam / 4
    elif model.kind == OHMIC:
        W = max(50 * model.omega_c, 50 * wa)
        width_j = min(model.omega_c, wa) / 4
    else:
        W = hi
        width_j = np.min(np.diff(model.nodes))
    wl = max(lo, -W)
    wr = min(hi, W)
    pts = [wl, wr]
    if model.kind == TABULATED:
        pts = list(model.nodes)
    for p in (-wa, wa):
        if wl < p < wr:
            pts.append(p)
    pts = sorted(set(pts))
    width = width_j if t == 0 else min(width_j, np.pi / (4 * t))

    xg, wg = np.polynomial.legendre.leggauss(20)
    xh, wh = np.polynomial.legendre.leggauss(10)

    def composite(width):
        fine = coarse = 0.0
        for a, c in zip(pts[:-1], pts[1:]):
            n = max(1, int(math.ceil((c - a) / width)))
            edges = np.linspace(a, c, n + 1)
            half = 0.5 * np.diff(edges)[:, None]
            mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
            wf = mid + half * xg
            fine += float(np.sum(half * wg * model.density(wf) * gi_kernel(wf, t, wa)))
            wc = mid + half * xh
            coarse += float(np.sum(half * wh * model.density(wc) * gi_kernel(wc, t, wa)))
        return fine, coarse

    scale = model.alpha if model.kind != TABULATED else float(np.max(model.values))
    for _ in range(6):
        fine, coarse = composite(width)
        if abs(fine - coarse) <= 1e-10 * max(abs(fine), 1e-6 * scale):
            break
        width /= 2
    else:
        raise QuadratureError("g_i window quadrature did not converge")
    total = fine

    # tails |w| > W: gi = [wa - wa cos(wt) cos(wa t) - w sin(wt) sin(wa t)]/(w^2 - wa^2),
    # an even function of w
    def tail(Jfun):
        f0 = lambda w: float(Jfun(w)) * wa / (w * w - wa * wa)  # noqa: E731
        val = _quad_checked(f0, W, np.inf, epsabs=1e-15 * scale, epsrel=_QUAD_EPSREL)
        if t > 0:
            fc = lambda w: float(Jfun(w)) / (w * w - wa * wa)  # noqa: E731
            fs = lambda w: float(Jfun(w)) * w / (w * w - wa * wa)  # noqa: E731
            kw = dict(wvar=t, epsabs=1e-15 * scale)
            val -= wa * math.cos(wa * t) * _quad_checked(fc, W, np.inf, weight="cos", **kw)
            val -= math.sin(wa * t) * _quad_checked(fs, W, np.inf, weight="sin", **kw)
        return val

    if math.isinf(hi):
        total += tail(model.density)
    if math.isinf(lo):
        total += tail(lambda s: model.density(-s))
    return 2 * total


def coeff_g(model, t):
    """Complex g(t): real part from coeff_f, imaginary part from the g_i kernel."""
    t = _check_time(t)
    if math.isinf(t):
        return complex(asymptotic_coefficients(model).g)
    if t == 0:
        return 0j
    g_r = 0.5 * (coeff_f(model, "+", t) + coeff_f(model, "-", t))
    return complex(g_r, _gi_quadrature(model, t))


def gi_inf_principal_value(model):
    """g_i(inf) = 2 PV int J(w) wa/(w^2 - wa^2) dw by Cauchy-weighted quadrature."""
    wa = model.omega_a
    lo, hi = model.support
    scale = model.alpha if model.kind != TABULATED else float(np.max(model.values))
    # wa/(w^2-wa^2) = 1/2 [1/(w-wa) - 1/(w+wa)]
    total = 0.0
    for b, sgn in ((wa, 0.5), (-wa, -0.5)):
        pts = _breakpoints(model, b)
        for a, c in zip(pts[:-1], pts[1:]):
            if a == b or c == b:
                # merge the two pieces touching the pole into one Cauchy integral
                continue
            if math.isinf(a):
                fn = lambda s, b=b: float(model.density(-s)) / (-s - b)  # noqa: E731
                total += sgn * _quad_checked(fn, -c, np.inf, epsabs=1e-15 * scale,
                                             epsrel=_QUAD_EPSREL)
            else:
                fn = lambda w, b=b: float(model.density(w)) / (w - b)  # noqa: E731
                total += sgn * _quad_checked(fn, a, c, epsabs=1e-15 * scale,
                                             epsrel=_QUAD_EPSREL)
        if lo < b < hi:
            i = pts.index(b)
            a, c = pts[i - 1], pts[i + 1]
            total += sgn * _quad_checked(model.density, a, c, weight="cauchy", wvar=b,
                                         epsabs=1e-15 * scale, epsrel=_QUAD_EPSREL)
    return 2 * total


# ---------------------------------------------------------------------------
# gridded coefficients


_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


def _interval_integrals(model, a, h):
    """int over [a, a+h] of (f_minus, 2 g, h) by 3-point Gauss-Legendre; arrays a, h."""
    a = np.asarray(a, dtype=float)
    h = np.asarray(h, dtype=float)
    nodes = a[:, None] + 0.5 * h[:, None] * (1 + _GL3_X)
    co = coefficients(model, nodes.ravel())
    wts = 0.5 * h[:, None] * _GL3_W
    f_minus = np.sum(wts * co.f_minus.reshape(nodes.shape), axis=1)
    g2 = np.sum(wts * 2 * co.g.reshape(nodes.shape), axis=1)
    hh = np.sum(wts * co.h.reshape(nodes.shape), axis=1)
    return f_minus, g2, hh


def _hermite(y0, d0, y1, d1, h, s):
    """Cubic Hermite interpolant on [0, h] evaluated at offset s."""
    x = s / h
    h00 = (1 + 2 * x) * (1 - x) ** 2
    h10 = x * (1 - x) ** 2
    h01 = x * x * (3 - 2 * x)
    h11 = x * x * (x - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def default_step(model):
    return min(model.tau_s, model.tau_c) / 40.0


def transient_end(model, horizon, tol=1e-6, step=None):
    """First time after which every coefficient stays within ``tol * |g(inf)|`` of its limit."""
    inf = asymptotic_coefficients(model)
    ref = tol * max(abs(inf.g), abs(inf.f_minus), 1e-300)
    scan = min(model.tau_s, model.tau_c) / 8.0
    step = default_step(model) if step is None else step
    last_bad = 0.0
    chunk = 200_000
    t0 = 0.0
    while t0 < horizon:
        ts = t0 + scan * np.arange(chunk)
        ts = ts[ts <= horizon]
        co = coefficients(model, ts)
        dev = np.maximum.reduce([np.abs(co.f_plus - inf.f_plus),
                                 np.abs(co.f_minus - inf.f_minus),
                                 np.abs(co.g - inf.g), np.abs(co.h - inf.h)])
        bad = np.nonzero(dev > ref)[0]
        if bad.size:
            last_bad = ts[bad[-1]]
        t0 = ts[-1] + scan
        if ts.size < chunk:
            break
    t_tail = min(horizon, last_bad + 2 * scan)
    return step * math.ceil(t_tail / step - 1e-9)


@dataclass(frozen=True)
class Timescales:
    tau_s: float
    tau_c: float
    tau_r: float

    def __post_init__(self):
        for name in ("tau_s", "tau_c", "tau_r"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise RegimeError(f"{name} must be positive, got {v}")

    @property
    def weak_coupling(self):
        return self.tau_r / self.tau_c > WEAK_COUPLING_RATIO


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Coefficients on a uniform grid covering the transient, plus asymptotics.

    The grid runs from 0 to ``t_tail``; beyond it every coefficient equals its
    t -> infinity value to within ``tail_tol * |g(inf)|`` and is frozen there,
    so cumulative quantities continue linearly (Gamma) or exponentially (u)
    up to ``horizon``.
    """

    model: SpectralModel
    t: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    g: np.ndarray
    h: np.ndarray
    Gamma: np.ndarray
    Gamma_rwa: np.ndarray
    H: np.ndarray
    u: np.ndarray
    inf: Coeffs
    horizon: float
    tail_tol: float

    @property
    def step(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def t_tail(self):
        return float(self.t[-1])

    @property
    def omega_a(self):
        return self.model.omega_a

    @property
    def f_plus_inf(self):
        return float(self.inf.f_plus)

    @property
    def f_minus_inf(self):
        return float(self.inf.f_minus)

    @property
    def g_inf(self):
        return complex(self.inf.g)

    @property
    def h_inf(self):
        return float(self.inf.h)

    @property
    def theta_inf(self):
        return float(np.angle(self.g_inf))

    @property
    def nu(self):
        g = self.g_inf
        if g.real <= 0:
            raise RegimeError("g_r(inf) <= 0")
        return abs(g.imag) / g.real

    @property
    def mu(self):
        g = self.g_inf
        if g.real <= 0:
            raise RegimeError("g_r(inf) <= 0")
        return abs(g) / g.real

    @property
    def u_inf(self):
        return (self.f_plus_inf - self.f_minus_inf) / (self.f_plus_inf + self.f_minus_inf)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon * (1 + 1e-12)) or np.any(np.isnan(t)):
            raise ValueError(f"times must lie in [0, {self.horizon}]")
        return t

    def at(self, t):
        """Coefficients at arbitrary times in [0, horizon]."""
        t = self._check(t)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        inside = t <= self.t_tail
        fp = np.full(t.shape, self.f_plus_inf)
        fm = np.full(t.shape, self.f_minus_inf)
        g = np.full(t.shape, self.g_inf, dtype=complex)
        h = np.full(t.shape, self.h_inf)
        if np.any(inside):
            co = coefficients(self.model, t[inside])
            fp[inside], fm[inside], g[inside], h[inside] = co.f_plus, co.f_minus, co.g, co.h
        if scalar:
            return Coeffs(fp[0], fm[0], g[0], h[0])
        return Coeffs(fp, fm, g, h)

    def integrals(self, t):
        """(Gamma, Gamma_rwa, H) at arbitrary times in [0, horizon]."""
        t = self._check(t)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        G = np.empty(t.shape, dtype=complex)
        Gr = np.empty(t.shape)
        H = np.empty(t.shape)
        inside = t <= self.t_tail
        ti = t[inside]
        k = np.minimum((ti / self.step).astype(int), self.t.size - 1) if self.t.size > 1 \
            else np.zeros(ti.shape, int)
        rest = ti - self.t[k]
        fm, g2, hh = _interval_integrals(self.model, self.t[k], rest)
        G[inside] = self.Gamma[k] + g2
        Gr[inside] = self.Gamma_rwa[k] + fm
        H[inside] = self.H[k] + hh
        out = ~inside
        dt = t[out] - self.t_tail
        G[out] = self.Gamma[-1] + 2 * self.g_inf * dt
        Gr[out] = self.Gamma_rwa[-1] + self.f_minus_inf * dt
        H[out] = self.H[-1] + self.h_inf * dt
        if scalar:
            return G[0], Gr[0], H[0]
        return G, Gr, H

    def u_at(self, t):
        """u(t) = int_0^t exp(Gamma_r(s) - Gamma_r(t)) (f_plus - f_minus)(s) ds."""
        t = self._check(t)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty(t.shape)
        inside = t <= self.t_tail
        ti = t[inside]
        k = np.minimum((ti / self.step).astype(int), self.t.size - 1) if self.t.size > 1 \
            else np.zeros(ti.shape, int)
        rest = ti - self.t[k]
        out[inside] = _u_advance(self.model, self.t[k], rest, self.u[k])
        ui = self.u_inf
        dt = t[~inside] - self.t_tail
        out[~inside] = ui + (self.u[-1] - ui) * np.exp(-(self.f_plus_inf + self.f_minus_inf) * dt)
        return out[0] if scalar else out

    def to_csv(self, path, times=None):
        """Write t,f_plus,f_minus,g_re,g_im,h,Gamma_re,Gamma_im."""
        if times is None:
            times = self.t
        times = np.asarray(times, dtype=float)
        co = self.at(times)
        G = self.integrals(times)[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "f_plus", "f_minus", "g_re", "g_im", "h", "Gamma_re", "Gamma_im"])
            for row in zip(times, co.f_plus, co.f_minus, co.g.real, co.g.imag, co.h,
                           G.real, G.imag):
                w.writerow([repr(float(x)) for x in row])


def _u_advance(model, a, h, u0):
    """Advance u from a to a + h (arrays) with the exponentially weighted running integral."""
    a = np.asarray(a, dtype=float)
    h = np.asarray(h, dtype=float)
    nodes = a[:, None] + 0.5 * h[:, None] * (1 + _GL3_X)
    ends = np.stack([a, a + h], axis=1)
    co_n = coefficients(model, nodes.ravel())
    co_e = coefficients(model, ends.ravel())
    gr_n = co_n.g_r.reshape(nodes.shape)
    gr_e = co_e.g_r.reshape(ends.shape)
    src = (co_n.f_plus - co_n.f_minus).reshape(nodes.shape)
    # Gamma_r over the interval (exact to GL order), then Hermite-interpolated inside
    dG = np.sum(0.5 * h[:, None] * _GL3_W * 2 * gr_n, axis=1)
    s = nodes - a[:, None]
    G_s = _hermite(0.0, 2 * gr_e[:, :1], dG[:, None], 2 * gr_e[:, 1:], np.where(h > 0, h, 1)[:, None], s)
    w = 0.5 * h[:, None] * _GL3_W
    return np.exp(-dG) * u0 + np.sum(w * np.exp(G_s - dG[:, None]) * src, axis=1)


def build_coefficients(model, horizon=None, step=None, tail_tol=1e-6):
    """Sample the coefficients on a uniform grid and precompute cumulative integrals.

    ``horizon`` defaults to 10 tau_r and ``step`` to min(tau_s, tau_c)/40.
    """
    inf = asymptotic_coefficients(model)
    if horizon is None:
        if inf.g.real <= 0:
            raise RegimeError("g_r(inf) <= 0: pass an explicit horizon")
        horizon = 10.0 / inf.g.real
    horizon = float(horizon)
    if not (horizon > 0 and np.isfinite(horizon)):
        raise ValueError("horizon must be positive and finite")
    step = default_step(model) if step is None else float(step)
    if not step > 0:
        raise ValueError("step must be positive")
    t_tail = transient_end(model, horizon, tail_tol, step)
    n = max(1, int(round(t_tail / step)))
    t = step * np.arange(n + 1)
    co = coefficients(model, t)
    fm_i, g2_i, h_i = _interval_integrals(model, t[:-1], np.full(n, step))
    Gamma = np.concatenate(([0j], np.cumsum(g2_i)))
    Gamma_rwa = np.concatenate(([0.0], np.cumsum(fm_i)))
    H = np.concatenate(([0.0], np.cumsum(h_i)))
    # u by the running integral; one interval at a time is a recursion, so
    # first compute each interval's decay and source, then scan
    decay = np.exp(-(Gamma.real[1:] - Gamma.real[:-1]))
    src = _u_advance(model, t[:-1], np.full(n, step), np.zeros(n))
    u = np.empty(n + 1)
    u[0] = 0.0
    acc = 0.0
    for i in range(n):
        acc = decay[i] * acc + src[i]
        u[i + 1] = acc
    return CoefficientSet(model=model, t=t, f_plus=co.f_plus, f_minus=co.f_minus, g=co.g,
                          h=co.h, Gamma=Gamma, Gamma_rwa=Gamma_rwa, H=H, u=u, inf=inf,
                          horizon=horizon, tail_tol=tail_tol)


def big_gamma(coeffs, t):
    """Gamma(t) = 2 int_0^t g(s) ds."""
    G = coeffs.integrals(t)[0]
    return complex(G) if np.ndim(G) == 0 else G


def timescales(model, coeffs=None):
    """(tau_s, tau_c, tau_r) with tau_r = 1/g_r(inf)."""
    g_r = coeffs.g_inf.real if coeffs is not None else asymptotic_coefficients(model).g.real
    if g_r <= 0:
        raise RegimeError(f"g_r(inf) = {g_r:.3g} <= 0 is outside the assumed regime")
    return Timescales(model.tau_s, model.tau_c, 1.0 / g_r)
