"""Trace distance, its growth rate and the non-Markovianity measure.

For a pair of initial states the Bloch difference evolves linearly,
d(dl)/dt = A(t) dl, so each engine is reduced to a per-sample 2x2 map F_k
acting on the (x, y) part, a 2x2 matrix G_k with d|f|^2/dt = 2 f.G_k f, and a
scalar decay for the z part.  These are computed once per (engine,
coefficients, horizon) and reused for every candidate pair.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    QubitState,
    _expm2_real,
    bloch_generator,
    map_trajectory,
    rotating_frame_matrix,
)
from .integrate import rk4_propagators
from .spectral import RegimeError

SAMPLE_STEP = np.pi / 40
MAX_SIGMA_STEP = np.pi / 10
TIE_TOL = 1e-9
NU_DIP = 0.1


def trace_distance(rho1, rho2):
    """1/2 ||rho1 - rho2||_1 = 1/2 |dl| for qubits."""
    return 0.5 * float(np.linalg.norm(rho1.bloch - rho2.bloch))


def trace_distance_eig(rho1, rho2):
    """Same quantity from the eigenvalues of rho1 - rho2 (reference path)."""
    d = np.asarray(rho1.rho if isinstance(rho1, QubitState) else rho1) - \
        np.asarray(rho2.rho if isinstance(rho2, QubitState) else rho2)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


# ---------------------------------------------------------------------------
# growth intervals


def _hermite_at(t0, h, D0, s0, D1, s1, tq):
    x = (tq - t0) / h
    return ((1 + 2 * x) * (1 - x) ** 2 * D0 + x * (1 - x) ** 2 * h * s0
            + x * x * (3 - 2 * x) * D1 + x * x * (x - 1) * h * s1)


def growth_intervals(t, D, sigma):
    """Intervals where sigma > 0 and the increase of D over each.

    Edges are located by linear interpolation of sigma between samples and D
    there by cubic Hermite interpolation using (D, sigma) at the bracketing
    samples.  Returns (a, b, increments).
    """
    pos = sigma > 0
    if not pos.any():
        return np.empty(0), np.empty(0), np.empty(0)
    edge = np.diff(pos.astype(np.int8))
    starts = np.nonzero(edge == 1)[0] + 1          # first positive sample
    ends = np.nonzero(edge == -1)[0]               # last positive sample
    if pos[0]:
        starts = np.concatenate(([0], starts))
    if pos[-1]:
        ends = np.concatenate((ends, [pos.size - 1]))
    a = t[starts].astype(float)
    Da = D[starts].astype(float)
    inner = starts > 0
    k = starts[inner] - 1
    h = t[k + 1] - t[k]
    frac = sigma[k] / (sigma[k] - sigma[k + 1])
    a[inner] = t[k] + frac * h
    Da[inner] = _hermite_at(t[k], h, D[k], sigma[k], D[k + 1], sigma[k + 1], a[inner])
    b = t[ends].astype(float)
    Db = D[ends].astype(float)
    inner = ends < pos.size - 1
    k = ends[inner]
    h = t[k + 1] - t[k]
    frac = sigma[k] / (sigma[k] - sigma[k + 1])
    b[inner] = t[k] + frac * h
    Db[inner] = _hermite_at(t[k], h, D[k], sigma[k], D[k + 1], sigma[k + 1], b[inner])
    inc = np.maximum(Db - Da, 0.0)
    return a, b, inc


@dataclass(frozen=True, eq=False)
class SigmaTrace:
    t: np.ndarray
    D: np.ndarray
    sigma: np.ndarray
    intervals: np.ndarray          # (n, 2)
    increments: np.ndarray

    @property
    def total_increase(self):
        return float(np.sum(self.increments))


def _fd_derivative(t, y):
    """Fourth-order central differences on a uniform grid (one-sided near the ends)."""
    h = t[1] - t[0]
    d = np.empty_like(y)
    if y.size >= 5:
        d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
        d[:2] = (-25 * y[:2] + 48 * y[1:3] - 36 * y[2:4] + 16 * y[3:5] - 3 * y[4:6]) / (12 * h) \
            if y.size >= 6 else np.gradient(y, h)[:2]
        d[-2:] = (25 * y[-2:] - 48 * y[-3:-1] + 36 * y[-4:-2] - 16 * y[-5:-3] + 3 * y[-6:-4]) \
            / (12 * h) if y.size >= 6 else np.gradient(y, h)[-2:]
    else:
        d = np.gradient(y, h)
    return d


def sigma_series(traj1, traj2, coeffs=None):
    """D(t), sigma(t) and growth intervals for a pair of trajectories.

    sigma is the exact Bloch-equation derivative when ``coeffs`` is given and
    the trajectories come from a full-equation engine; otherwise fourth-order
    finite differences of D.
    """
    if traj1.t.shape != traj2.t.shape or np.any(traj1.t != traj2.t):
        raise ValueError("trajectories are on different time grids")
    t = traj1.t
    steps = np.diff(t)
    if steps.size == 0:
        raise ValueError("need at least two samples")
    if steps.max() > MAX_SIGMA_STEP * (1 + 1e-12):
        raise ValueError(f"grid step {steps.max():.4g} exceeds pi/10")
    dl = traj1.bloch - traj2.bloch
    norm = np.linalg.norm(dl, axis=1)
    D = 0.5 * norm
    full = traj1.engine in ("bloch", "closed") and traj2.engine in ("bloch", "closed")
    if coeffs is not None and full:
        A = bloch_generator(coeffs, t)[:, :3, :3]
        quad = np.einsum("ki,kij,kj->k", dl, A, dl)
        with np.errstate(invalid="ignore", divide="ignore"):
            sigma = np.where(norm > 0, quad / (2 * np.where(norm > 0, norm, 1)), 0.0)
    else:
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("finite-difference sigma needs a uniform grid")
        sigma = _fd_derivative(t, D)
    a, b, inc = growth_intervals(t, D, sigma)
    return SigmaTrace(t, D, sigma, np.stack([a, b], axis=1), inc)


def sigma_c10(coeffs, t, dl):
    """sigma from the closed expression in terms of |dl|, dl_z and xi(t) (reference)."""
    t = np.asarray(t, dtype=float)
    co = coeffs.at(t)
    norm = np.linalg.norm(dl, axis=1)
    dz2 = dl[:, 2] ** 2
    xi = np.sign(dl[:, 0] * dl[:, 1]) * np.arccos(
        np.clip((dl[:, 0] ** 2 - dl[:, 1] ** 2) / np.maximum(dl[:, 0] ** 2 + dl[:, 1] ** 2,
                                                            1e-300), -1, 1))
    theta = np.angle(co.g)
    n2 = norm ** 2
    return norm / 2 * (-co.g.real * (1 + dz2 / n2)
                       + np.abs(co.g) * np.cos(2 * coeffs.omega_a * t + theta + xi)
                       * (1 - dz2 / n2))


# ---------------------------------------------------------------------------
# pair dynamics


@dataclass(eq=False)
class PairDynamics:
    """Linear evolution of a Bloch difference vector on a uniform sample grid."""

    engine: str
    t: np.ndarray
    F: np.ndarray          # (K, 2, 2): frame vector f_k = F_k dl_xy(0), |f_k| = |dl_xy(t_k)|
    G: np.ndarray          # (K, 2, 2): d/dt |f|^2 / 2 = f . G f
    zfac: np.ndarray       # dl_z(t) = zfac dl_z(0)
    zrate: np.ndarray      # d dl_z/dt = -zrate dl_z

    @classmethod
    def build(cls, engine, coeffs, horizon, sample_step=SAMPLE_STEP):
        n = max(2, int(math.ceil(horizon / sample_step - 1e-9)))
        t = np.linspace(0.0, horizon, n + 1)
        co = coeffs.at(t)
        Gamma, Gamma_rwa, _ = coeffs.integrals(t)
        K = t.size
        eye = np.broadcast_to(np.eye(2), (K, 2, 2))
        if engine == "rwa":
            F = np.exp(-0.5 * Gamma_rwa)[:, None, None] * eye
            G = (-0.5 * co.f_minus)[:, None, None] * eye
            return cls(engine, t, F, G, np.exp(-Gamma_rwa), co.f_minus)
        zfac = np.exp(-Gamma.real)
        zrate = co.f_plus + co.f_minus
        if engine == "sa":
            F = np.exp(-0.5 * Gamma.real)[:, None, None] * eye
            G = (-co.g.real)[:, None, None] * eye
            return cls(engine, t, F, G, zfac, zrate)
        if engine == "closed":
            maps = map_trajectory(coeffs, t)
            pref = np.exp(-0.5 * np.conj(maps["Gamma"]))
            a = pref * maps["v1"]
            b = pref * maps["v2"]
            # c = a c0 + b conj(c0), c = x - i y
            F = np.empty((K, 2, 2))
            F[:, 0, 0] = (a + b).real
            F[:, 0, 1] = (a - b).imag
            F[:, 1, 0] = -(a + b).imag
            F[:, 1, 1] = (a - b).real
            G = bloch_generator(coeffs, t)[:, :2, :2]
            return cls(engine, t, F, G, zfac, zrate)
        if engine != "bloch":
            raise ValueError(f"unknown engine {engine!r}")
        h = t[1] - t[0]
        kh = min(K - 1, int(math.ceil(coeffs.t_tail / h - 1e-9)))
        sub = min(coeffs.model.tau_s, coeffs.model.tau_c) / 40.0
        F = np.empty((K, 2, 2))
        G = np.empty((K, 2, 2))
        if kh > 0:
            F[: kh + 1] = rk4_propagators(lambda ts: bloch_generator(coeffs, ts)[:, :2, :2],
                                          t[: kh + 1], sub)
        else:
            F[0] = np.eye(2)
        G[: kh + 1] = bloch_generator(coeffs, t[: kh + 1])[:, :2, :2]
        if kh < K - 1:
            wa = coeffs.omega_a
            Kmat = rotating_frame_matrix(coeffs.g_inf, wa)
            th = t[kh]
            cs, sn = math.cos(wa * th), math.sin(wa * th)
            # (x, y) -> (Re c~, Im c~) with c~ = e^{-i wa th} (x - i y)
            T = np.array([[cs, -sn], [-sn, -cs]])
            E = _expm2_real(Kmat, t[kh + 1:] - th)
            F[kh + 1:] = E @ (T @ F[kh])
            G[kh + 1:] = Kmat
        return cls(engine, t, F, G, zfac, zrate)

    def __post_init__(self):
        # |f|^2 = d.S d and f.G f = d.Q d for d = dl_xy(0): store the symmetric
        # 2x2 forms as (xx, xy, yy) so a candidate costs a few array passes
        F, G = self.F, self.G
        S = np.einsum("kji,kjl->kil", F, F)
        Q = np.einsum("kji,kjm,kml->kil", F, G, F)
        Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
        self._S = (S[:, 0, 0].copy(), S[:, 0, 1].copy(), S[:, 1, 1].copy())
        self._Q = (Q[:, 0, 0].copy(), Q[:, 0, 1].copy(), Q[:, 1, 1].copy())
        self._z2 = self.zfac ** 2
        self._zq = self.zrate * self._z2

    def truncate(self, horizon):
        """The same dynamics restricted to samples t <= horizon."""
        k = int(np.searchsorted(self.t, horizon * (1 + 1e-12), side="right"))
        if k < 2:
            raise ValueError("horizon shorter than one sample step")
        return PairDynamics(self.engine, self.t[:k], self.F[:k], self.G[:k], self.zfac[:k],
                            self.zrate[:k])

    def pair(self, n):
        """(D, sigma) for the antipodal pair +-n (unit vector)."""
        x, y, z = 2 * np.asarray(n, dtype=float)
        Sxx, Sxy, Syy = self._S
        Qxx, Qxy, Qyy = self._Q
        norm2 = (x * x) * Sxx + (2 * x * y) * Sxy + (y * y) * Syy + (z * z) * self._z2
        quad = (x * x) * Qxx + (2 * x * y) * Qxy + (y * y) * Qyy - (z * z) * self._zq
        norm = np.sqrt(np.maximum(norm2, 0.0))
        D = 0.5 * norm
        with np.errstate(invalid="ignore", divide="ignore"):
            sigma = np.where(norm > 0, quad / (2 * np.where(norm > 0, norm, 1)), 0.0)
        return D, sigma

    def measure(self, n):
        """Sum of trace-distance increases for the pair +-n, plus its intervals."""
        D, sigma = self.pair(n)
        a, b, inc = growth_intervals(self.t, D, sigma)
        return float(np.sum(inc)), a, b, inc


# ---------------------------------------------------------------------------
# optimisation over antipodal pure pairs


def _unit(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                     math.cos(theta)])


def _golden_max(f, lo, hi, tol):
    """Golden-section search for a maximum of f on [lo, hi]; returns (x, f(x))."""
    inv = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < 200:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
        it += 1
    return (c, fc) if fc >= fd else (d, fd)


@dataclass(frozen=True)
class MeasureConfig:
    horizon_factor: float = 10.0           # T = horizon_factor * tau_r
    horizon: float | None = None           # absolute T, overrides the factor
    n_polar: int = 13
    n_azimuth: int = 24
    xi_tol: float = 1e-3
    sample_step: float = SAMPLE_STEP
    xi0: float | None = None               # fixed equatorial pair, no optimisation
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_polar < 2 or self.n_azimuth < 2:
            raise ValueError("optimizer grid needs at least 2x2 points")
        if not 0 < self.sample_step <= MAX_SIGMA_STEP:
            raise ValueError("sample_step must lie in (0, pi/10]")


@dataclass(frozen=True, eq=False)
class MeasureResult:
    N: float
    lambda0: np.ndarray
    xi0: float | None
    engine: str
    horizon: float
    residual_estimate: float
    intervals: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    nu: float | None = None
    mu: float | None = None
    N_ana: float | None = None
    converged: bool = True
    notes: tuple = ()

    def as_dict(self, max_intervals=None):
        iv = self.intervals if max_intervals is None else self.intervals[:max_intervals]
        return {"N": self.N, "xi0": self.xi0, "lambda0": [float(x) for x in self.lambda0],
                "engine": self.engine, "horizon": self.horizon,
                "residual_estimate": self.residual_estimate,
                "intervals": [[float(a), float(b)] for a, b in iv],
                "n_intervals": int(len(self.intervals)),
                "nu": self.nu, "mu": self.mu, "N_ana": self.N_ana,
                "converged": self.converged, "notes": list(self.notes)}


def _xi_of(n):
    """xi(0) of an equatorial pair (n = (cos xi/2, sin xi/2, 0) up to sign)."""
    phi = math.atan2(n[1], n[0]) % np.pi
    return (2 * phi) % (2 * np.pi)


def _rank_key(N, n, best_N):
    # within TIE_TOL of the best: smallest polar deviation, then smallest xi
    polar_dev = abs(math.acos(max(-1.0, min(1.0, abs(n[2])))) - np.pi / 2)
    return (polar_dev, _xi_of(n) if polar_dev < 1e-12 else math.atan2(n[1], n[0]) % (2 * np.pi))


def _select(cands):
    best = max(c[0] for c in cands)
    tied = [c for c in cands if c[0] >= best - TIE_TOL]
    return min(tied, key=lambda c: _rank_key(c[0], c[1], best))


def nonmarkovianity(engine, coeffs, cfg=None, dynamics=None):
    """Non-Markovianity of the ``engine`` dynamics, maximised over antipodal pure pairs.

    Coarse polar x azimuth grid on the hemisphere, then golden-section
    refinement of the best point (azimuth, and polar angle if it is off the
    equator).  ``dynamics`` may pass a prebuilt PairDynamics.
    """
    cfg = MeasureConfig() if cfg is None else cfg
    g_inf = coeffs.g_inf
    tau_r = 1 / g_inf.real if g_inf.real > 0 else math.inf
    T = cfg.horizon if cfg.horizon is not None else cfg.horizon_factor * tau_r
    if not math.isfinite(T):
        raise RegimeError("g_r(inf) <= 0: give an explicit horizon")
    if T < 10 * coeffs.model.tau_c:
        raise ValueError(f"horizon {T:.4g} shorter than 10 tau_c")
    if T > coeffs.horizon * (1 + 1e-12):
        raise ValueError(f"horizon {T:.4g} beyond the coefficient horizon {coeffs.horizon:.4g}")
    dyn = dynamics if dynamics is not None else PairDynamics.build(engine, coeffs, T,
                                                                   cfg.sample_step)
    notes = []
    cache = {}

    def N_of(n):
        key = tuple(np.round(n, 15))
        if key not in cache:
            cache[key] = dyn.measure(n)[0]
        return cache[key]

    converged = True
    if cfg.xi0 is not None:
        n = _unit(np.pi / 2, 0.5 * cfg.xi0)
        best_n = n
    else:
        cands = []
        thetas = np.linspace(0, np.pi / 2, cfg.n_polar)
        for th in thetas:
            if th == 0:
                phis = [0.0]
            elif th == thetas[-1]:
                phis = np.arange(cfg.n_azimuth // 2 or 1) * (2 * np.pi / cfg.n_azimuth)
            else:
                phis = np.arange(cfg.n_azimuth) * (2 * np.pi / cfg.n_azimuth)
            for ph in phis:
                n = _unit(th, ph)
                cands.append((N_of(n), n, th, ph))
        rng = np.random.default_rng(cfg.seed)
        for _ in range(cfg.restarts):
            th = math.acos(rng.uniform(0, 1))
            ph = rng.uniform(0, 2 * np.pi)
            n = _unit(th, ph)
            cands.append((N_of(n), n, th, ph))
        N0, n0, th0, ph0 = _select(cands)
        dphi = 2 * np.pi / cfg.n_azimuth
        refined = [(N0, n0, th0, ph0)]
        if N0 > 0:
            # xi = 2 phi on the equator, so |d xi| < tol means |d phi| < tol/2
            ph1, N1 = _golden_max(lambda p: N_of(_unit(th0, p)), ph0 - dphi, ph0 + dphi,
                                  0.5 * cfg.xi_tol)
            refined.append((N1, _unit(th0, ph1), th0, ph1))
            if abs(th0 - np.pi / 2) > 1e-12:
                dth = (np.pi / 2) / (cfg.n_polar - 1)
                th2, N2 = _golden_max(lambda a: N_of(_unit(a, ph1)), max(0.0, th0 - dth),
                                      min(np.pi - 1e-12, th0 + dth), 0.5 * cfg.xi_tol)
                refined.append((N2, _unit(th2, ph1), th2, ph1))
            if refined[-1][0] < N0 - TIE_TOL and refined[1][0] < N0 - TIE_TOL:
                converged = False
                notes.append("refinement did not improve on the grid optimum")
        best_n = _select(refined)[1]
    N, a, b, inc = dyn.measure(best_n)
    if best_n[2] < 0 or (best_n[2] == 0 and math.atan2(best_n[1], best_n[0]) < 0):
        best_n = -best_n
    equatorial = abs(best_n[2]) < 1e-12
    xi0 = _xi_of(best_n) if equatorial else None
    nu = mu = n_ana_val = None
    residual = float("nan")
    if g_inf.real > 0:
        am = AnalyticMeasure.from_coeffs(coeffs)
        nu, mu, n_ana_val = am.nu, am.mu, am.n_ana
        residual = math.exp(-T / tau_r) * n_ana_val
        if nu < NU_DIP:
            notes.append("nu < 0.1: analytic value unreliable near the dip")
    return MeasureResult(N=N, lambda0=best_n, xi0=xi0, engine=engine, horizon=T,
                         residual_estimate=residual, intervals=np.stack([a, b], axis=1),
                         increments=inc, nu=nu, mu=mu, N_ana=n_ana_val,
                         converged=converged, notes=tuple(notes))


# ---------------------------------------------------------------------------
# closed-form RWA / SA measures


def _negative_part_integral(coeffs, rate_fn, decay_fn, T):
    """int_0^T max(0, -rate) exp(-decay) dt over the transient grid."""
    from scipy import integrate, optimize

    t = coeffs.t[coeffs.t <= T]
    if t.size < 2:
        return 0.0
    r = rate_fn(t)
    neg = r < 0
    if not neg.any():
        return 0.0
    total = 0.0
    edge = np.diff(neg.astype(np.int8))
    starts = list(np.nonzero(edge == 1)[0])        # neg begins after index k
    ends = list(np.nonzero(edge == -1)[0])         # neg ends after index k
    if neg[0]:
        starts = [None] + starts
    if neg[-1]:
        ends = ends + [None]

    def f(s):
        return float(-rate_fn(np.array([s]))[0] * math.exp(-decay_fn(np.array([s]))[0]))

    def root(k):
        return optimize.brentq(lambda s: float(rate_fn(np.array([s]))[0]), t[k], t[k + 1],
                               xtol=1e-14, rtol=1e-14)

    for s, e in zip(starts, ends):
        a = t[0] if s is None else root(s)
        b = t[-1] if e is None else root(e)
        val, err = integrate.quad(f, a, b, limit=500, epsabs=1e-15, epsrel=1e-11)
        total += max(val, 0.0)
    return total


def _closed_measure_horizon(coeffs, horizon):
    T = coeffs.horizon if horizon is None else float(horizon)
    if T > coeffs.horizon * (1 + 1e-12):
        raise ValueError("horizon beyond the coefficient grid")
    return T


def n_rwa_closed(coeffs, horizon=None):
    """1/2 int [|f_minus| - f_minus] exp(-Gamma_rwa) dt over the negative-f_minus regions."""
    T = _closed_measure_horizon(coeffs, horizon)
    if coeffs.f_minus_inf < 0:
        raise ValueError("f_minus(inf) < 0: negative rate persists beyond the horizon")
    if T < coeffs.t_tail and np.any(coeffs.f_minus[coeffs.t > T] < 0):
        raise ValueError("horizon too short: f_minus still negative after it")
    return _negative_part_integral(
        coeffs, lambda s: coeffs.at(s).f_minus, lambda s: coeffs.integrals(s)[1], T)


def n_sa_closed(coeffs, horizon=None):
    """int [|g_r| - g_r] exp(-Gamma_r) dt over the negative-g_r regions."""
    T = _closed_measure_horizon(coeffs, horizon)
    if coeffs.g_inf.real < 0:
        raise ValueError("g_r(inf) < 0: negative rate persists beyond the horizon")
    if T < coeffs.t_tail and np.any(coeffs.g.real[coeffs.t > T] < 0):
        raise ValueError("horizon too short: g_r still negative after it")
    return _negative_part_integral(
        coeffs, lambda s: 2 * coeffs.at(s).g.real, lambda s: coeffs.integrals(s)[0].real, T)


# ---------------------------------------------------------------------------
# analytic approximation


@dataclass(frozen=True)
class AnalyticMeasure:
    g_r: float
    g_i: float
    omega_a: float = 1.0

    def __post_init__(self):
        if not self.g_r > 0:
            raise RegimeError("g_r(inf) must be positive")

    @classmethod
    def from_coeffs(cls, coeffs):
        g = coeffs.g_inf
        return cls(g.real, g.imag, coeffs.omega_a)

    @property
    def nu(self):
        return abs(self.g_i) / self.g_r

    @property
    def mu(self):
        return math.hypot(self.g_r, self.g_i) / self.g_r

    @property
    def theta(self):
        return math.atan2(self.g_i, self.g_r)

    @property
    def tau_r(self):
        return 1 / self.g_r

    @property
    def eps(self):
        return 1 / (2 * self.tau_r * (self.omega_a - self.g_i))

    @property
    def n_ana(self):
        return n_ana(self)

    @property
    def unreliable(self):
        return self.nu < NU_DIP


def sigma_perp_ana(analytic, xi0, t):
    """(e^{-t/tau_r}/tau_r) {mu cos[2 wa t + xi(t) + theta] - 1}, xi(t) = xi0 - 2 g_i t."""
    t = np.asarray(t, dtype=float)
    a = analytic
    xi_t = xi0 - 2 * a.g_i * t
    return np.exp(-t / a.tau_r) / a.tau_r * (a.mu * np.cos(2 * a.omega_a * t + xi_t + a.theta) - 1)


def n_ana_of_nu(nu):
    nu = abs(float(nu))
    return (nu - math.atan(nu)) / math.pi


def n_ana(analytic):
    """(nu - arctan nu)/pi."""
    return n_ana_of_nu(analytic.nu)


def n_ana_mu(analytic):
    """Equivalent form sqrt(mu^2 - 1) - arcsec(mu), over pi."""
    mu = analytic.mu
    return (math.sqrt(mu * mu - 1) - math.acos(1 / mu)) / math.pi


def n_ana_eps(analytic, xi0, lowest_order=False):
    """Sum over all windows with the finite-eps prefactor.

    The full expression is e^{eps(pi+theta+xi0)} [eps cosh(eps arcsec mu)
    sqrt(mu^2-1) - sinh(eps arcsec mu)] / (sinh(eps pi)(1+eps^2)); with
    ``lowest_order`` it is replaced by (1 + eps(pi+theta+xi0)) N_ana.
    """
    a = analytic
    mu, eps = a.mu, a.eps
    if mu <= 1:
        return 0.0
    phase = np.pi + a.theta + xi0
    if lowest_order:
        return (1 + eps * phase) * n_ana(a)
    asec = math.acos(1 / mu)
    num = eps * math.cosh(eps * asec) * math.sqrt(mu * mu - 1) - math.sinh(eps * asec)
    return math.exp(eps * phase) * num / (math.sinh(eps * np.pi) * (1 + eps * eps))


def n_ana_finite_T(analytic, T):
    """(1 - e^{-T/tau_r}) N_ana."""
    if not T > 0:
        raise ValueError("T must be positive")
    return -math.expm1(-T / analytic.tau_r) * n_ana(analytic)


def positivity_windows(analytic, xi0, n_max):
    """Windows (t_n-, t_n+) where the analytic sigma is positive, n = 0..n_max.

    Windows that end before t = 0 are dropped and one starting before 0 is
    clipped to 0.
    """
    a = analytic
    if a.mu <= 1:
        return []
    w = a.omega_a - a.g_i
    half = math.acos(1 / a.mu)
    out = []
    for n in range(n_max + 1):
        c = 2 * n * np.pi - a.theta - xi0
        lo = (c - half) / (2 * w)
        hi = (c + half) / (2 * w)
        if hi <= 0:
            continue
        out.append((max(lo, 0.0), hi))
    return out
