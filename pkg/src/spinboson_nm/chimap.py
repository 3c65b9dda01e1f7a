"""Operator-sum form of the dynamical map and its CPT certificate.

The map acts as rho(t) = sum_i Lambda_i A_i^dag rho(0) A_i with

    A_j = (w_j I + sigma_z)/sqrt(1 + |w_j|^2),        j = 1, 2
    A_j = (i w_j sigma_x + sigma_y)/sqrt(1 + |w_j|^2), j = 3, 4

    w_j = [(-1)^j sqrt(u^2/4 + |p_k|^2) + Re p_k] / (u/2 + i Im p_k)

where k = 1 for j = 1, 2 and k = 2 for j = 3, 4.  The weights are such that
the map is reproduced only with p_k = exp(-Gamma/2) conj(v_k); see
``P_EXPONENT``.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z, MapState, QubitState

# p_k = exp(-P_EXPONENT * Gamma) conj(v_k).  Reconstruction of the map fixes 1/2.
P_EXPONENT = 0.5
DEGENERATE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class KrausDecomposition:
    t: float
    Lambda: np.ndarray       # (4,)
    w: np.ndarray            # (4,) complex, inf where the denominator vanishes
    p: np.ndarray            # (2,) complex
    A: np.ndarray            # (4, 2, 2)

    @classmethod
    def identity(cls):
        return kraus_from_mapstate(MapState.identity())


@dataclass(frozen=True)
class CPTReport:
    t: float
    min_lambda: float
    residual: float
    passed: bool

    def as_dict(self):
        return {"t": self.t, "Lambda_min": self.min_lambda,
                "completeness_residual": self.residual, "pass": self.passed}


def _weights(ms):
    e = np.exp(-ms.Gamma.real)
    r1 = np.sqrt(4 * abs(ms.v1) ** 2 * e + ms.u ** 2)
    r2 = np.sqrt(4 * abs(ms.v2) ** 2 * e + ms.u ** 2)
    return np.array([(1 + e - r1) / 4, (1 + e + r1) / 4, (1 - e - r2) / 4, (1 - e + r2) / 4])


def _operator(p, u, sign, kind):
    """A_j from homogeneous coordinates of w_j = num/den (no division by den)."""
    root = np.sqrt(0.25 * u * u + abs(p) ** 2)
    num = sign * root + p.real
    den = 0.5 * u + 1j * p.imag
    if abs(num) < DEGENERATE_TOL and abs(den) < DEGENERATE_TOL:
        # 0/0: the eigenvector is taken from the other row of the 2x2 block,
        # w = conj(den)/(num - 2 Re p) in the same notation
        num2 = 0.5 * u - 1j * p.imag
        den2 = sign * root - p.real
        if abs(num2) < DEGENERATE_TOL and abs(den2) < DEGENERATE_TOL:
            # fully degenerate block: any basis works
            num, den = (1.0, 1.0) if sign < 0 else (-1.0, 1.0)
        else:
            num, den = num2, den2
    norm = np.sqrt(abs(num) ** 2 + abs(den) ** 2)
    if kind == "z":
        A = (num * IDENTITY + den * SIGMA_Z) / norm
    else:
        A = (1j * num * SIGMA_X + den * SIGMA_Y) / norm
    w = num / den if abs(den) >= DEGENERATE_TOL else complex(np.inf)
    return A, w


def kraus_from_mapstate(ms, p_exponent=P_EXPONENT):
    """Kraus-type decomposition of the map described by ``ms``.

    ``p_exponent`` sets p_k = exp(-p_exponent Gamma) conj(v_k); only the
    default reproduces the map and it is exposed for checking that claim.
    """
    pref = np.exp(-p_exponent * ms.Gamma)
    p = np.array([pref * np.conj(ms.v1), pref * np.conj(ms.v2)])
    Lam = _weights(ms)
    ops, ws = [], []
    for j in range(1, 5):
        k = 0 if j <= 2 else 1
        A, w = _operator(p[k], ms.u, (-1) ** j, "z" if j <= 2 else "xy")
        ops.append(A)
        ws.append(w)
    return KrausDecomposition(ms.t, Lam, np.array(ws), p, np.array(ops))


def completeness_residual(kd):
    S = sum(l * A @ A.conj().T for l, A in zip(kd.Lambda, kd.A))
    return float(np.abs(S - IDENTITY).max())


def check_cpt(kd, tol=1e-9):
    """min Lambda, completeness residual and pass = (min >= -tol) and (residual <= tol)."""
    lam_min = float(np.min(kd.Lambda))
    res = completeness_residual(kd)
    return CPTReport(float(kd.t), lam_min, res, bool(lam_min >= -tol and res <= tol))


def map_matrix(kd, rho0):
    """sum_i Lambda_i A_i^dag rho0 A_i as a raw 2x2 array."""
    rho = rho0.rho if isinstance(rho0, QubitState) else np.asarray(rho0, dtype=complex)
    return sum(l * A.conj().T @ rho @ A for l, A in zip(kd.Lambda, kd.A))


def apply_map(kd, rho0):
    """sum_i Lambda_i A_i^dag rho0 A_i as a QubitState."""
    out = map_matrix(kd, rho0)
    return QubitState.from_rho(0.5 * (out + out.conj().T), tol=1e-8)
