"""Numerically stable special-function helpers used by the coefficient kernels."""

import math

import numpy as np
from scipy import special

EULER_GAMMA = np.euler_gamma

# series switch points
_CIN_SERIES_MAX = 0.5
_EXP_ASYMPTOTIC_MIN = 40.0
_EXP_ASYMPTOTIC_TERMS = 30


def cin(x):
    """Entire cosine integral Cin(x) = int_0^x (1 - cos u)/u du (even in x)."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x < _CIN_SERIES_MAX
    xs2 = x[small] ** 2
    # sum_k (-1)^(k+1) x^(2k) / (2k (2k)!), k = 1..6
    acc = np.zeros_like(xs2)
    for k in range(6, 0, -1):
        coef = (-1) ** (k + 1) / (2 * k * math.factorial(2 * k))
        acc = acc * xs2 + coef
    out[small] = acc * xs2
    xb = x[~small]
    out[~small] = EULER_GAMMA + np.log(xb) - special.sici(xb)[1]
    return out


def _asymptotic_sum(x, alternating):
    # sum_k (+-1)^k k! / x^(k+1)
    acc = np.zeros_like(x)
    term = 1.0 / x
    for k in range(_EXP_ASYMPTOTIC_TERMS):
        acc = acc + ((-1) ** k if alternating else 1) * term
        term = term * (k + 1) / x
    return acc


def exp_e1(x):
    """e^x E1(x) for x > 0, overflow free."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > _EXP_ASYMPTOTIC_MIN
    out[big] = _asymptotic_sum(x[big], alternating=True)
    xs = x[~big]
    out[~big] = np.exp(xs) * special.exp1(xs)
    return out


def expm_ei(x):
    """e^-x Ei(x) for x > 0, overflow free."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > _EXP_ASYMPTOTIC_MIN
    out[big] = _asymptotic_sum(x[big], alternating=False)
    xs = x[~big]
    out[~big] = np.exp(-xs) * special.expi(xs)
    return out


def sinc(x):
    """sin(x)/x with the unnormalised convention."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def xlog_abs(x):
    """x ln|x|, continuous at 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = x[nz] * np.log(np.abs(x[nz]))
    return out
