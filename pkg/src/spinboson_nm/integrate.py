"""Time integrators for linear time-dependent systems Y' = A(t) Y.

Every ODE in this package is linear in the state once inhomogeneous terms are
folded into an augmented matrix, so the integrators here take a generator
callback ``gen(times) -> A`` returning a stack of matrices and evaluate it
once per step at all stage times.

``dopri5`` is an adaptive Dormand-Prince 5(4) pair with the standard
4th-order continuous extension.  ``rk4_propagators`` builds the one-step maps
of classical RK4 for many steps at once, which is the fast route when the
same propagator is applied to many initial conditions.
"""

import math

import numpy as np


class IntegrationError(RuntimeError):
    """Step size underflow or step budget exhausted."""


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + x h) = y + h sum_i K_i (P_i . [x, x^2, x^3, x^4])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


def _initial_step(gen, t0, y0, direction_end, rtol, atol, max_step):
    # Hairer-Norsett-Wanner starting-step heuristic
    A0 = gen(np.array([t0]))[0]
    f0 = A0 @ y0
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step, direction_end - t0)
    y1 = y0 + h0 * f0
    f1 = gen(np.array([t0 + h0]))[0] @ y1
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step, direction_end - t0)


def dopri5(gen, t0, y0, t_end, t_eval=None, rtol=1e-9, atol=1e-12, max_step=np.inf,
           first_step=None, max_steps=50_000_000):
    """Integrate Y' = A(t) Y from t0 to t_end (t_end > t0).

    ``gen(times)`` returns an array of shape (len(times), d, d).  ``y0`` has
    shape (d,) or (d, m).  Returns (t_out, Y_out) where t_out is ``t_eval``
    (default: [t0, t_end]) and Y_out stacks the state at those times, obtained
    by dense output between accepted steps.
    """
    y = np.array(y0, dtype=float)
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    t_eval = np.array([t0, t_end] if t_eval is None else t_eval, dtype=float)
    if t_eval.size and (np.any(np.diff(t_eval) < 0) or t_eval[0] < t0
                        or t_eval[-1] > t_end * (1 + 1e-14) + 1e-300):
        raise ValueError("t_eval must be sorted and lie inside [t0, t_end]")
    out = np.empty((t_eval.size,) + y.shape)
    k_out = 0
    while k_out < t_eval.size and t_eval[k_out] <= t0:
        out[k_out] = y
        k_out += 1

    t = float(t0)
    h = first_step if first_step is not None else _initial_step(
        gen, t, y.reshape(y.shape[0], -1), t_end, rtol, atol, max_step)
    K = np.empty((7,) + y.shape)
    A_first = None
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            raise IntegrationError(f"step budget exhausted at t = {t}")
        h = min(h, max_step, t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t = {t}")
        As = gen(t + _C * h)
        if A_first is not None:
            K[0] = A_first
        else:
            K[0] = As[0] @ y
        for i in range(1, 7):
            yi = y + h * np.tensordot(_A[i], K[:i], axes=1)
            K[i] = As[i] @ yi
        y_new = y + h * np.tensordot(_B, K, axes=1)
        # K[6] is A(t+h) y_new (FSAL)
        err = h * np.tensordot(_E, K, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = math.sqrt(float(np.mean((err / scale) ** 2)))
        if err_norm <= 1.0:
            t_new = t + h
            while k_out < t_eval.size and t_eval[k_out] <= t_new * (1 + 1e-15):
                x = (t_eval[k_out] - t) / h
                powers = np.array([x, x * x, x ** 3, x ** 4])
                coef = _P @ powers
                out[k_out] = y + h * np.tensordot(coef, K, axes=1)
                k_out += 1
            t = t_new
            y = y_new
            A_first = K[6].copy()
            steps += 1
            factor = _MAX_FACTOR if err_norm == 0 else min(
                _MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            h = h * factor
        else:
            A_first = K[0].copy()
            h = h * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
    while k_out < t_eval.size:
        out[k_out] = y
        k_out += 1
    return t_eval, out


def rk4_step_maps(gen, t_start, h):
    """One-step RK4 maps S_j with Y(t_j + h) = S_j Y(t_j) for a linear system.

    ``t_start`` is an array of step start times; ``h`` a common step or one
    step per start time.  Returns an array of shape (len(t_start), d, d).
    """
    t_start = np.asarray(t_start, dtype=float)
    h = np.asarray(h, dtype=float)
    A0 = gen(t_start)
    Ah = gen(t_start + 0.5 * h)
    A1 = gen(t_start + h)
    d = A0.shape[-1]
    h = h[..., None, None] if h.ndim else h
    eye = np.broadcast_to(np.eye(d), A0.shape)
    k1 = A0
    k2 = Ah @ (eye + 0.5 * h * k1)
    k3 = Ah @ (eye + 0.5 * h * k2)
    k4 = A1 @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def compose_substeps(S, m):
    """Group consecutive step maps m at a time: returns S_{m-1} ... S_0 per group."""
    n = S.shape[0] // m
    S = S[: n * m].reshape((n, m) + S.shape[1:])
    out = S[:, 0]
    for i in range(1, m):
        out = S[:, i] @ out
    return out


def prefix_products(S):
    """Cumulative maps M_k = S_{k-1} ... S_0 for k = 0..n (M_0 = identity).

    Log-depth scan; each level composes blocks twice as long as the last.
    """
    P = np.array(S, copy=True)
    n = P.shape[0]
    shift = 1
    while shift < n:
        P[shift:] = P[shift:] @ P[:-shift]
        shift *= 2
    eye = np.broadcast_to(np.eye(S.shape[-1]), (1,) + S.shape[1:])
    return np.concatenate([eye, P], axis=0)


def rk4_propagators(gen, t_samples, max_substep):
    """Propagators from 0 to each uniformly spaced sample time by chained RK4.

    ``t_samples`` must be 0, dt, 2 dt, ...; each sample interval is split into
    ceil(dt / max_substep) RK4 substeps.  Returns shape (len(t_samples), d, d).
    """
    t_samples = np.asarray(t_samples, dtype=float)
    if t_samples.size < 2:
        A = gen(np.zeros(1))
        return np.broadcast_to(np.eye(A.shape[-1]), (t_samples.size,) + A.shape[1:]).copy()
    dt = t_samples[1] - t_samples[0]
    m = max(1, int(math.ceil(dt / max_substep - 1e-12)))
    hs = dt / m
    n = t_samples.size - 1
    starts = (np.arange(n * m) * hs)
    S = rk4_step_maps(gen, starts, hs)
    S = compose_substeps(S, m) if m > 1 else S
    return prefix_products(S)
