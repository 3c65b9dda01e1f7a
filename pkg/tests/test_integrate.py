import numpy as np
import pytest
from scipy.linalg import expm

from spinboson_nm.integrate import (IntegrationError, compose_substeps, dopri5, prefix_products,
                                    rk4_propagators, rk4_step_maps)

K = np.array([[-0.1, 1.0], [-1.0, -0.05]])


def const_gen(ts):
    return np.broadcast_to(K, (np.size(ts), 2, 2))


def rotating_gen(ts):
    # Y' = A(t) Y with A(t) = w(t) J, w(t) = 1 + cos t; solution is a rotation by t + sin t
    ts = np.atleast_1d(ts)
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    return (1 + np.cos(ts))[:, None, None] * J


def test_dopri_constant_generator_matches_expm():
    te = np.linspace(0, 20, 41)
    _, Y = dopri5(const_gen, 0.0, np.eye(2), 20.0, te, rtol=1e-11, atol=1e-13)
    ref = np.array([expm(K * t) for t in te])
    assert np.abs(Y - ref).max() < 1e-9


def test_dopri_time_dependent_and_dense_output():
    te = np.sort(np.random.default_rng(1).uniform(0, 30, 57))
    _, Y = dopri5(rotating_gen, 0.0, np.array([1.0, 0.0]), 30.0, te, rtol=1e-10, atol=1e-13)
    phi = te + np.sin(te)
    assert np.abs(Y - np.stack([np.cos(phi), np.sin(phi)], axis=1)).max() < 1e-8


def test_dopri_rejects_bad_ranges():
    with pytest.raises(ValueError):
        dopri5(const_gen, 1.0, np.eye(2), 0.5)
    with pytest.raises(ValueError):
        dopri5(const_gen, 0.0, np.eye(2), 1.0, t_eval=[0.5, 0.2])


def test_dopri_step_budget():
    with pytest.raises(IntegrationError):
        dopri5(const_gen, 0.0, np.eye(2), 100.0, max_step=1e-3, max_steps=10)


def test_rk4_step_is_fourth_order():
    errs = []
    for h in (0.2, 0.1):
        S = rk4_step_maps(rotating_gen, np.array([0.3]), h)[0]
        phi = (0.3 + h + np.sin(0.3 + h)) - (0.3 + np.sin(0.3))
        ref = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
        errs.append(np.abs(S - ref).max())
    assert errs[0] / errs[1] > 20        # local error O(h^5)


def test_rk4_step_maps_array_steps():
    t0 = np.array([0.0, 1.0, 2.5])
    h = np.array([0.1, 0.05, 0.2])
    S = rk4_step_maps(rotating_gen, t0, h)
    for i in range(3):
        assert np.allclose(S[i], rk4_step_maps(rotating_gen, t0[i:i + 1], h[i])[0], atol=1e-15)


def test_prefix_products_match_sequential():
    rng = np.random.default_rng(3)
    S = np.eye(3) + 0.1 * rng.normal(size=(13, 3, 3))
    P = prefix_products(S)
    acc = np.eye(3)
    assert np.allclose(P[0], acc)
    for k in range(13):
        acc = S[k] @ acc
        assert np.allclose(P[k + 1], acc, atol=1e-13)
    C = compose_substeps(S, 4)
    assert np.allclose(C[1], S[7] @ S[6] @ S[5] @ S[4], atol=1e-14)


def test_rk4_propagators_against_expm():
    ts = np.arange(0, 51) * 0.4
    P = rk4_propagators(const_gen, ts, 0.05)
    ref = np.array([expm(K * t) for t in ts])
    assert np.abs(P - ref).max() < 1e-6
