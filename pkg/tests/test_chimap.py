import dataclasses

import numpy as np
import pytest

from conftest import random_unit
from spinboson_nm.chimap import (KrausDecomposition, apply_map, check_cpt, completeness_residual,
                                 kraus_from_mapstate, map_matrix)
from spinboson_nm.dynamics import (EvolutionConfig, MapState, QubitState, evolve_full_closed,
                                   map_trajectory)
from spinboson_nm.measure import trace_distance


def closed_states(coeffs, states, times):
    cfg = EvolutionConfig(engine="closed", times=tuple(float(t) for t in times))
    return evolve_full_closed(coeffs, states, cfg)


def test_identity_at_time_zero(rng):
    kd = KrausDecomposition.identity()
    assert np.allclose(kd.Lambda, [0, 1, 0, 0], atol=1e-15)
    rep = check_cpt(kd)
    assert rep.passed and rep.residual == 0 and rep.min_lambda == 0
    s = QubitState(0.8 * random_unit(rng))
    assert np.allclose(apply_map(kd, s).bloch, s.bloch, atol=1e-15)


def test_relaxation_to_ground_state():
    # u = -1, Gamma_r large: every state goes to the ground state
    ms = MapState(1e6, 60.0 + 3.0j, -1.0, 0.3 + 0.1j, 0.05j)
    kd = kraus_from_mapstate(ms)
    assert check_cpt(kd).passed
    for s in (QubitState.excited(), QubitState.ground(), QubitState.pure(1.0, 2.0)):
        assert np.allclose(apply_map(kd, s).bloch, [0, 0, -1], atol=1e-12)


def test_reconstruction_at_tau_r(fig2_coeffs, rng):
    tau_r = 1 / fig2_coeffs.g_inf.real
    states = [QubitState(random_unit(rng)) for _ in range(4)]
    trajs = closed_states(fig2_coeffs, states, [tau_r])
    ms = trajs[0].map_state(0)
    kd = kraus_from_mapstate(ms)
    assert check_cpt(kd).passed
    for s, tr in zip(states, trajs):
        assert np.abs(map_matrix(kd, s) - tr.rho[0]).max() <= 1e-8


def test_reconstruction_random_sample(short_lorentzian, rng):
    times = np.sort(rng.uniform(0, 400, 10))
    states = [QubitState(r * random_unit(rng)) for r in rng.uniform(0, 1, 10)]
    trajs = closed_states(short_lorentzian, states, times)
    worst = 0.0
    for i in range(times.size):
        kd = kraus_from_mapstate(trajs[0].map_state(i))
        for s, tr in zip(states, trajs):
            worst = max(worst, np.abs(map_matrix(kd, s) - tr.rho[i]).max())
    assert worst <= 1e-8


def test_prefactor_exponent_one_does_not_reconstruct(short_lorentzian, rng):
    # p_k = exp(-Gamma) conj(v_k) as printed fails to reproduce the map once Gamma != 0
    times = np.array([50.0, 300.0])
    s = QubitState(random_unit(rng))
    tr = closed_states(short_lorentzian, [s], times)[0]
    ms = tr.map_state(1)
    assert abs(ms.Gamma) > 1e-3
    bad = kraus_from_mapstate(ms, p_exponent=1.0)
    good = kraus_from_mapstate(ms)
    assert np.abs(map_matrix(good, s) - tr.rho[1]).max() <= 1e-8
    assert np.abs(map_matrix(bad, s) - tr.rho[1]).max() > 1e-6


def test_lambda_sums(short_lorentzian):
    times = np.linspace(0, 400, 17)
    m = map_trajectory(short_lorentzian, times)
    for i, t in enumerate(times):
        ms = MapState(t, complex(m["Gamma"][i]), float(m["u"][i]), complex(m["v1"][i]),
                      complex(m["v2"][i]))
        L = kraus_from_mapstate(ms).Lambda
        e = np.exp(-ms.Gamma.real)
        assert L[0] + L[1] == pytest.approx((1 + e) / 2, abs=1e-12)
        assert L[2] + L[3] == pytest.approx((1 - e) / 2, abs=1e-12)


def test_corrupted_weight_fails():
    kd = KrausDecomposition.identity()
    bad = dataclasses.replace(kd, Lambda=np.array([-0.01, 1.01, 0.0, 0.0]))
    rep = check_cpt(bad)
    assert not rep.passed
    assert rep.min_lambda == pytest.approx(-0.01)
    assert rep.as_dict()["Lambda_min"] == pytest.approx(-0.01)


def test_trace_preserved_for_maximally_mixed(short_lorentzian):
    m = map_trajectory(short_lorentzian, [123.0])
    ms = MapState(123.0, complex(m["Gamma"][0]), float(m["u"][0]), complex(m["v1"][0]),
                  complex(m["v2"][0]))
    out = map_matrix(kraus_from_mapstate(ms), QubitState.mixed())
    assert np.trace(out).real == pytest.approx(1, abs=1e-14)


def test_contractivity(short_lorentzian, rng):
    times = np.linspace(1, 400, 8)
    m = map_trajectory(short_lorentzian, times)
    for i, t in enumerate(times):
        ms = MapState(t, complex(m["Gamma"][i]), float(m["u"][i]), complex(m["v1"][i]),
                      complex(m["v2"][i]))
        kd = kraus_from_mapstate(ms)
        assert check_cpt(kd).passed
        for _ in range(10):
            a = QubitState(rng.uniform(0, 1) * random_unit(rng))
            b = QubitState(rng.uniform(0, 1) * random_unit(rng))
            assert trace_distance(apply_map(kd, a), apply_map(kd, b)) <= \
                trace_distance(a, b) + 1e-9


def test_degenerate_denominator_branch():
    # u = 0 and real p: u/2 + i Im p = 0 for both blocks
    ms = MapState(1.0, 0.2 + 0j, 0.0, 0.9 + 0j, 0.1 + 0j)
    kd = kraus_from_mapstate(ms)
    assert np.all(np.isfinite(kd.A))
    assert completeness_residual(kd) <= 1e-12
    s = QubitState.pure(0.7, 0.4)
    assert np.allclose(map_matrix(kd, s), ms.apply(s).rho, atol=1e-12)
