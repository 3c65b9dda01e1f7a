import math

import numpy as np
import pytest

from conftest import random_unit
from spinboson_nm.dynamics import EvolutionConfig, QubitState, evolve, evolve_full_bloch
from spinboson_nm.measure import (SAMPLE_STEP, AnalyticMeasure, MeasureConfig, PairDynamics,
                                  _unit, growth_intervals, n_ana, n_ana_eps, n_ana_finite_T,
                                  n_ana_mu, n_ana_of_nu, n_rwa_closed, n_sa_closed,
                                  nonmarkovianity, positivity_windows, sigma_c10, sigma_perp_ana,
                                  sigma_series, trace_distance, trace_distance_eig)
from spinboson_nm.spectral import RegimeError, SpectralModel, build_coefficients


def uniform_cfg(engine, t0, t1, step=SAMPLE_STEP):
    n = int(round((t1 - t0) / step))
    return EvolutionConfig(engine=engine, times=tuple(t0 + step * np.arange(n + 1)))


# ---------------------------------------------------------------------------
# trace distance


def test_trace_distance_examples(rng):
    s = QubitState(0.5 * random_unit(rng))
    assert trace_distance(s, s) == 0
    assert trace_distance(QubitState.excited(), QubitState.ground()) == pytest.approx(1)
    for _ in range(200):
        a = QubitState(rng.uniform(0, 1) * random_unit(rng))
        b = QubitState(rng.uniform(0, 1) * random_unit(rng))
        assert abs(trace_distance(a, b) - trace_distance_eig(a, b)) <= 1e-12


# ---------------------------------------------------------------------------
# sigma and growth intervals


def test_growth_intervals_synthetic():
    t = np.linspace(0, 4 * np.pi, 4001)
    a, b, inc = growth_intervals(t, np.sin(t), np.cos(t))
    assert np.allclose(a, [0, 1.5 * np.pi, 3.5 * np.pi], atol=1e-9)
    assert np.allclose(b, [0.5 * np.pi, 2.5 * np.pi, 4 * np.pi], atol=1e-9)
    assert np.allclose(inc, [1, 2, 1], atol=1e-9)
    a, b, inc = growth_intervals(t, -t, -np.ones_like(t))
    assert a.size == b.size == inc.size == 0


def test_sigma_exact_vs_finite_difference(short_lorentzian):
    # finer than the measure grid: at pi/40 the fourth-order stencil's own truncation
    # error is ~2e-5 relative for a 2 omega_A oscillation
    cfg = uniform_cfg("bloch", 20.0, 120.0, step=np.pi / 400)
    tr1, tr2 = evolve_full_bloch(short_lorentzian, [QubitState.pure(1.2, 0.4),
                                                    QubitState.pure(np.pi - 1.2, np.pi + 0.4)],
                                 cfg)
    exact = sigma_series(tr1, tr2, short_lorentzian)
    fd = sigma_series(tr1, tr2)
    scale = np.abs(exact.sigma).max()
    assert np.abs(exact.sigma - fd.sigma)[2:-2].max() <= 1e-5 * scale
    c10 = sigma_c10(short_lorentzian, tr1.t, tr1.bloch - tr2.bloch)
    assert np.abs(c10 - exact.sigma).max() <= 1e-12 * scale
    assert np.all(exact.increments > 0)
    assert exact.total_increase == pytest.approx(exact.increments.sum())
    iv = exact.intervals
    assert np.all(iv[:, 1] > iv[:, 0]) and np.all(iv[1:, 0] >= iv[:-1, 1])


def test_sigma_grid_checks(short_lorentzian):
    coarse = EvolutionConfig(engine="sa", times=(0.0, 1.0, 2.0))
    a = evolve(short_lorentzian, QubitState.excited(), coarse)
    b = evolve(short_lorentzian, QubitState.ground(), coarse)
    with pytest.raises(ValueError):
        sigma_series(a, b)
    c = evolve(short_lorentzian, QubitState.ground(), EvolutionConfig(engine="sa",
                                                                      times=(0.0, 0.1, 0.3)))
    with pytest.raises(ValueError):
        sigma_series(a, c)


def test_sa_nonnegative_gr_has_no_growth(ohmic_half, rng):
    assert ohmic_half.g.real.min() >= 0
    cfg = uniform_cfg("sa", 0.0, 300.0)
    for _ in range(3):
        n = random_unit(rng)
        a, b = evolve(ohmic_half, [QubitState(n), QubitState(-n)], cfg)
        st = sigma_series(a, b)
        assert st.intervals.shape[0] == 0 and st.total_increase == 0


def test_full_sigma_envelope_decays_on_tau_r(fig2_dynamics, fig2_analytic):
    D, s = fig2_dynamics.pair(_unit(np.pi / 2, np.pi / 2))
    t = fig2_dynamics.t
    tau = fig2_analytic.tau_r
    env = [s[(t > a) & (t < a + 20)].max() for a in (tau, 2 * tau, 3 * tau)]
    assert env[1] / env[0] == pytest.approx(math.exp(-1), rel=0.03)
    assert env[2] / env[1] == pytest.approx(math.exp(-1), rel=0.03)


# ---------------------------------------------------------------------------
# pair dynamics


def test_pair_dynamics_engines_agree(short_lorentzian, rng):
    T = 380.0
    bl = PairDynamics.build("bloch", short_lorentzian, T)
    cl = PairDynamics.build("closed", short_lorentzian, T)
    for _ in range(5):
        n = random_unit(rng)
        Db, sb = bl.pair(n)
        Dc, sc = cl.pair(n)
        assert np.abs(Db - Dc).max() <= 1e-9
        assert np.abs(sb - sc).max() <= 1e-9 * max(1e-3, np.abs(sb).max())


def test_pair_dynamics_matches_evolution(short_lorentzian, rng):
    T = 300.0
    n = random_unit(rng)
    for engine in ("bloch", "rwa", "sa"):
        dyn = PairDynamics.build(engine, short_lorentzian, T)
        D, _ = dyn.pair(n)
        cfg = EvolutionConfig(engine=engine, times=tuple(dyn.t[::97]))
        a, b = evolve(short_lorentzian, [QubitState(n), QubitState(-n)], cfg)
        ref = 0.5 * np.linalg.norm(a.bloch - b.bloch, axis=1)
        assert np.abs(D[::97] - ref).max() <= 1e-8
    with pytest.raises(ValueError):
        PairDynamics.build("euler", short_lorentzian, T)


def test_truncate(fig2_dynamics):
    short = fig2_dynamics.truncate(100.0)
    assert short.t[-1] <= 100.0 and short.t.size == int(100.0 / SAMPLE_STEP) + 1
    n = _unit(np.pi / 2, 0.3)
    assert np.allclose(short.pair(n)[0], fig2_dynamics.pair(n)[0][: short.t.size])


# ---------------------------------------------------------------------------
# optimiser


def test_fig2_full_measure(fig2_measure, fig2_analytic):
    res = fig2_measure
    assert res.N >= 0
    assert res.N == pytest.approx(fig2_analytic.n_ana, rel=0.05)
    assert abs(res.lambda0[2]) < 0.05
    assert np.linalg.norm(res.lambda0) == pytest.approx(1)
    assert res.N == pytest.approx(res.increments.sum())
    assert np.all(res.increments > 0)
    assert res.converged
    assert res.residual_estimate == pytest.approx(math.exp(-10) * fig2_analytic.n_ana)
    d = res.as_dict(max_intervals=3)
    assert len(d["intervals"]) == 3 and d["n_intervals"] == len(res.intervals)


def test_xi0_dependence_small_for_large_nu(fig2_dynamics, fig2_measure):
    vals = [fig2_dynamics.measure(_unit(np.pi / 2, xi / 2))[0]
            for xi in np.linspace(0, 2 * np.pi, 16, endpoint=False)]
    assert (max(vals) - min(vals)) <= 0.05 * fig2_measure.N


def test_fixed_xi0(fig2_coeffs, fig2_dynamics):
    res = nonmarkovianity("bloch", fig2_coeffs, MeasureConfig(xi0=np.pi), dynamics=fig2_dynamics)
    assert res.xi0 == pytest.approx(np.pi)
    assert res.N == pytest.approx(fig2_dynamics.measure(_unit(np.pi / 2, np.pi / 2))[0])


def test_measure_config_and_horizon_checks(short_lorentzian):
    with pytest.raises(ValueError):
        MeasureConfig(n_polar=1)
    with pytest.raises(ValueError):
        MeasureConfig(sample_step=1.0)
    with pytest.raises(ValueError):
        nonmarkovianity("sa", short_lorentzian, MeasureConfig(horizon=50.0))   # < 10 tau_c
    with pytest.raises(ValueError):
        nonmarkovianity("sa", short_lorentzian)       # 10 tau_r beyond the coefficient grid


def test_ohmic_rwa_sa_are_markovian(ohmic_half):
    for engine in ("rwa", "sa"):
        res = nonmarkovianity(engine, ohmic_half, MeasureConfig(horizon=2000.0, n_polar=4,
                                                                n_azimuth=6))
        assert res.N == 0
    assert n_rwa_closed(ohmic_half) == 0
    assert n_sa_closed(ohmic_half) == 0


def test_numeric_rwa_sa_match_closed_forms(fig2_coeffs):
    cfg = MeasureConfig(horizon=2000.0, n_polar=5, n_azimuth=8)
    for engine, closed in (("rwa", n_rwa_closed), ("sa", n_sa_closed)):
        res = nonmarkovianity(engine, fig2_coeffs, cfg)
        assert res.N == pytest.approx(closed(fig2_coeffs), rel=1e-4)
        # the growth is in the populations: the poles are optimal
        assert abs(res.lambda0[2]) == pytest.approx(1, abs=1e-6)


def test_closed_rwa_sa_examples(fig2_coeffs, fig2_measure):
    lor0 = build_coefficients(SpectralModel.lorentzian(0.01, 0.1, 0.0), horizon=2000.0)
    assert lor0.f_minus.min() >= 0 and lor0.g.real.min() >= 0
    assert n_rwa_closed(lor0) == 0 and n_sa_closed(lor0) == 0
    nr, ns = n_rwa_closed(fig2_coeffs), n_sa_closed(fig2_coeffs)
    assert 0 < nr and 0 < ns
    assert fig2_measure.N > 100 * max(nr, ns)


def test_sa_tends_to_rwa_for_short_system_time():
    rel = []
    for wa in (1.0, 4.0, 16.0):
        co = build_coefficients(SpectralModel.lorentzian(0.01, 0.1, -0.9, omega_a=wa),
                                horizon=300.0)
        nr, ns = n_rwa_closed(co), n_sa_closed(co)
        rel.append(abs(ns - nr) / nr)
    assert rel[0] > rel[1] > rel[2] and rel[2] < 1e-3


def test_closed_measure_horizon_checks(short_lorentzian):
    with pytest.raises(ValueError):
        n_rwa_closed(short_lorentzian, horizon=1e4)


# ---------------------------------------------------------------------------
# analytic approximation


def test_n_ana_examples(fig2_analytic):
    assert n_ana_of_nu(0) == 0
    assert n_ana_of_nu(1) == pytest.approx((1 - np.pi / 4) / np.pi)
    assert n_ana_of_nu(1) == pytest.approx(0.06831, abs=1e-5)
    assert fig2_analytic.nu == pytest.approx(5.628, abs=1e-3)
    assert n_ana(fig2_analytic) == pytest.approx(1.347, abs=1e-3)
    assert n_ana_mu(fig2_analytic) == pytest.approx(n_ana(fig2_analytic), rel=1e-12)
    nus = np.linspace(0, 10, 101)
    vals = [n_ana_of_nu(x) for x in nus]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(RegimeError):
        AnalyticMeasure(0.0, 1.0)


def test_eps_corrections(fig2_analytic):
    am = fig2_analytic
    assert am.eps == pytest.approx(1 / (2 * am.tau_r * (1 - am.g_i)))
    full = n_ana_eps(am, np.pi)
    low = n_ana_eps(am, np.pi, lowest_order=True)
    assert full == pytest.approx(am.n_ana, rel=10 * am.eps * am.nu)
    assert full == pytest.approx(low, rel=1e-6)
    assert n_ana_eps(AnalyticMeasure(1e-4, 0.0), 0.0) == 0


def test_finite_horizon_law(fig2_analytic):
    am = fig2_analytic
    assert n_ana_finite_T(am, 1e9) == pytest.approx(am.n_ana)
    assert n_ana_finite_T(am, am.tau_r * math.log(2)) == pytest.approx(am.n_ana / 2)
    vals = [n_ana_finite_T(am, T) for T in np.linspace(1, 1e5, 50)]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(ValueError):
        n_ana_finite_T(am, 0.0)


def test_numeric_truncated_measure_nondecreasing(fig2_dynamics, fig2_measure):
    n = fig2_measure.lambda0
    vals = [fig2_dynamics.truncate(T).measure(n)[0] for T in (1e3, 5e3, 2e4, 6e4, 1.4e5)]
    assert np.all(np.diff(vals) >= 0)


def test_sigma_perp_ana(fig2_analytic):
    t = np.linspace(0, 5000, 20001)
    assert np.all(sigma_perp_ana(AnalyticMeasure(1e-4, 0.0), 1.0, t) <= 0)
    am = fig2_analytic
    s = sigma_perp_ana(am, np.pi, t)
    env = np.exp(-t / am.tau_r) / am.tau_r * (am.mu - 1)
    assert np.all(s <= env * (1 + 1e-12))
    # the bound is attained once per oscillation
    tt = 1000 + np.linspace(0, np.pi, 20001)
    env0 = np.exp(-1000 / am.tau_r) / am.tau_r * (am.mu - 1)
    assert sigma_perp_ana(am, np.pi, tt).max() == pytest.approx(env0, rel=1e-3)


def test_positivity_windows(fig2_analytic):
    assert positivity_windows(AnalyticMeasure(1e-4, 0.0), 0.0, 5) == []
    am = fig2_analytic
    w = np.array(positivity_windows(am, 1.0, 30))
    assert np.all(w[:, 0] >= 0) and np.all(np.diff(w[:, 0]) > 0)
    full = w[w[:, 0] > 0]
    width = math.acos(1 / am.mu) / (1 - am.g_i)
    assert np.allclose(full[:, 1] - full[:, 0], width, rtol=0, atol=1e-12)
    assert np.allclose(np.diff(full[:, 0]), np.pi / (1 - am.g_i), rtol=0, atol=1e-10)
    # sigma_perp_ana is positive inside and negative just outside each window
    for lo, hi in full[:5]:
        assert sigma_perp_ana(am, 1.0, 0.5 * (lo + hi)) > 0
        assert sigma_perp_ana(am, 1.0, hi + 0.05) < 0
