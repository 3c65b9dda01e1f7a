import numpy as np
import pytest

from spinboson_nm.measure import AnalyticMeasure, PairDynamics, nonmarkovianity
from spinboson_nm.spectral import SpectralModel, build_coefficients

FIG2 = dict(alpha=0.01, lam=0.1, delta=-0.9)


@pytest.fixture(scope="session")
def fig2_model():
    return SpectralModel.lorentzian(**FIG2)


@pytest.fixture(scope="session")
def fig2_coeffs(fig2_model):
    return build_coefficients(fig2_model)


@pytest.fixture(scope="session")
def fig2_analytic(fig2_coeffs):
    return AnalyticMeasure.from_coeffs(fig2_coeffs)


@pytest.fixture(scope="session")
def fig2_dynamics(fig2_coeffs, fig2_analytic):
    return PairDynamics.build("bloch", fig2_coeffs, 10 * fig2_analytic.tau_r)


@pytest.fixture(scope="session")
def fig2_measure(fig2_coeffs, fig2_dynamics):
    return nonmarkovianity("bloch", fig2_coeffs, dynamics=fig2_dynamics)


@pytest.fixture(scope="session")
def short_lorentzian():
    # short horizon, for engine tests that do not need 10 tau_r
    return build_coefficients(SpectralModel.lorentzian(**FIG2), horizon=400.0)


@pytest.fixture(scope="session")
def ohmic_half():
    return build_coefficients(SpectralModel.ohmic(0.01, 0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
