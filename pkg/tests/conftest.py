import math

import numpy as np
import pytest

from app.config import get_settings
from app.models.schemas import (
    ETA0,
    ClassicalCouplingMatrix,
    EmCouplingMatrix,
    FrequencyBand,
    PoleResidueModel,
    PoleResidueTerm,
)
from app.services.fixtures import load_fixture


def band_around(f0_hz: float, delta: float) -> FrequencyBand:
    """Band with geometric center f0 and fractional bandwidth delta."""
    half = delta / 2
    root = math.sqrt(1 + half * half)
    return FrequencyBand(f1_hz=f0_hz * (root - half), f2_hz=f0_hz * (root + half))


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    monkeypatch.delenv("EMCM_SWEEP_THREADS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20231018)


@pytest.fixture
def dual_mode_band():
    return FrequencyBand(f1_hz=12.21e9, f2_hz=12.26e9)


@pytest.fixture
def dual_mode(dual_mode_band) -> ClassicalCouplingMatrix:
    return load_fixture("dual_mode_classical").to_classical(dual_mode_band)


@pytest.fixture
def dual_mode_narrowband(dual_mode_band) -> ClassicalCouplingMatrix:
    return load_fixture("dual_mode_narrowband").to_classical(dual_mode_band)


@pytest.fixture
def inline_classical() -> ClassicalCouplingMatrix:
    return load_fixture("inline_dr_classical").to_classical()


@pytest.fixture
def two_pole_band():
    return band_around(1.0e9, 0.05)


@pytest.fixture
def two_pole(two_pole_band) -> ClassicalCouplingMatrix:
    """Two coupled resonators matched at the band center (m = d**2)."""
    m = 0.8
    d = math.sqrt(m)
    return ClassicalCouplingMatrix(D=np.array([[d, 0.0], [0.0, d]]), M=np.array([[0.0, m], [m, 0.0]]), band=two_pole_band)


@pytest.fixture
def random_orthogonal(rng):
    def make(n: int) -> np.ndarray:
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        return q * np.sign(np.diag(r))

    return make


@pytest.fixture
def random_em(rng, random_orthogonal):
    """Dense EM coupling matrix with eigenresonances spread over ``band``."""

    def make(band: FrequencyBand, ports: int, order: int) -> tuple[EmCouplingMatrix, np.ndarray]:
        k_n = np.sort(rng.uniform(band.k1, band.k2, order))
        Q = random_orthogonal(order)
        K = Q @ np.diag(k_n**2) @ Q.T
        C = rng.standard_normal((ports, order))
        return EmCouplingMatrix(C=C, K=0.5 * (K + K.T)), k_n

    return make


@pytest.fixture
def random_inband_model(rng):
    def make(band: FrequencyBand, ports: int, order: int, eta0: float = ETA0) -> PoleResidueModel:
        k_n = rng.uniform(band.k1, band.k2, order)
        terms = tuple(
            PoleResidueTerm(k_n=float(k), c=rng.standard_normal(ports), inband=True) for k in k_n
        )
        return PoleResidueModel(ports=ports, terms=terms, eta0=eta0)

    return make


@pytest.fixture
def centered_band():
    return band_around
