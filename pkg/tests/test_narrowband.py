import numpy as np
import pytest

from app.models.schemas import (
    ETA0,
    AffineOutOfBand,
    ClassicalCouplingMatrix,
    EmCouplingMatrix,
    FrequencyBand,
    PoleResidueModel,
    PoleResidueTerm,
    PortVector,
    StateBasis,
)
from app.services.errors import (
    DimensionMismatchError,
    NotPositiveDefiniteError,
    OutOfRangeError,
    PoleInsideBandError,
    SingularShiftError,
)
from app.services.impedance import eval_impedance, impedance_from_em, series_impedance, solve_state, z_to_s
from app.services.model_core import model_from_em
from app.services.narrowband import (
    assemble_F,
    bandpass_map,
    center_linearization,
    classical_s,
    classical_s_derivative,
    eval_classical,
    eval_total_s,
    field_from_circuit_state,
    inverse_reduce,
    lowpass_map,
    narrowband_from_model,
    narrowband_state,
    reduce_to_classical,
    spd_power,
    taylor_outofband,
)


@pytest.fixture
def band():
    return FrequencyBand(f1_hz=12.21e9, f2_hz=12.26e9)


def test_lowpass_map_center_and_edges(band):
    assert lowpass_map(band.k0, band) == pytest.approx(0.0, abs=1e-12)
    assert lowpass_map(band.k2, band) == pytest.approx(1.0, abs=1e-12)
    assert lowpass_map(band.k1, band) == pytest.approx(-1.0, abs=1e-12)


def test_lowpass_map_rejects_non_positive(band):
    with pytest.raises(ValueError):
        lowpass_map(0.0, band)


def test_bandpass_map_center_and_edge(band):
    assert bandpass_map(0.0, band) == band.k0
    assert bandpass_map(1.0, band) == pytest.approx(FrequencyBand.wavenumber(12.26e9), rel=1e-14)


def test_maps_round_trip(band, rng):
    """Rounding in k/k0 - k0/k grows like 1/delta at narrow bands."""
    K = rng.uniform(-3, 3, 1000)
    np.testing.assert_allclose(lowpass_map(bandpass_map(K, band), band), K, rtol=0, atol=1e-12)


@pytest.mark.parametrize("delta", [0.5, 1.0, 1.5])
def test_maps_round_trip_wide_band(centered_band, rng, delta):
    band = centered_band(2e9, delta)
    K = rng.uniform(-5, 5, 1000)
    np.testing.assert_allclose(lowpass_map(bandpass_map(K, band), band), K, rtol=0, atol=1e-14)


def test_assemble_F_at_center():
    band = FrequencyBand(f1_hz=1.9e9, f2_hz=2.1e9)
    k_n = np.array([0.98, 1.0, 1.01]) * band.k0
    emcm = EmCouplingMatrix(C=np.ones((1, 3)), K=np.diag(k_n**2))
    F = assemble_F(emcm, band, 0.0)
    np.testing.assert_allclose(np.diag(F), 1j * (band.k0 - k_n**2 / band.k0), atol=1e-12)
    assert abs(F[1, 1]) < 1e-12


def test_assemble_F_derivative_is_jA(random_em, centered_band):
    band = centered_band(2e9, 0.05)
    emcm, _ = random_em(band, ports=2, order=4)
    h = 1e-6
    derivative = (assemble_F(emcm, band, h) - assemble_F(emcm, band, -h)) / (2 * h)
    A = center_linearization(emcm, band).A
    np.testing.assert_allclose(derivative, 1j * A, rtol=1e-6, atol=1e-6 * np.max(np.abs(A)))


def test_center_linearization_transversal(centered_band):
    band = centered_band(2e9, 0.05)
    k_n = np.array([0.99, 1.005]) * band.k0
    lin = center_linearization(EmCouplingMatrix(C=np.ones((2, 2)), K=np.diag(k_n**2)), band)
    np.testing.assert_allclose(np.diag(lin.A), band.delta / 2 * (band.k0 + k_n**2 / band.k0))
    np.testing.assert_allclose(np.diag(lin.B), band.k0 - k_n**2 / band.k0)


def test_center_linearization_all_resonant_at_center(centered_band):
    band = centered_band(2e9, 0.05)
    emcm = EmCouplingMatrix(C=np.ones((1, 3)), K=band.k0**2 * np.eye(3))
    lin = center_linearization(emcm, band)
    np.testing.assert_allclose(lin.B, np.zeros((3, 3)), atol=1e-12)
    np.testing.assert_allclose(lin.A, band.delta * band.k0 * np.eye(3))


def test_center_linearization_negative_resonance(centered_band):
    band = centered_band(2e9, 0.05)
    corrupt = EmCouplingMatrix.model_construct(C=np.ones((1, 2)), K=np.diag([-1.0, band.k0**2]))
    with pytest.raises(NotPositiveDefiniteError):
        center_linearization(corrupt, band)


def test_spd_power_square_root(rng):
    X = rng.standard_normal((5, 5))
    A = X @ X.T + 5 * np.eye(5)
    root = spd_power(A, 0.5)
    np.testing.assert_allclose(root @ root, A, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(spd_power(A, -0.5) @ root, np.eye(5), atol=1e-12)


def test_reduce_transversal(centered_band):
    band = centered_band(2e9, 0.05)
    k0 = band.k0
    k_n = np.array([0.985, 0.995, 1.01]) * k0
    ccm = reduce_to_classical(EmCouplingMatrix(C=np.ones((2, 3)), K=np.diag(k_n**2)), band, ETA0)
    expected = (2 / band.delta) * (k0**2 - k_n**2) / (k0**2 + k_n**2)
    np.testing.assert_allclose(ccm.M, np.diag(expected), atol=1e-12)


def test_reduce_center_resonant_gives_zero_self_coupling(centered_band):
    band = centered_band(2e9, 0.05)
    ccm = reduce_to_classical(EmCouplingMatrix(C=np.ones((1, 2)), K=band.k0**2 * np.eye(2)), band, ETA0)
    np.testing.assert_allclose(ccm.M, np.zeros((2, 2)), atol=1e-12)


def test_center_exactness_on_random_models(rng, random_inband_model, centered_band):
    for _ in range(50):
        band = centered_band(rng.uniform(1e9, 20e9), rng.uniform(0.005, 0.2))
        model = random_inband_model(band, ports=int(rng.integers(1, 4)), order=int(rng.integers(1, 15)))
        result = narrowband_from_model(model, band)
        expected = eval_impedance(model, band.k0)
        Z = eval_classical(result.classical, 0.0)
        assert np.max(np.abs(Z - expected)) <= 1e-10 * np.max(np.abs(expected))
        np.testing.assert_array_equal(result.out_of_band.Z0, 0)


def test_narrowband_error_shrinks_with_bandwidth(inline_classical, centered_band):
    worst = []
    for delta in (0.1, 0.05):
        band = centered_band(2e9, delta)
        ccm = inline_classical.model_copy(update={"band": band})
        emcm = inverse_reduce(ccm, ETA0)
        K = np.linspace(-1, 1, 201)
        exact = np.array([z_to_s(impedance_from_em(emcm, ETA0, bandpass_map(value, band)), 1.0) for value in K])
        worst.append(np.max(np.abs(exact - classical_s(ccm, K))))
    assert worst[0] > 1e-6
    assert worst[0] >= 2 * worst[1]


def test_reduce_after_inverse_is_identity(rng, centered_band):
    for _ in range(50):
        band = centered_band(rng.uniform(1e9, 20e9), rng.uniform(0.005, 0.1))
        ports, order = int(rng.integers(1, 4)), int(rng.integers(1, 15))
        X = rng.normal(0, 0.5, (order, order))
        ccm = ClassicalCouplingMatrix(D=rng.standard_normal((ports, order)), M=(X + X.T) / 2, band=band)
        again = reduce_to_classical(inverse_reduce(ccm, ETA0), band, ETA0)
        assert np.max(np.abs(again.M - ccm.M)) < 1e-10
        assert np.max(np.abs(again.D - ccm.D)) < 1e-10


def test_inverse_after_reduce_is_identity(rng, random_em, centered_band):
    for _ in range(50):
        band = centered_band(rng.uniform(1e9, 20e9), rng.uniform(0.005, 0.1))
        emcm, _ = random_em(band, ports=int(rng.integers(1, 4)), order=int(rng.integers(1, 15)))
        again = inverse_reduce(reduce_to_classical(emcm, band, ETA0), ETA0)
        assert np.max(np.abs(again.K - emcm.K)) < 1e-10 * np.max(np.abs(emcm.K))
        assert np.max(np.abs(again.C - emcm.C)) < 1e-10 * np.max(np.abs(emcm.C))


def test_inverse_of_zero_coupling_puts_resonators_at_center(centered_band):
    band = centered_band(2e9, 0.05)
    ccm = ClassicalCouplingMatrix(D=np.ones((1, 3)), M=np.zeros((3, 3)), band=band)
    np.testing.assert_allclose(inverse_reduce(ccm, ETA0).K, band.k0**2 * np.eye(3))


def test_inverse_out_of_range(centered_band):
    band = centered_band(2e9, 0.05)
    ccm = ClassicalCouplingMatrix(D=np.ones((1, 1)), M=np.array([[-2 / band.delta - 1]]), band=band)
    with pytest.raises(OutOfRangeError):
        inverse_reduce(ccm, ETA0)


def test_inverse_of_published_narrowband_matrix(dual_mode_narrowband):
    emcm = inverse_reduce(dual_mode_narrowband, ETA0)
    resonances = FrequencyBand.frequency(np.sqrt(np.linalg.eigvalsh(emcm.K)))
    assert len(resonances) == 8
    assert np.all((resonances >= 12.16e9) & (resonances <= 12.30e9))


@pytest.fixture
def loaded_model(two_pole):
    """Matched two-pole filter plus a strong static term and a higher-order mode."""
    band = two_pole.band
    inband = model_from_em(inverse_reduce(two_pole, ETA0), ETA0)
    extra = (
        PoleResidueTerm(k_n=0.0, c=[0.3, 0.0]),
        PoleResidueTerm(k_n=2 * band.k0, c=[0.2, 0.2]),
    )
    return PoleResidueModel(ports=2, terms=inband.terms + extra, eta0=ETA0)


def test_taylor_outofband_empty(band):
    oob = taylor_outofband(PoleResidueModel(ports=2), ETA0, band)
    np.testing.assert_array_equal(oob.Z0, 0)
    np.testing.assert_array_equal(oob.Z1, 0)


def test_taylor_outofband_rejects_inband_pole(band):
    model = PoleResidueModel(ports=1, terms=(PoleResidueTerm(k_n=band.k0, c=[1.0]),))
    with pytest.raises(PoleInsideBandError):
        taylor_outofband(model, ETA0, band)


def test_taylor_outofband_slope(loaded_model, two_pole_band):
    outofband = loaded_model.model_copy(update={"terms": loaded_model.terms[2:]})
    oob = taylor_outofband(outofband, ETA0, two_pole_band)

    def Z(K):
        return series_impedance(outofband.terms, 2, ETA0, bandpass_map(K, two_pole_band))

    h = 1e-5
    np.testing.assert_allclose(oob.Z0, Z(0.0), rtol=1e-12)
    np.testing.assert_allclose(oob.Z1, (Z(h) - Z(-h)) / (2 * h), rtol=1e-6)


def test_out_of_band_term_is_needed(loaded_model, two_pole_band):
    band = two_pole_band
    result = narrowband_from_model(loaded_model, band)
    assert result.classical.order == 2
    bare = AffineOutOfBand.zero(2)
    deviation = max(
        abs(
            abs(eval_total_s(result.classical, result.out_of_band, band, f, 1.0)[0, 0])
            - abs(eval_total_s(result.classical, bare, band, f, 1.0)[0, 0])
        )
        for f in np.linspace(band.f1_hz, band.f2_hz, 201)
    )
    assert deviation > 0.05

    exact = z_to_s(eval_impedance(loaded_model, FrequencyBand.wavenumber(band.f0_hz)), 1.0)
    total = eval_total_s(result.classical, result.out_of_band, band, band.f0_hz, 1.0)
    np.testing.assert_allclose(total, exact, rtol=0, atol=1e-10)


def test_total_s_without_loading_is_classical(two_pole, two_pole_band):
    S = eval_total_s(two_pole, AffineOutOfBand.zero(2), two_pole_band, two_pole_band.f0_hz, 1.0)
    np.testing.assert_allclose(S, classical_s(two_pole, 0.0), atol=1e-12)
    assert abs(S[0, 0]) < 1e-12


def test_total_s_port_mismatch(two_pole, two_pole_band):
    with pytest.raises(DimensionMismatchError):
        eval_total_s(two_pole, AffineOutOfBand.zero(3), two_pole_band, two_pole_band.f0_hz, 1.0)


def test_eval_classical_at_center(two_pole_band):
    D = np.array([[1.0, 0.5]])
    M = np.diag([0.4, -0.7])
    ccm = ClassicalCouplingMatrix(D=D, M=M, band=two_pole_band)
    np.testing.assert_allclose(eval_classical(ccm, 0.0), -1j * D @ np.linalg.inv(M) @ D.T, rtol=1e-14)
    with pytest.raises(SingularShiftError):
        eval_classical(ccm, 0.7)


def test_classical_s_matches_unit_terminated_z(dual_mode):
    for K in (-1.3, -0.2, 0.55, 2.0):
        np.testing.assert_allclose(classical_s(dual_mode, K), z_to_s(eval_classical(dual_mode, K), 1.0), atol=1e-12)


def test_classical_s_derivative(dual_mode):
    h = 1e-6
    K = np.array([-0.9, 0.1, 1.7])
    numeric = (classical_s(dual_mode, K + h) - classical_s(dual_mode, K - h)) / (2 * h)
    np.testing.assert_allclose(classical_s_derivative(dual_mode, K), numeric, atol=1e-6)


def test_field_mapping_exact_at_center(random_em, centered_band):
    band = centered_band(2e9, 0.05)
    emcm, _ = random_em(band, ports=2, order=5)
    ccm = reduce_to_classical(emcm, band, ETA0)
    i = np.array([1.0, 0.3])
    circuit = narrowband_state(ccm, 0.0, i)
    assert circuit.basis_kind is StateBasis.NARROWBAND
    mapped = field_from_circuit_state(center_linearization(emcm, band), ETA0, band, 0.0, circuit)
    exact = solve_state(emcm, ETA0, band.k0, PortVector(values=i))
    np.testing.assert_allclose(mapped.amplitudes, exact.amplitudes, rtol=1e-8)


def test_narrowband_state_dimension_mismatch(two_pole):
    with pytest.raises(DimensionMismatchError):
        narrowband_state(two_pole, 0.0, np.ones(3))
