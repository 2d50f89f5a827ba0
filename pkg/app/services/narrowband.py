"""Narrowband reduction of an EM coupling matrix to a classical coupling matrix.

The physical band [f1, f2] is mapped onto the normalized frequency K in
[-1, 1]. The EM system is linearized about K = 0 and brought into the
canonical circuit form Z = D (jK Id + jM)^-1 D^T. Out-of-band poles are
kept as an affine correction Z0 + Z1 K.
"""

import logging

import numpy as np

from app.models.schemas import (
    AffineOutOfBand,
    CenterLinearization,
    ClassicalCouplingMatrix,
    EmCouplingMatrix,
    FrequencyBand,
    NarrowbandResult,
    PoleResidueModel,
    StateBasis,
    StateSolution,
)
from app.services.errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    NotPositiveDefiniteError,
    OutOfRangeError,
    PoleInsideBandError,
    SingularShiftError,
)
from app.services.impedance import (
    em_coupling_from_inband,
    series_impedance,
    split_inband,
    z_to_s,
)

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-13
SHIFT_TOL = 1e-12


def lowpass_map(k, band: FrequencyBand):
    """K = (k/k0 - k0/k) / delta."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise InvalidArgumentError("wavenumber must be positive")
    K = (k / band.k0 - band.k0 / k) / band.delta
    return float(K) if K.ndim == 0 else K


def bandpass_map(K, band: FrequencyBand):
    """Inverse of ``lowpass_map``: k = k0 exp(asinh(K delta / 2))."""
    k = band.k0 * np.exp(np.arcsinh(np.asarray(K, dtype=float) * band.delta / 2))
    return float(k) if np.ndim(k) == 0 else k


def assemble_F(emcm: EmCouplingMatrix, band: FrequencyBand, K: float) -> np.ndarray:
    """F(jK) = jk Id + K_em / (jk) with k = bandpass_map(K)."""
    k = bandpass_map(K, band)
    return 1j * k * np.eye(emcm.order) + emcm.K / (1j * k)


def spd_power(A: np.ndarray, power: float) -> np.ndarray:
    """A**power for symmetric positive definite A via eigh."""
    eigenvalues, vectors = np.linalg.eigh(A)
    if eigenvalues.size and eigenvalues[0] <= EIGEN_FLOOR * max(float(eigenvalues[-1]), 0.0):
        raise NotPositiveDefiniteError(f"smallest eigenvalue {eigenvalues[0]:.3e} is not safely positive")
    result = (vectors * eigenvalues**power) @ vectors.T
    return 0.5 * (result + result.T)


def center_linearization(emcm: EmCouplingMatrix, band: FrequencyBand) -> CenterLinearization:
    k0, delta = band.k0, band.delta
    ident = np.eye(emcm.order)
    A = (delta / 2) * (k0 * ident + emcm.K / k0)
    B = k0 * ident - emcm.K / k0
    if emcm.order:
        resonances = np.linalg.eigvalsh(emcm.K)
        if resonances[0] < -EIGEN_FLOOR * max(float(np.max(np.abs(resonances))), 1.0):
            raise NotPositiveDefiniteError(f"K has a negative eigenvalue {resonances[0]:.6g}")
        eigenvalues = np.linalg.eigvalsh(A)
        if eigenvalues[0] <= EIGEN_FLOOR * max(float(eigenvalues[-1]), 0.0):
            raise NotPositiveDefiniteError("A = F'(j0)/j is not positive definite")
    return CenterLinearization(A=0.5 * (A + A.T), B=0.5 * (B + B.T))


def reduce_to_classical(emcm: EmCouplingMatrix, band: FrequencyBand, eta0: float) -> ClassicalCouplingMatrix:
    lin = center_linearization(emcm, band)
    root = spd_power(lin.A, -0.5)
    M = root @ lin.B @ root
    D = np.sqrt(eta0) * emcm.C @ root
    logger.debug("reduced order-%d EM matrix over %.6g-%.6g Hz", emcm.order, band.f1_hz, band.f2_hz)
    return ClassicalCouplingMatrix(D=D, M=0.5 * (M + M.T), band=band)


def inverse_reduce(ccm: ClassicalCouplingMatrix, eta0: float) -> EmCouplingMatrix:
    """Exact inverse of ``reduce_to_classical``, applied to the spectrum of M."""
    band = ccm.band
    k0, delta = band.k0, band.delta
    mu, vectors = np.linalg.eigh(ccm.M)
    denominator = 2 + delta * mu
    if np.any(denominator <= 0):
        raise OutOfRangeError("M has an eigenvalue at or below -2/delta")
    kappa = k0**2 * (2 - delta * mu) / denominator
    if np.any(kappa < 0):
        raise OutOfRangeError(f"recovered eigenresonance squared {kappa.min():.6g} is negative")
    K = (vectors * kappa) @ vectors.T
    K = 0.5 * (K + K.T)
    A = (delta / 2) * (k0 * np.eye(ccm.order) + K / k0)
    C = ccm.D @ spd_power(A, 0.5) / np.sqrt(eta0)
    return EmCouplingMatrix(C=C, K=K)


def _series_derivative(model: PoleResidueModel, eta0: float, k: float) -> np.ndarray:
    """dZ/dk of the pole-residue series."""
    dZ = np.zeros((model.ports, model.ports), dtype=complex)
    for term in model.terms:
        kn2, k2 = term.k_n**2, k * k
        c = np.asarray(term.c, dtype=float)
        dZ += np.outer(c, c) * (1j * eta0 * (kn2 + k2) / (kn2 - k2) ** 2)
    return dZ


def taylor_outofband(outofband: PoleResidueModel, eta0: float, band: FrequencyBand) -> AffineOutOfBand:
    """First-order expansion of the out-of-band impedance in K about the center."""
    for index, term in enumerate(outofband.terms):
        if band.contains_wavenumber(term.k_n):
            raise PoleInsideBandError(f"out-of-band term {index} has k_n={term.k_n!r} inside the band")
    if not outofband.terms:
        return AffineOutOfBand.zero(outofband.ports)
    k0 = band.k0
    Z0 = series_impedance(outofband.terms, outofband.ports, eta0, k0)
    Z1 = _series_derivative(outofband, eta0, k0) * (k0 * band.delta / 2)
    return AffineOutOfBand(Z0=0.5 * (Z0 + Z0.T), Z1=0.5 * (Z1 + Z1.T))


def narrowband_from_model(model: PoleResidueModel, band: FrequencyBand) -> NarrowbandResult:
    inband, outofband = split_inband(model, band)
    emcm = em_coupling_from_inband(inband)
    classical = reduce_to_classical(emcm, band, model.eta0)
    oob = taylor_outofband(outofband, model.eta0, band)
    logger.info(
        "narrowband model: %d resonators, %d out-of-band terms", classical.order, len(outofband.terms)
    )
    return NarrowbandResult(classical=classical, out_of_band=oob)


def eval_classical(ccm: ClassicalCouplingMatrix, K: float) -> np.ndarray:
    """Z = D (jK Id + jM)^-1 D^T."""
    mu, vectors = np.linalg.eigh(ccm.M)
    shifted = K + mu
    scale = max(1.0, abs(K), float(np.max(np.abs(mu))) if mu.size else 0.0)
    if mu.size and np.min(np.abs(shifted)) <= SHIFT_TOL * scale:
        raise SingularShiftError(f"-K={-K!r} is an eigenvalue of M")
    projected = ccm.D @ vectors
    Z = (projected / (1j * shifted)) @ projected.T
    return 0.5 * (Z + Z.T)


def _terminated_inverse(ccm: ClassicalCouplingMatrix, K) -> tuple[np.ndarray, np.ndarray]:
    K = np.atleast_1d(np.asarray(K, dtype=float))
    n = ccm.order
    system = 1j * (K[:, None, None] * np.eye(n) + ccm.M) + ccm.D.T @ ccm.D
    W = np.linalg.solve(system, np.broadcast_to(np.eye(n, dtype=complex), system.shape))
    return K, W


def classical_s(ccm: ClassicalCouplingMatrix, K):
    """Unit-terminated S = -Id + 2 D (j(K Id + M) + D^T D)^-1 D^T.

    Accepts a scalar K (returns P x P) or an array (returns len(K) x P x P).
    """
    scalar = np.ndim(K) == 0
    _, W = _terminated_inverse(ccm, K)
    S = -np.eye(ccm.ports) + 2 * ccm.D @ W @ ccm.D.T
    return S[0] if scalar else S


def classical_s_derivative(ccm: ClassicalCouplingMatrix, K):
    """dS/dK = -2j D W W D^T."""
    scalar = np.ndim(K) == 0
    _, W = _terminated_inverse(ccm, K)
    dS = -2j * ccm.D @ W @ W @ ccm.D.T
    return dS[0] if scalar else dS


def eval_total_s(
    ccm: ClassicalCouplingMatrix,
    oob: AffineOutOfBand,
    band: FrequencyBand,
    f: float,
    z_ref: float,
) -> np.ndarray:
    """S at physical frequency f from the classical matrix plus the affine out-of-band term."""
    if not f > 0:
        raise InvalidArgumentError(f"frequency must be positive, got {f!r}")
    if oob.Z0.shape != (ccm.ports, ccm.ports):
        raise DimensionMismatchError("out-of-band term and classical matrix disagree on port count")
    K = lowpass_map(FrequencyBand.wavenumber(f), band)
    return z_to_s(eval_classical(ccm, K) + oob.at(K), z_ref)


def narrowband_state(ccm: ClassicalCouplingMatrix, K: float, i: np.ndarray) -> StateSolution:
    """Circuit resonator state e = -(K Id + M)^-1 D^T i."""
    i = np.asarray(i, dtype=complex)
    if i.shape != (ccm.ports,):
        raise DimensionMismatchError(f"port vector has {i.size} entries, matrix has {ccm.ports} ports")
    shifted = K * np.eye(ccm.order) + ccm.M
    try:
        e = -np.linalg.solve(shifted, ccm.D.T @ i)
    except np.linalg.LinAlgError as exc:
        raise SingularShiftError(f"-K={-K!r} is an eigenvalue of M") from exc
    return StateSolution(amplitudes=e, basis_kind=StateBasis.NARROWBAND)


def field_from_circuit_state(
    lin: CenterLinearization, eta0: float, band: FrequencyBand, K: float, e: StateSolution
) -> StateSolution:
    """Approximate EM field amplitudes from the circuit state: E = -A^(-1/2) e / (k sqrt(eta0))."""
    k = bandpass_map(K, band)
    E = -spd_power(lin.A, -0.5) @ np.asarray(e.amplitudes) / (k * np.sqrt(eta0))
    return StateSolution(amplitudes=E, basis_kind=StateBasis.NARROWBAND)
