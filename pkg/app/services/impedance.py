"""Eigenmode impedance series, the EM coupling matrix and Z to S conversion."""

import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg

from app.config import get_settings
from app.models.schemas import (
    ETA0,
    EmCouplingMatrix,
    FrequencyBand,
    NetworkParameter,
    PoleResidueModel,
    PoleResidueTerm,
    PortRole,
    PortVector,
    SParameterSweep,
    StateBasis,
    StateSolution,
)
from app.services.errors import (
    DimensionMismatchError,
    EmptyInBandError,
    InvalidArgumentError,
    NotLosslessError,
    PoleHitError,
    SingularConversionError,
    SingularShiftError,
)

logger = logging.getLogger(__name__)

POLE_TOL = 1e-12
SHIFT_TOL = 1e-12
LOSSLESS_TOL = 1e-12


def series_impedance(terms: Iterable[PoleResidueTerm], ports: int, eta0: float, k: float) -> np.ndarray:
    """jk*eta0 * sum c c^T / (k_n^2 - k^2) over ``terms``."""
    if not k > 0:
        raise InvalidArgumentError(f"wavenumber must be positive, got {k!r}")
    Z = np.zeros((ports, ports), dtype=complex)
    for term in terms:
        if term.k_n > 0 and abs(k - term.k_n) < POLE_TOL * term.k_n:
            raise PoleHitError(f"k={k!r} coincides with pole k_n={term.k_n!r}")
        c = np.asarray(term.c, dtype=float)
        Z += np.outer(c, c) * (1j * k * eta0 / ((term.k_n - k) * (term.k_n + k)))
    return Z


def _check_lossless(Z: np.ndarray) -> None:
    scale = float(np.max(np.abs(Z))) if Z.size else 0.0
    if scale and float(np.max(np.abs(Z.real))) > LOSSLESS_TOL * scale:
        raise NotLosslessError("impedance has a real part on the real frequency axis")


def eval_impedance(model: PoleResidueModel, k: float, check_lossless: bool = False) -> np.ndarray:
    Z = series_impedance(model.terms, model.ports, model.eta0, k)
    if check_lossless:
        _check_lossless(Z)
    return Z


def split_inband(model: PoleResidueModel, band: FrequencyBand) -> tuple[PoleResidueModel, PoleResidueModel]:
    """Partition the series into terms with k_n in [k1, k2] and the rest."""
    classified = model.with_band(band)
    inband = tuple(term for term in classified.terms if term.inband)
    outofband = tuple(term for term in classified.terms if not term.inband)
    logger.debug("split %d terms: %d in-band, %d out-of-band", len(model.terms), len(inband), len(outofband))
    return (
        classified.model_copy(update={"terms": inband}),
        classified.model_copy(update={"terms": outofband}),
    )


def em_coupling_from_inband(inband: PoleResidueModel | Sequence[PoleResidueTerm]) -> EmCouplingMatrix:
    """Transversal EM coupling matrix: K = diag(k_n^2), columns of C are the c_n."""
    terms = inband.terms if isinstance(inband, PoleResidueModel) else tuple(inband)
    if not terms:
        raise EmptyInBandError("no in-band terms to build a coupling matrix from")
    C = np.column_stack([np.asarray(term.c, dtype=float) for term in terms])
    K = np.diag([term.k_n**2 for term in terms])
    return EmCouplingMatrix(C=C, K=K)


def _solve_shifted(K: np.ndarray, k: float, rhs: np.ndarray) -> np.ndarray:
    """(K - k^2 Id)^-1 rhs.

    Diagonal K keeps the gaps as (k_n - k)(k_n + k), matching the series form;
    dense K goes through a symmetric solve.
    """
    k2 = k * k
    diagonal = not np.any(K - np.diag(np.diag(K)))
    eigenvalues = np.diag(K) if diagonal else np.linalg.eigvalsh(K)
    scale = max(float(np.max(np.abs(eigenvalues))), k2)
    if np.min(np.abs(eigenvalues - k2)) <= SHIFT_TOL * scale:
        raise SingularShiftError(f"k^2={k2!r} is an eigenvalue of K")
    if diagonal:
        k_n = np.sqrt(np.abs(eigenvalues))
        gap = np.where(eigenvalues >= 0, (k_n - k) * (k_n + k), eigenvalues - k2)
        return rhs / gap.reshape((-1,) + (1,) * (rhs.ndim - 1))
    return scipy.linalg.solve(K - k2 * np.eye(len(K)), rhs, assume_a="sym")


def impedance_from_em(emcm: EmCouplingMatrix, eta0: float, k: float) -> np.ndarray:
    if not k > 0:
        raise InvalidArgumentError(f"wavenumber must be positive, got {k!r}")
    if emcm.order == 0:
        return np.zeros((emcm.ports, emcm.ports), dtype=complex)
    X = _solve_shifted(emcm.K, k, emcm.C.T)
    Z = 1j * k * eta0 * (emcm.C @ X)
    return 0.5 * (Z + Z.T)


def solve_state(emcm: EmCouplingMatrix, eta0: float, k: float, i: PortVector) -> StateSolution:
    """Field amplitudes E = -(K - k^2 Id)^-1 C^T i for port currents ``i``.

    A voltage vector is first converted to currents through the in-band impedance.
    """
    values = np.asarray(i.values, dtype=complex)
    if values.shape != (emcm.ports,):
        raise DimensionMismatchError(f"port vector has {values.size} entries, matrix has {emcm.ports} ports")
    if i.role is PortRole.VOLTAGE:
        Z = impedance_from_em(emcm, eta0, k)
        try:
            values = scipy.linalg.solve(Z, values, assume_a="sym")
        except np.linalg.LinAlgError as exc:
            raise SingularShiftError("impedance is singular, cannot convert voltages to currents") from exc
    E = -_solve_shifted(emcm.K, k, emcm.C.T @ values)
    return StateSolution(amplitudes=E, basis_kind=StateBasis.EXACT)


def z_to_s(Z: np.ndarray, z_ref: float = ETA0) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    ident = np.eye(Z.shape[0])
    normalized = Z / z_ref
    total = normalized + ident
    if np.linalg.cond(total) > 1e14:
        raise SingularConversionError("Z/z_ref + Id is not invertible")
    # S = (Zn - Id)(Zn + Id)^-1, solved from the right
    S = scipy.linalg.solve(total.T, (normalized - ident).T).T
    return 0.5 * (S + S.T)


def run_sweep(
    evaluate: Callable[[float], np.ndarray],
    frequencies: Sequence[float],
    z_ref: float,
    parameter: NetworkParameter = NetworkParameter.S,
    threads: int | None = None,
) -> SParameterSweep:
    """Evaluate one matrix per frequency; results keep the frequency order."""
    frequencies = np.asarray(frequencies, dtype=float)
    threads = threads or get_settings().sweep_threads
    logger.info("sweeping %d points on %d thread(s)", len(frequencies), threads)
    if threads > 1 and len(frequencies) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            matrices = list(pool.map(evaluate, frequencies))
    else:
        matrices = [evaluate(f) for f in frequencies]
    return SParameterSweep(
        frequencies=frequencies,
        matrices=np.array(matrices, dtype=complex) if matrices else np.zeros((0, 0, 0), dtype=complex),
        z_ref=z_ref,
        parameter=parameter,
    )


def sweep_z(model: PoleResidueModel, frequencies: Sequence[float], threads: int | None = None) -> SParameterSweep:
    return run_sweep(
        lambda f: eval_impedance(model, FrequencyBand.wavenumber(f)),
        frequencies,
        model.eta0,
        NetworkParameter.Z,
        threads,
    )


def sweep_s(
    model: PoleResidueModel,
    frequencies: Sequence[float],
    z_ref: float | None = None,
    threads: int | None = None,
) -> SParameterSweep:
    z_ref = model.eta0 if z_ref is None else z_ref
    return run_sweep(
        lambda f: z_to_s(eval_impedance(model, FrequencyBand.wavenumber(f)), z_ref),
        frequencies,
        z_ref,
        NetworkParameter.S,
        threads,
    )
