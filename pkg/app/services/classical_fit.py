"""Zero extraction and topology-constrained fitting of classical coupling matrices.

Responses are the unit-terminated S parameters of the prototype as a
function of the normalized frequency K.
"""

import logging
import warnings
from collections.abc import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from app.models.schemas import (
    ClassicalCouplingMatrix,
    ClassicalFitResult,
    SampledResponse,
    TopologyMask,
    ZeroSet,
)
from app.services.errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    InvalidArgumentError,
    MaskViolationError,
    NonConvergenceWarning,
)
from app.services.narrowband import classical_s, classical_s_derivative

logger = logging.getLogger(__name__)

TRANSMISSION_TOL = 1e-6
REFLECTION_TOL = 1e-3
POLISH_XTOL = 1e-12
MIN_GRID_POINTS = 11


def terminated_poles(ccm: ClassicalCouplingMatrix) -> np.ndarray:
    """Natural frequencies K of the terminated network: eig(-M + j D^T D)."""
    poles = np.linalg.eigvals(-ccm.M + 1j * (ccm.D.T @ ccm.D))
    return poles[np.lexsort((poles.imag, poles.real))]


def _power_slope(ccm: ClassicalCouplingMatrix, row: int, col: int) -> Callable[[float], float]:
    """d|S_rc|^2/dK."""

    def slope(K: float) -> float:
        s = classical_s(ccm, K)[row, col]
        ds = classical_s_derivative(ccm, K)[row, col]
        return 2.0 * float(np.real(np.conj(s) * ds))

    return slope


def _polish_minima(
    ccm: ClassicalCouplingMatrix, grid: np.ndarray, magnitude: np.ndarray, row: int, col: int
) -> list[float]:
    slope = _power_slope(ccm, row, col)
    found = []
    for index in range(1, len(grid) - 1):
        if not (magnitude[index] <= magnitude[index - 1] and magnitude[index] < magnitude[index + 1]):
            continue
        lo, hi = grid[index - 1], grid[index + 1]
        slope_lo, slope_hi = slope(lo), slope(hi)
        if slope_lo < 0 < slope_hi:
            found.append(brentq(slope, lo, hi, xtol=POLISH_XTOL))
        else:
            result = minimize_scalar(
                lambda K: abs(classical_s(ccm, K)[row, col]),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": POLISH_XTOL},
            )
            found.append(float(result.x))
    return found


def find_zeros(
    ccm: ClassicalCouplingMatrix,
    k_range: tuple[float, float] = (-10.0, 10.0),
    points: int = 4001,
    ports: tuple[int, int] = (0, 1),
    transmission_tol: float = TRANSMISSION_TOL,
    reflection_tol: float = REFLECTION_TOL,
) -> ZeroSet:
    """Scan |S21| and |S11| on a grid, polish the local minima and keep the true zeros."""
    if points < MIN_GRID_POINTS:
        raise InvalidArgumentError(f"at least {MIN_GRID_POINTS} grid points are needed, got {points}")
    k_lo, k_hi = k_range
    if not k_hi > k_lo:
        raise InvalidArgumentError(f"empty scan range [{k_lo}, {k_hi}]")
    port_in, port_out = ports
    grid = np.linspace(k_lo, k_hi, points)
    S = classical_s(ccm, grid)

    transmission: list[float] = []
    if ccm.ports > max(port_in, port_out) and port_in != port_out:
        candidates = _polish_minima(ccm, grid, np.abs(S[:, port_out, port_in]), port_out, port_in)
        transmission = [K for K in candidates if abs(classical_s(ccm, K)[port_out, port_in]) < transmission_tol]

    candidates = _polish_minima(ccm, grid, np.abs(S[:, port_in, port_in]), port_in, port_in)
    depths = [abs(classical_s(ccm, K)[port_in, port_in]) for K in candidates]
    reflection = [(K, depth) for K, depth in zip(candidates, depths) if depth < reflection_tol]

    zeros = ZeroSet(
        transmission_zeros=np.array(transmission),
        reflection_zeros=np.array([K for K, _ in reflection]),
        reflection_depths=np.array([depth for _, depth in reflection]),
        prototype_poles=terminated_poles(ccm),
    )
    logger.info(
        "found %d transmission and %d reflection zeros in [%g, %g]",
        len(transmission),
        len(reflection),
        k_lo,
        k_hi,
    )
    return zeros


def sample_response(ccm: ClassicalCouplingMatrix, K: np.ndarray) -> SampledResponse:
    K = np.asarray(K, dtype=float)
    return SampledResponse(K=K, S=classical_s(ccm, K))


def max_return_loss_db(ccm: ClassicalCouplingMatrix, K: np.ndarray, port: int = 0) -> float:
    """Worst |S_pp| over the grid, in dB."""
    S = classical_s(ccm, np.asarray(K, dtype=float))
    return float(20 * np.log10(np.max(np.abs(S[:, port, port]))))


class _Parametrization:
    """Maps the free (mask-allowed, upper-triangle) entries of the full matrix to a vector."""

    def __init__(self, mask: TopologyMask, template: ClassicalCouplingMatrix):
        size = template.ports + template.order
        if mask.allowed.shape != (size, size) or mask.ports != template.ports:
            raise DimensionMismatchError(
                f"mask is {mask.allowed.shape} with {mask.ports} ports, matrix is {size}x{size} with {template.ports}"
            )
        rows, cols = np.triu_indices(size)
        keep = mask.allowed[rows, cols]
        self.rows, self.cols = rows[keep], cols[keep]
        self.mask = mask
        self.template = template

    def vector(self, ccm: ClassicalCouplingMatrix) -> np.ndarray:
        return ccm.full()[self.rows, self.cols]

    def matrix(self, x: np.ndarray) -> ClassicalCouplingMatrix:
        size = self.template.ports + self.template.order
        full = np.zeros((size, size))
        full[self.rows, self.cols] = x
        full[self.cols, self.rows] = x
        return ClassicalCouplingMatrix.from_full(full, self.template.ports, self.template.band)

    def check(self, ccm: ClassicalCouplingMatrix) -> None:
        outside = ccm.full()[~self.mask.allowed]
        if np.any(outside != 0):
            raise MaskViolationError(f"{int(np.count_nonzero(outside))} nonzero entries outside the topology mask")


def _zero_residuals(
    targets: ZeroSet,
    ports: tuple[int, int],
    weights: tuple[float, float, float],
) -> Callable[[ClassicalCouplingMatrix], np.ndarray]:
    port_in, port_out = ports
    w_tz, w_rz, w_pole = weights
    tz = np.asarray(targets.transmission_zeros)
    rz = np.asarray(targets.reflection_zeros)
    depths = np.asarray(targets.depths)
    target_poles = np.asarray(targets.prototype_poles)

    def residuals(ccm: ClassicalCouplingMatrix) -> np.ndarray:
        parts = []
        if tz.size:
            s21 = classical_s(ccm, tz)[:, port_out, port_in]
            parts += [w_tz * s21.real, w_tz * s21.imag]
        if rz.size:
            # |S11| reaches its target depth there and is stationary
            s11 = classical_s(ccm, rz)[:, port_in, port_in]
            ds11 = classical_s_derivative(ccm, rz)[:, port_in, port_in]
            parts += [w_rz * (np.abs(s11) - depths), w_rz * np.real(np.conj(s11) * ds11)]
        if target_poles.size:
            poles = terminated_poles(ccm)
            if poles.size != target_poles.size:
                raise DimensionMismatchError(f"{target_poles.size} target poles for an order-{poles.size} matrix")
            difference = poles - target_poles
            parts += [w_pole * difference.real, w_pole * difference.imag]
        return np.concatenate(parts)

    return residuals


def _sampled_residuals(targets: SampledResponse) -> Callable[[ClassicalCouplingMatrix], np.ndarray]:
    K = np.asarray(targets.K)
    expected = np.asarray(targets.S)
    rows, cols = np.triu_indices(expected.shape[1])

    def residuals(ccm: ClassicalCouplingMatrix) -> np.ndarray:
        if ccm.ports != expected.shape[1]:
            raise DimensionMismatchError(f"targets have {expected.shape[1]} ports, matrix has {ccm.ports}")
        difference = (classical_s(ccm, K) - expected)[:, rows, cols].ravel()
        return np.concatenate([difference.real, difference.imag])

    return residuals


def _jacobian(residuals: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float) -> np.ndarray:
    columns = []
    for index in range(len(x)):
        h = step * max(1.0, abs(x[index]))
        forward, backward = x.copy(), x.copy()
        forward[index] += h
        backward[index] -= h
        columns.append((residuals(forward) - residuals(backward)) / (2 * h))
    return np.column_stack(columns)


def fit_classical(
    targets: ZeroSet | SampledResponse,
    mask: TopologyMask,
    init: ClassicalCouplingMatrix,
    max_iters: int = 200,
    tol: float = 1e-10,
    ports: tuple[int, int] = (0, 1),
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    fd_step: float = 1e-6,
) -> ClassicalFitResult:
    """Levenberg-Marquardt fit of the mask-allowed entries of ``init`` to ``targets``.

    Zero targets contribute S21 at each transmission zero, the gap between
    |S11| and its recorded depth plus the |S11| slope at each reflection zero,
    and the offsets of the terminated poles. ``weights`` scale those three groups.
    The residual is the 2-norm of the weighted residual vector.
    """
    if isinstance(targets, ZeroSet):
        if targets.is_empty:
            raise InsufficientSamplesError("no target zeros or poles given")
        evaluate = _zero_residuals(targets, ports, weights)
    else:
        if len(targets.K) == 0:
            raise InsufficientSamplesError("no target samples given")
        evaluate = _sampled_residuals(targets)

    params = _Parametrization(mask, init)
    params.check(init)

    def residuals(x: np.ndarray) -> np.ndarray:
        return evaluate(params.matrix(x))

    x = params.vector(init)
    r = residuals(x)
    cost = float(r @ r)
    history = [float(np.sqrt(cost))]
    if np.sqrt(cost) <= tol:
        logger.info("initial matrix already meets the targets (residual %.3e)", np.sqrt(cost))
        return ClassicalFitResult(
            matrix=init, residual=float(np.sqrt(cost)), iterations=0, converged=True, objective_history=tuple(history)
        )

    damping = 1e-3
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        J = _jacobian(residuals, x, fd_step)
        gradient = J.T @ r
        normal = J.T @ J
        scaling = np.diag(np.diag(normal)) + 1e-12 * np.eye(len(x))
        accepted = False
        while damping < 1e12:
            step = np.linalg.solve(normal + damping * scaling, -gradient)
            candidate = x + step
            r_candidate = residuals(candidate)
            cost_candidate = float(r_candidate @ r_candidate)
            if cost_candidate < cost:
                x, r, cost = candidate, r_candidate, cost_candidate
                damping /= 3
                accepted = True
                break
            damping *= 10
        if not accepted:
            logger.debug("iteration %d: no descent step, stopping", iterations)
            break
        params.check(params.matrix(x))
        history.append(float(np.sqrt(cost)))
        logger.debug("iteration %d: residual %.3e damping %.1e", iterations, history[-1], damping)
        if history[-1] <= tol:
            converged = True
            break

    residual = float(np.sqrt(cost))
    if not converged:
        warnings.warn(
            f"classical fit stopped after {iterations} iterations with residual {residual:.3e}",
            NonConvergenceWarning,
            stacklevel=2,
        )
    logger.info("classical fit: residual %.3e after %d iterations", residual, iterations)
    return ClassicalFitResult(
        matrix=params.matrix(x),
        residual=residual,
        iterations=iterations,
        converged=converged,
        objective_history=tuple(history),
    )
