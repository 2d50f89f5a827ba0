"""Rank-1 pole-residue fitting of sampled multiport impedance data.

The fit works on H(s) = Z / (jk eta0) with s = k**2, which for a lossless
device is the real partial fraction sum R_n / (p_n - s). Poles are
relocated by the linearized least squares of vector fitting; residues are
then fitted entry by entry and projected onto rank 1.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from app.models.schemas import (
    ETA0,
    FitReport,
    FrequencyBand,
    PoleResidueModel,
    PoleResidueTerm,
    SweepSamples,
)
from app.services.errors import (
    InsufficientSamplesError,
    InvalidArgumentError,
    NegativeResidueWarning,
    NonConvergenceWarning,
    Rank1QualityWarning,
    ZeroResidueError,
)

logger = logging.getLogger(__name__)

RANK1_QUALITY_LIMIT = 1e-3
STATIC_SNAP = 1e-9
LOSSY_LIMIT = 1e-6


def rank1_project(R: np.ndarray, warn: bool = True) -> tuple[np.ndarray, float]:
    """Closest c c^T to the symmetric residue R, and the ratio |lambda2| / |lambda1|."""
    R = np.asarray(R, dtype=float)
    R = 0.5 * (R + R.T)
    if not np.any(R):
        raise ZeroResidueError("residue matrix is zero")
    eigenvalues, vectors = np.linalg.eigh(R)
    order = np.argsort(-np.abs(eigenvalues), kind="stable")
    dominant = eigenvalues[order[0]]
    if dominant < 0:
        if warn:
            warnings.warn(
                f"dominant residue eigenvalue {dominant:.3e} is negative, sign flipped",
                NegativeResidueWarning,
                stacklevel=2,
            )
        dominant = -dominant
    c = math.sqrt(dominant) * vectors[:, order[0]]
    nonzero = np.flatnonzero(np.abs(c) > 1e-14 * np.max(np.abs(c)))
    if nonzero.size and c[nonzero[0]] < 0:
        c = -c
    quality = float(abs(eigenvalues[order[1]]) / dominant) if len(eigenvalues) > 1 else 0.0
    quality = min(quality, 1.0)
    if warn and quality > RANK1_QUALITY_LIMIT:
        warnings.warn(f"residue is far from rank 1 (quality {quality:.3e})", Rank1QualityWarning, stacklevel=2)
    return c, quality


@dataclass
class _Problem:
    """Scaled fitting data: x = s / scale, H stacked as (samples, entries)."""

    x: np.ndarray
    H: np.ndarray
    weights: np.ndarray
    scale: float
    ports: int
    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def from_samples(cls, samples: SweepSamples, eta0: float) -> "_Problem":
        k = FrequencyBand.wavenumber(np.asarray(samples.frequencies))
        H = np.asarray(samples.Z) / (1j * k * eta0)[:, None, None]
        magnitude = np.max(np.abs(H))
        if magnitude and np.max(np.abs(H.imag)) > LOSSY_LIMIT * magnitude:
            logger.warning("samples are not lossless; fitting the reactive part only")
        H = H.real
        s = k**2
        scale = float(s.max())
        rows, cols = np.triu_indices(samples.ports)
        norms = np.linalg.norm(H, axis=(1, 2))
        weights = 1.0 / np.maximum(norms, np.finfo(float).tiny)
        return cls(
            x=s / scale, H=H[:, rows, cols], weights=weights, scale=scale, ports=samples.ports, rows=rows, cols=cols
        )

    def basis(self, poles: np.ndarray) -> np.ndarray:
        return 1.0 / (poles[None, :] - self.x[:, None])


def _initial_poles(problem: _Problem, n_poles: int) -> np.ndarray:
    x = problem.x
    norms = 1.0 / problem.weights
    static = n_poles > 1 and norms[0] > norms[1]
    count = n_poles - 1 if static else n_poles
    poles = np.linspace(x[0], x[-1], count + 2)[1:-1]
    # keep starting poles off the sample points
    spacing = np.min(np.diff(x)) if len(x) > 1 else x[0]
    for index, pole in enumerate(poles):
        if np.min(np.abs(x - pole)) < 1e-3 * spacing:
            poles[index] = pole + 0.5 * spacing
    if static:
        poles = np.concatenate([[0.0], poles])
    return poles


def _relocate(problem: _Problem, poles: np.ndarray) -> np.ndarray:
    """Zeros of sigma(x) = 1 + sum d_n / (a_n - x) from the linearized fit of sigma H."""
    phi = problem.basis(poles) * problem.weights[:, None]
    n = len(poles)
    entries = problem.H.shape[1]
    system = np.zeros((entries * len(problem.x), entries * n + n))
    rhs = np.zeros(entries * len(problem.x))
    for e in range(entries):
        block = slice(e * len(problem.x), (e + 1) * len(problem.x))
        system[block, e * n : (e + 1) * n] = phi
        system[block, entries * n :] = -problem.H[:, e, None] * phi
        rhs[block] = problem.H[:, e] * problem.weights
    column_norms = np.linalg.norm(system, axis=0)
    column_norms[column_norms == 0] = 1.0
    solution, *_ = np.linalg.lstsq(system / column_norms, rhs, rcond=None)
    d = (solution / column_norms)[entries * n :]
    relocated = np.linalg.eigvals(np.diag(poles) + np.outer(np.ones(n), d))
    relocated = np.sort(np.abs(relocated.real))
    relocated[relocated < STATIC_SNAP] = 0.0
    # separate poles that collapsed onto each other
    for index in range(1, n):
        floor = relocated[index - 1] + 1e-9
        if relocated[index] < floor:
            relocated[index] = floor
    return relocated


@dataclass
class _Identified:
    poles: np.ndarray
    couplings: np.ndarray
    quality: np.ndarray
    residual: float


def _identify(problem: _Problem, poles: np.ndarray, warn: bool) -> _Identified:
    """Fit residues for fixed poles, project them onto rank 1 and score the model."""
    phi = problem.basis(poles)
    weighted = phi * problem.weights[:, None]
    residues, *_ = np.linalg.lstsq(weighted, problem.H * problem.weights[:, None], rcond=None)
    p = problem.ports
    couplings = np.zeros((len(poles), p))
    quality = np.zeros(len(poles))
    for n in range(len(poles)):
        R = np.zeros((p, p))
        R[problem.rows, problem.cols] = residues[n]
        R[problem.cols, problem.rows] = residues[n]
        try:
            couplings[n], quality[n] = rank1_project(R, warn=warn)
        except ZeroResidueError:
            logger.debug("pole %d has a zero residue", n)
    model_entries = phi @ (couplings[:, problem.rows] * couplings[:, problem.cols])
    data = problem.H
    # Frobenius norms over the full symmetric matrix from the upper triangle
    off = (problem.rows != problem.cols).astype(float) + 1.0
    error = np.sqrt(np.sum(off * (model_entries - data) ** 2, axis=1))
    norm = np.sqrt(np.sum(off * data**2, axis=1))
    residual = float(np.max(error / np.maximum(norm, np.finfo(float).tiny)))
    return _Identified(poles=poles, couplings=couplings, quality=quality, residual=residual)


def _to_model(problem: _Problem, fit: _Identified, eta0: float, band: FrequencyBand | None) -> PoleResidueModel:
    # H = sum (c c^T / scale) / (a - x), so physical couplings carry sqrt(scale)
    terms = []
    for pole, c in zip(fit.poles, fit.couplings):
        k_n = math.sqrt(pole * problem.scale)
        inband = band.contains_wavenumber(k_n) if band is not None else False
        terms.append(PoleResidueTerm(k_n=k_n, c=c * math.sqrt(problem.scale), inband=inband))
    return PoleResidueModel(ports=problem.ports, terms=tuple(terms), eta0=eta0)


def fit_pole_residue(
    samples: SweepSamples,
    n_poles: int,
    eta0: float = ETA0,
    max_iters: int = 50,
    tol: float = 1e-10,
    band: FrequencyBand | None = None,
) -> FitReport:
    """Fit ``n_poles`` rank-1 terms to ``samples``.

    Stops when the residual changes by less than ``tol`` between iterations.
    The returned model is the best iterate and ``residual_history`` holds the
    residual of every iterate; ``converged`` is False when ``max_iters`` ran out first.
    """
    if n_poles < 1:
        raise InsufficientSamplesError(f"n_poles must be at least 1, got {n_poles}")
    if max_iters < 1:
        raise InvalidArgumentError(f"max_iters must be at least 1, got {max_iters}")
    if len(samples.frequencies) < 2 * n_poles + 2:
        raise InsufficientSamplesError(
            f"{len(samples.frequencies)} samples cannot determine {n_poles} poles (need {2 * n_poles + 2})"
        )
    problem = _Problem.from_samples(samples, eta0)
    poles = _initial_poles(problem, n_poles)
    best: _Identified | None = None
    history: list[float] = []
    previous = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        poles = _relocate(problem, poles)
        fit = _identify(problem, poles, warn=False)
        logger.debug("iteration %d: residual %.3e", iterations, fit.residual)
        history.append(fit.residual)
        if best is None or fit.residual < best.residual:
            best = fit
        if abs(previous - fit.residual) < tol:
            converged = True
            break
        previous = fit.residual
    final = _identify(problem, best.poles, warn=True)
    if not converged:
        warnings.warn(
            f"pole-residue fit did not converge in {max_iters} iterations (residual {final.residual:.3e})",
            NonConvergenceWarning,
            stacklevel=2,
        )
    logger.info("fitted %d poles in %d iterations, residual %.3e", n_poles, iterations, final.residual)
    return FitReport(
        model=_to_model(problem, final, eta0, band),
        residual=final.residual,
        quality=final.quality,
        converged=converged,
        iterations=iterations,
        residual_history=tuple(history),
    )
