import logging

import numpy as np

from app.models.schemas import (
    BasisTransform,
    ClassicalCouplingMatrix,
    ComparisonEntry,
    ComparisonReport,
    EmCouplingMatrix,
    TopologyMask,
)
from app.services.errors import DimensionMismatchError, NotOrthogonalError

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-12


def _as_transform(Q: BasisTransform | np.ndarray) -> np.ndarray:
    if isinstance(Q, BasisTransform):
        return Q.Q
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise NotOrthogonalError(f"transform must be square, got shape {Q.shape}")
    if np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0]))) > ORTHOGONALITY_TOL:
        raise NotOrthogonalError("Q^T Q differs from the identity")
    return Q


def apply_basis(emcm: EmCouplingMatrix, Q: BasisTransform | np.ndarray) -> EmCouplingMatrix:
    """C' = C Q, K' = Q^T K Q."""
    Q = _as_transform(Q)
    if Q.shape[0] != emcm.order:
        raise DimensionMismatchError(f"transform has order {Q.shape[0]}, matrix has {emcm.order}")
    K = Q.T @ emcm.K @ Q
    return EmCouplingMatrix(C=emcm.C @ Q, K=0.5 * (K + K.T))


def to_transversal(emcm: EmCouplingMatrix) -> tuple[EmCouplingMatrix, BasisTransform]:
    """Diagonalize K (ascending) and return the transform back to the input basis."""
    eigenvalues, vectors = np.linalg.eigh(emcm.K)
    # largest-magnitude component of every eigenvector positive
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    transversal = EmCouplingMatrix(C=emcm.C @ vectors, K=np.diag(eigenvalues))
    return transversal, BasisTransform(Q=vectors)


def support_mask(matrix: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of the entries of ``matrix`` whose magnitude exceeds ``tol``."""
    support = np.abs(np.asarray(matrix, dtype=float)) > tol
    return support | support.T


def compare_coupling(
    a: np.ndarray,
    b: np.ndarray,
    top_k: int | None = None,
    mask: TopologyMask | np.ndarray | None = None,
    threshold: float = 0.0,
) -> ComparisonReport:
    """Rank the upper-triangle entries of two coupling matrices by |a - b|.

    Indices are 1-based, ports first. Entries with delta <= ``threshold`` are omitted.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"cannot compare matrices of shapes {a.shape} and {b.shape}")
    allowed = mask.allowed if isinstance(mask, TopologyMask) else mask
    if allowed is not None and np.shape(allowed) != a.shape:
        raise DimensionMismatchError(f"mask shape {np.shape(allowed)} does not match {a.shape}")
    delta = np.abs(a - b)
    rows, cols = np.triu_indices(a.shape[0])
    entries = []
    for row, col in zip(rows, cols):
        if allowed is not None and not allowed[row, col]:
            continue
        if delta[row, col] <= threshold:
            continue
        entries.append(
            ComparisonEntry(
                row=int(row) + 1,
                col=int(col) + 1,
                value_a=float(a[row, col]),
                value_b=float(b[row, col]),
                delta=float(delta[row, col]),
            )
        )
    entries.sort(key=lambda entry: (-entry.delta, entry.row, entry.col))
    if top_k is not None:
        entries = entries[:top_k]
    return ComparisonReport(entries=tuple(entries))


def fix_sign_gauge(ccm: ClassicalCouplingMatrix) -> ClassicalCouplingMatrix:
    """Flip resonator signs so each resonator's strongest coupling to ports or
    earlier resonators is positive. Zeros and poles are unchanged.

    This is the coupling-matrix counterpart of the eigenvector convention in
    ``to_transversal`` (largest component of each column positive): a column
    of the full matrix is read ports first, then earlier resonators, and its
    largest-magnitude entry in that prefix decides the sign. Ties go to the
    first entry.
    """
    signs = np.ones(ccm.order)
    for r in range(ccm.order):
        couplings = np.concatenate([ccm.D[:, r], ccm.M[:r, r] * signs[:r]])
        if not np.any(couplings):
            continue
        strongest = couplings[np.argmax(np.abs(couplings))]
        if strongest < 0:
            signs[r] = -1.0
    flipped = int(np.sum(signs < 0))
    if flipped:
        logger.debug("sign gauge flipped %d resonator(s)", flipped)
    M = ccm.M * np.outer(signs, signs)
    return ClassicalCouplingMatrix(D=ccm.D * signs, M=M, band=ccm.band)
