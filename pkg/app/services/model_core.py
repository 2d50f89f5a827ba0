import logging
import math

import numpy as np

from app.models.schemas import (
    ETA0,
    SPEED_OF_LIGHT,
    EmCouplingMatrix,
    FrequencyBand,
    IssueKind,
    ModelIssue,
    PoleResidueModel,
    PoleResidueTerm,
)
from app.services.errors import InvalidBandError

logger = logging.getLogger(__name__)

__all__ = ["ETA0", "SPEED_OF_LIGHT", "make_band", "validate_model", "model_from_em"]


def make_band(f1: float, f2: float) -> FrequencyBand:
    """Build the analysis band [f1, f2] in Hz."""
    if not (math.isfinite(f1) and f1 > 0):
        raise InvalidBandError("f1_hz", "must be positive and finite")
    if not (math.isfinite(f2) and f2 > 0):
        raise InvalidBandError("f2_hz", "must be positive and finite")
    if not f2 > f1:
        raise InvalidBandError("f2_hz", f"reversed band: f2={f2!r} is not above f1={f1!r}")
    if (f2 - f1) / math.sqrt(f1 * f2) >= 2:
        raise InvalidBandError("f2_hz", "too wide: fractional bandwidth must stay below 2")
    return FrequencyBand(f1_hz=f1, f2_hz=f2)


def validate_model(model: PoleResidueModel) -> list[ModelIssue]:
    issues: list[ModelIssue] = []
    seen: dict[float, int] = {}
    for index, term in enumerate(model.terms):
        c = np.asarray(term.c)
        if c.ndim != 1 or c.shape[0] != model.ports:
            issues.append(
                ModelIssue(
                    kind=IssueKind.LENGTH_MISMATCH,
                    term=index,
                    message=f"coupling vector has {c.size} entries, model has {model.ports} ports",
                )
            )
        if not math.isfinite(term.k_n) or not np.all(np.isfinite(c)):
            issues.append(ModelIssue(kind=IssueKind.NON_FINITE, term=index, message="non-finite pole or coupling"))
            continue
        if term.k_n < 0:
            issues.append(ModelIssue(kind=IssueKind.NEGATIVE_POLE, term=index, message=f"k_n={term.k_n!r} < 0"))
        if term.inband:
            if term.k_n in seen:
                issues.append(
                    ModelIssue(
                        kind=IssueKind.DUPLICATE_POLE,
                        term=index,
                        message=f"in-band pole k_n={term.k_n!r} repeats term {seen[term.k_n]}",
                    )
                )
            else:
                seen[term.k_n] = index
    if issues:
        logger.debug("model has %d issue(s)", len(issues))
    return issues


def model_from_em(emcm: EmCouplingMatrix, eta0: float = ETA0) -> PoleResidueModel:
    """Pole-residue form of an EM coupling matrix; every term is in-band."""
    eigenvalues, vectors = np.linalg.eigh(emcm.K)
    couplings = emcm.C @ vectors
    terms = tuple(
        PoleResidueTerm(k_n=math.sqrt(max(float(value), 0.0)), c=couplings[:, n], inband=True)
        for n, value in enumerate(eigenvalues)
    )
    return PoleResidueModel(ports=emcm.ports, terms=terms, eta0=eta0)
