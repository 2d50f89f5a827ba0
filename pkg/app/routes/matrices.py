from fastapi import APIRouter, HTTPException, Query

from app.models.schemas import ComparisonReport, MatrixDocument, MatrixSummary, ZeroListing
from app.services import fixtures
from app.services.basis import compare_coupling
from app.services.classical_fit import find_zeros
from app.services.narrowband import bandpass_map

router = APIRouter()


def _get_fixture(name: str) -> MatrixDocument:
    document = fixtures.load_fixture(name)
    if document is None:
        raise HTTPException(status_code=404, detail=f"Matrix '{name}' not found")
    return document


@router.get("", response_model=list[MatrixSummary])
def list_matrices():
    """List the published coupling matrices in the fixture library."""
    summaries = []
    for name in fixtures.list_fixtures():
        document = _get_fixture(name)
        summaries.append(
            MatrixSummary(
                name=name,
                ports=document.ports,
                order=document.order,
                band=document.band,
                description=fixtures.describe_fixture(name),
            )
        )
    return summaries


@router.get("/compare", response_model=ComparisonReport)
def compare_matrices(
    a: str,
    b: str,
    top: int | None = Query(default=None, ge=1),
    threshold: float = Query(default=0.0, ge=0),
):
    """Rank the entries that differ most between two library matrices."""
    first, second = _get_fixture(a), _get_fixture(b)
    return compare_coupling(first.matrix, second.matrix, top_k=top, threshold=threshold)


@router.get("/{name}", response_model=MatrixDocument)
def get_matrix(name: str):
    return _get_fixture(name)


@router.get("/{name}/zeros", response_model=ZeroListing)
def get_zeros(
    name: str,
    k_lo: float = -10.0,
    k_hi: float = 10.0,
    points: int = Query(default=4001, ge=11, le=200_001),
):
    """Transmission and reflection zeros of a library matrix, normalized and in Hz."""
    document = _get_fixture(name)
    if document.band is None:
        raise HTTPException(status_code=422, detail=f"Matrix '{name}' has no band")
    if not k_hi > k_lo:
        raise HTTPException(status_code=422, detail="k_hi must be above k_lo")
    zeros = find_zeros(document.to_classical(), k_range=(k_lo, k_hi), points=points)
    band = document.band

    def to_hz(K: float) -> float:
        return band.frequency(bandpass_map(K, band))

    return ZeroListing(
        zeros=zeros,
        transmission_zeros_hz=[to_hz(K) for K in zeros.transmission_zeros],
        reflection_zeros_hz=[to_hz(K) for K in zeros.reflection_zeros],
    )
