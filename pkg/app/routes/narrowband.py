from fastapi import APIRouter, HTTPException

from app.models.schemas import InverseRequest, NarrowbandResult, PoleResidueModel, ReduceRequest
from app.services.model_core import model_from_em, validate_model
from app.services.narrowband import inverse_reduce, narrowband_from_model

router = APIRouter()


@router.post("/reduce", response_model=NarrowbandResult)
def reduce_model(request: ReduceRequest):
    """Classical coupling matrix and affine out-of-band term of a pole-residue model."""
    issues = validate_model(request.model)
    if issues:
        raise HTTPException(status_code=422, detail=[issue.model_dump(mode="json") for issue in issues])
    return narrowband_from_model(request.model, request.band)


@router.post("/inverse", response_model=PoleResidueModel)
def inverse_model(request: InverseRequest):
    """Pole-residue model whose narrowband reduction is the given classical matrix."""
    emcm = inverse_reduce(request.classical, request.eta0)
    return model_from_em(emcm, request.eta0)
