import numpy as np
from fastapi import APIRouter, HTTPException

from app.models.schemas import SParameterSweep, SweepRequest
from app.services.impedance import sweep_s
from app.services.model_core import validate_model

router = APIRouter()


@router.post("/sweep", response_model=SParameterSweep)
def sweep(request: SweepRequest):
    """S parameters of a pole-residue model on a uniform frequency grid."""
    issues = validate_model(request.model)
    if issues:
        raise HTTPException(status_code=422, detail=[issue.model_dump(mode="json") for issue in issues])
    if request.f_stop_hz < request.f_start_hz:
        raise HTTPException(status_code=422, detail="f_stop_hz must not be below f_start_hz")
    frequencies = np.linspace(request.f_start_hz, request.f_stop_hz, request.points)
    return sweep_s(request.model, frequencies, z_ref=request.z_ref)
