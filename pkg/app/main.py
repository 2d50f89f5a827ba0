from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, RedirectResponse

from app.routes import impedance, matrices, narrowband
from app.services.errors import CouplingMatrixError

app = FastAPI(
    title="EM Coupling Matrix API",
    description="Pole-residue impedance models of coupled-resonator microwave circuits, "
                "their narrowband reduction to classical coupling matrices, and zero/diff diagnostics "
                "on a library of published matrices.",
    version="1.0.0",
    license_info={
        "name": "MIT",
    },
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(matrices.router, prefix="/matrices", tags=["Coupling Matrices"])
app.include_router(narrowband.router, prefix="/narrowband", tags=["Narrowband Reduction"])
app.include_router(impedance.router, prefix="/impedance", tags=["Impedance"])


@app.exception_handler(CouplingMatrixError)
async def coupling_matrix_error_handler(request: Request, exc: CouplingMatrixError):
    return JSONResponse(status_code=422, content={"detail": str(exc), "error": type(exc).__name__})


@app.get("/", include_in_schema=False)
async def root():
    return RedirectResponse(url="/docs")


@app.get("/health", tags=["Health"])
async def health_check():
    return {
        "status": "healthy",
        "service": "em-coupling-matrix-api",
    }
