import math
from enum import Enum
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    WithJsonSchema,
    computed_field,
    field_validator,
    model_validator,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
ETA0 = 376.730313668  # free-space impedance, ohm


def _array_validator(kind: str, ndim: int):
    dtype = {"real": float, "complex": complex, "bool": bool}[kind]

    def validate(value: Any) -> np.ndarray:
        if isinstance(value, dict) and "re" in value and "im" in value:
            value = np.asarray(value["re"], dtype=float) + 1j * np.asarray(value["im"], dtype=float)
        if kind == "real" and np.iscomplexobj(value):
            raise ValueError("expected real values, got complex")
        arr = np.array(value, dtype=dtype)
        if arr.size == 0 and arr.ndim < ndim:
            arr = arr.reshape((0,) * ndim)
        if arr.ndim != ndim:
            raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
        if kind != "bool" and not np.all(np.isfinite(arr)):
            raise ValueError("array contains non-finite values")
        arr.setflags(write=False)
        return arr

    return validate


def _serialize_array(arr: np.ndarray) -> Any:
    if np.iscomplexobj(arr):
        return {"re": arr.real.tolist(), "im": arr.imag.tolist()}
    return arr.tolist()


def _nested_schema(item: dict, ndim: int) -> dict:
    schema = item
    for _ in range(ndim):
        schema = {"type": "array", "items": schema}
    return schema


def _array_type(kind: str, ndim: int):
    item = {"bool": {"type": "boolean"}}.get(kind, {"type": "number"})
    schema = _nested_schema(item, ndim)
    if kind == "complex":
        schema = {"type": "object", "properties": {"re": schema, "im": schema}, "required": ["re", "im"]}
    return Annotated[
        np.ndarray,
        PlainValidator(_array_validator(kind, ndim)),
        PlainSerializer(_serialize_array),
        WithJsonSchema(schema),
    ]


RealVector = _array_type("real", 1)
RealMatrix = _array_type("real", 2)
ComplexVector = _array_type("complex", 1)
ComplexMatrix = _array_type("complex", 2)
ComplexMatrixStack = _array_type("complex", 3)
BoolMatrix = _array_type("bool", 2)


def _is_symmetric(matrix: np.ndarray, tol: float) -> bool:
    if matrix.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(matrix))))
    return float(np.max(np.abs(matrix - matrix.T))) <= tol * scale


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class FrequencyBand(FrozenModel):
    """Analysis interval [f1, f2] and the quantities derived from it."""

    f1_hz: float
    f2_hz: float

    @model_validator(mode="after")
    def _check_edges(self) -> "FrequencyBand":
        if not self.f1_hz > 0:
            raise ValueError("f1_hz must be positive")
        if not self.f2_hz > self.f1_hz:
            raise ValueError("f2_hz must be greater than f1_hz")
        if not self.delta < 2:
            raise ValueError("f2_hz too far above f1_hz: fractional bandwidth must stay below 2")
        return self

    @computed_field
    @property
    def f0_hz(self) -> float:
        return math.sqrt(self.f1_hz * self.f2_hz)

    @computed_field
    @property
    def k0(self) -> float:
        return 2 * math.pi * self.f0_hz / SPEED_OF_LIGHT

    @computed_field
    @property
    def delta(self) -> float:
        return (self.f2_hz - self.f1_hz) / self.f0_hz

    @property
    def k1(self) -> float:
        return 2 * math.pi * self.f1_hz / SPEED_OF_LIGHT

    @property
    def k2(self) -> float:
        return 2 * math.pi * self.f2_hz / SPEED_OF_LIGHT

    def contains_wavenumber(self, k: float) -> bool:
        return self.k1 <= k <= self.k2

    @staticmethod
    def wavenumber(f_hz: float) -> float:
        return 2 * math.pi * f_hz / SPEED_OF_LIGHT

    @staticmethod
    def frequency(k: float) -> float:
        return k * SPEED_OF_LIGHT / (2 * math.pi)


class PoleResidueTerm(FrozenModel):
    """One eigenmode of the series: pole k_n**2 and rank-1 residue c c^T."""

    k_n: float
    c: RealVector
    inband: bool = False


class PoleResidueModel(FrozenModel):
    ports: int = Field(ge=1)
    terms: tuple[PoleResidueTerm, ...] = ()
    eta0: float = Field(default=ETA0, gt=0)

    @property
    def order(self) -> int:
        return sum(1 for term in self.terms if term.inband)

    def with_band(self, band: FrequencyBand) -> "PoleResidueModel":
        """Re-classify every term against ``band`` (closed interval)."""
        terms = tuple(
            term.model_copy(update={"inband": band.contains_wavenumber(term.k_n)}) for term in self.terms
        )
        return self.model_copy(update={"terms": terms})


class PortRole(str, Enum):
    VOLTAGE = "v"
    CURRENT = "i"


class PortVector(FrozenModel):
    values: ComplexVector
    role: PortRole = PortRole.CURRENT


class EmCouplingMatrix(FrozenModel):
    """Port block C (P x N) and resonator block K (N x N) of the second-order system."""

    C: RealMatrix
    K: RealMatrix

    @model_validator(mode="after")
    def _check_blocks(self) -> "EmCouplingMatrix":
        n = self.K.shape[0]
        if self.K.shape != (n, n):
            raise ValueError(f"K must be square, got shape {self.K.shape}")
        if self.C.shape[1] != n:
            raise ValueError(f"C has {self.C.shape[1]} columns, K has order {n}")
        if not _is_symmetric(self.K, 1e-12):
            raise ValueError("K is not symmetric")
        if n:
            eigenvalues = np.linalg.eigvalsh(self.K)
            if eigenvalues[0] < -1e-12 * max(1.0, float(np.max(np.abs(eigenvalues)))):
                raise ValueError("K has a negative eigenvalue")
        return self

    @property
    def ports(self) -> int:
        return self.C.shape[0]

    @property
    def order(self) -> int:
        return self.K.shape[0]


class StateBasis(str, Enum):
    EXACT = "exact-em"
    NARROWBAND = "narrowband"


class StateSolution(FrozenModel):
    amplitudes: ComplexVector
    basis_kind: StateBasis


class NetworkParameter(str, Enum):
    S = "S"
    Z = "Z"


class SParameterSweep(FrozenModel):
    frequencies: RealVector
    matrices: ComplexMatrixStack
    z_ref: float = Field(gt=0)
    parameter: NetworkParameter = NetworkParameter.S

    @model_validator(mode="after")
    def _check_shapes(self) -> "SParameterSweep":
        if len(self.frequencies) != len(self.matrices):
            raise ValueError(
                f"{len(self.frequencies)} frequencies but {len(self.matrices)} matrices"
            )
        for index, matrix in enumerate(self.matrices):
            if matrix.shape[0] != matrix.shape[1]:
                raise ValueError(f"matrix {index} is not square")
            if not _is_symmetric(matrix, 1e-10):
                raise ValueError(f"matrix {index} is not reciprocal")
        return self

    @property
    def ports(self) -> int:
        return self.matrices.shape[1] if self.matrices.ndim == 3 and len(self.matrices) else 0


class ClassicalCouplingMatrix(FrozenModel):
    """Low-pass prototype blocks D (P x N) and M (N x N) defined over ``band``."""

    D: RealMatrix
    M: RealMatrix
    band: FrequencyBand

    @model_validator(mode="after")
    def _check_blocks(self) -> "ClassicalCouplingMatrix":
        n = self.M.shape[0]
        if self.M.shape != (n, n):
            raise ValueError(f"M must be square, got shape {self.M.shape}")
        if self.D.shape[1] != n:
            raise ValueError(f"D has {self.D.shape[1]} columns, M has order {n}")
        if not _is_symmetric(self.M, 1e-12):
            raise ValueError("M is not symmetric")
        return self

    @property
    def ports(self) -> int:
        return self.D.shape[0]

    @property
    def order(self) -> int:
        return self.M.shape[0]

    def full(self) -> np.ndarray:
        """(P+N) x (P+N) matrix, ports first, zero port block."""
        p, n = self.ports, self.order
        matrix = np.zeros((p + n, p + n))
        matrix[:p, p:] = self.D
        matrix[p:, :p] = self.D.T
        matrix[p:, p:] = self.M
        return matrix

    @classmethod
    def from_full(cls, matrix: np.ndarray, ports: int, band: FrequencyBand) -> "ClassicalCouplingMatrix":
        matrix = np.asarray(matrix, dtype=float)
        return cls(D=matrix[:ports, ports:], M=matrix[ports:, ports:], band=band)


class CenterLinearization(FrozenModel):
    """A = F'(j0)/j and B = F(j0)/j."""

    A: RealMatrix
    B: RealMatrix

    @model_validator(mode="after")
    def _check_blocks(self) -> "CenterLinearization":
        if not _is_symmetric(self.A, 1e-12) or not _is_symmetric(self.B, 1e-12):
            raise ValueError("A and B must be symmetric")
        if self.A.size and np.linalg.eigvalsh(self.A)[0] <= 0:
            raise ValueError("A must be positive definite")
        return self


class AffineOutOfBand(FrozenModel):
    """Out-of-band impedance linearized in K: Z0 + Z1 * K."""

    Z0: ComplexMatrix
    Z1: ComplexMatrix

    @model_validator(mode="after")
    def _check_blocks(self) -> "AffineOutOfBand":
        if self.Z0.shape != self.Z1.shape:
            raise ValueError("Z0 and Z1 must have the same shape")
        if not _is_symmetric(self.Z0, 1e-10) or not _is_symmetric(self.Z1, 1e-10):
            raise ValueError("Z0 and Z1 must be symmetric")
        return self

    @classmethod
    def zero(cls, ports: int) -> "AffineOutOfBand":
        blank = np.zeros((ports, ports), dtype=complex)
        return cls(Z0=blank, Z1=blank)

    def at(self, K: float) -> np.ndarray:
        return self.Z0 + self.Z1 * K


class NarrowbandResult(FrozenModel):
    classical: ClassicalCouplingMatrix
    out_of_band: AffineOutOfBand


class BasisTransform(FrozenModel):
    Q: RealMatrix

    @field_validator("Q")
    @classmethod
    def _check_orthogonal(cls, value: np.ndarray) -> np.ndarray:
        n = value.shape[0]
        if value.shape != (n, n):
            raise ValueError(f"Q must be square, got shape {value.shape}")
        if n and np.max(np.abs(value.T @ value - np.eye(n))) > 1e-12:
            raise ValueError("Q is not orthogonal")
        return value


class ComparisonEntry(FrozenModel):
    row: int  # 1-based, ports first
    col: int
    value_a: float
    value_b: float
    delta: float


class ComparisonReport(FrozenModel):
    entries: tuple[ComparisonEntry, ...] = ()

    @property
    def max_delta(self) -> float:
        return self.entries[0].delta if self.entries else 0.0

    def positions(self) -> list[tuple[int, int]]:
        return [(entry.row, entry.col) for entry in self.entries]


class SweepSamples(FrozenModel):
    """Sampled impedance matrices of a lossless multiport."""

    frequencies: RealVector
    Z: ComplexMatrixStack

    @model_validator(mode="after")
    def _check_samples(self) -> "SweepSamples":
        if len(self.frequencies) != len(self.Z):
            raise ValueError(f"{len(self.frequencies)} frequencies but {len(self.Z)} matrices")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        for index, matrix in enumerate(self.Z):
            if not _is_symmetric(matrix, 1e-8):
                raise ValueError(f"sample {index} is not symmetric")
        return self

    @property
    def ports(self) -> int:
        return self.Z.shape[1]


class FitReport(FrozenModel):
    """Outcome of a pole-residue fit.

    ``residual`` is the largest per-sample relative Frobenius error of the
    model against the samples. ``residual_history`` has one entry per iterate.
    """

    model: PoleResidueModel
    residual: float = Field(ge=0)
    quality: RealVector
    converged: bool
    iterations: int
    residual_history: tuple[float, ...] = ()

    @property
    def best_residuals(self) -> np.ndarray:
        """Best residual reached after each iterate."""
        return np.minimum.accumulate(np.asarray(self.residual_history, dtype=float))

    @field_validator("quality")
    @classmethod
    def _check_quality(cls, value: np.ndarray) -> np.ndarray:
        if np.any((value < 0) | (value > 1)):
            raise ValueError("rank-1 quality ratios must lie in [0, 1]")
        return value


class TopologyMask(FrozenModel):
    """Entries of the (P+N) x (P+N) coupling matrix allowed to be nonzero."""

    allowed: BoolMatrix
    ports: int = Field(ge=1)

    @field_validator("allowed")
    @classmethod
    def _check_symmetric(cls, value: np.ndarray) -> np.ndarray:
        if value.shape[0] != value.shape[1] or not np.array_equal(value, value.T):
            raise ValueError("mask must be square and symmetric")
        return value

    @model_validator(mode="after")
    def _check_blocks(self) -> "TopologyMask":
        p = self.ports
        if np.any(self.allowed[:p, :p]):
            raise ValueError("port block must stay zero")
        if not np.all(np.diag(self.allowed)[p:]):
            raise ValueError("resonator self-couplings must be allowed")
        return self

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, ports: int, tol: float = 0.0) -> "TopologyMask":
        allowed = np.abs(np.asarray(matrix, dtype=float)) > tol
        allowed = allowed | allowed.T
        allowed[:ports, :ports] = False
        index = np.arange(ports, allowed.shape[0])
        allowed[index, index] = True
        return cls(allowed=allowed, ports=ports)


def _sorted_real(value: np.ndarray) -> np.ndarray:
    ordered = np.sort(value)
    ordered.setflags(write=False)
    return ordered


class ZeroSet(FrozenModel):
    """Zeros and poles of a prototype response, in normalized frequency K.

    ``reflection_depths`` holds |S11| at each reflection zero (empty means
    every reflection zero is exact).
    """

    transmission_zeros: RealVector = Field(default_factory=lambda: np.zeros(0))
    reflection_zeros: RealVector = Field(default_factory=lambda: np.zeros(0))
    reflection_depths: RealVector = Field(default_factory=lambda: np.zeros(0))
    prototype_poles: ComplexVector = Field(default_factory=lambda: np.zeros(0, dtype=complex))

    @model_validator(mode="before")
    @classmethod
    def _pair_depths(cls, data: Any) -> Any:
        if not isinstance(data, dict) or not len(data.get("reflection_depths", ())):
            return data
        zeros = np.asarray(data.get("reflection_zeros", ()), dtype=float)
        depths = np.asarray(data["reflection_depths"], dtype=float)
        if zeros.shape != depths.shape:
            raise ValueError(f"{depths.size} reflection depths for {zeros.size} reflection zeros")
        order = np.argsort(zeros, kind="stable")
        return {**data, "reflection_zeros": zeros[order], "reflection_depths": depths[order]}

    @field_validator("transmission_zeros", "reflection_zeros", "prototype_poles")
    @classmethod
    def _ascending(cls, value: np.ndarray) -> np.ndarray:
        return _sorted_real(value)

    @model_validator(mode="after")
    def _check_depths(self) -> "ZeroSet":
        if len(self.reflection_depths) and len(self.reflection_depths) != len(self.reflection_zeros):
            raise ValueError(
                f"{len(self.reflection_depths)} reflection depths for {len(self.reflection_zeros)} reflection zeros"
            )
        if np.any(self.reflection_depths < 0):
            raise ValueError("reflection depths must be non-negative")
        return self

    @property
    def depths(self) -> np.ndarray:
        """|S11| targets aligned with ``reflection_zeros``."""
        if len(self.reflection_depths):
            return self.reflection_depths
        return np.zeros(len(self.reflection_zeros))

    @property
    def is_empty(self) -> bool:
        return not (len(self.transmission_zeros) or len(self.reflection_zeros) or len(self.prototype_poles))


class SampledResponse(FrozenModel):
    """Unit-terminated S matrices of a prototype sampled on a K grid."""

    K: RealVector
    S: ComplexMatrixStack

    @model_validator(mode="after")
    def _check_lengths(self) -> "SampledResponse":
        if len(self.K) != len(self.S):
            raise ValueError(f"{len(self.K)} grid points but {len(self.S)} matrices")
        return self


class ClassicalFitResult(FrozenModel):
    matrix: ClassicalCouplingMatrix
    residual: float
    iterations: int
    converged: bool
    objective_history: tuple[float, ...] = ()


class IssueKind(str, Enum):
    DUPLICATE_POLE = "DuplicatePole"
    LENGTH_MISMATCH = "LengthMismatch"
    NON_FINITE = "NonFinite"
    NEGATIVE_POLE = "NegativePole"


class ModelIssue(FrozenModel):
    kind: IssueKind
    term: int | None = None
    message: str


class ModelFile(FrozenModel):
    """On-disk form of a pole-residue model."""

    format_version: Literal[1] = 1
    ports: int = Field(ge=1)
    eta0: float = Field(default=ETA0, gt=0)
    terms: tuple[PoleResidueTerm, ...] = ()
    band: FrequencyBand | None = None

    def to_model(self) -> PoleResidueModel:
        return PoleResidueModel(ports=self.ports, terms=self.terms, eta0=self.eta0)


class MatrixDocument(FrozenModel):
    """Coupling matrix file contents: ports-first (P+N) x (P+N) matrix."""

    ports: int = Field(ge=0)
    order: int = Field(ge=0)
    band: FrequencyBand | None = None
    matrix: RealMatrix

    def to_classical(self, band: FrequencyBand | None = None) -> ClassicalCouplingMatrix:
        band = band or self.band
        if band is None:
            raise ValueError("a band is required to build a classical coupling matrix")
        return ClassicalCouplingMatrix.from_full(self.matrix, self.ports, band)


class MatrixSummary(BaseModel):
    name: str
    ports: int
    order: int
    band: FrequencyBand | None
    description: str


class ReduceRequest(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: PoleResidueModel
    band: FrequencyBand


class InverseRequest(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    classical: ClassicalCouplingMatrix
    eta0: float = Field(default=ETA0, gt=0)


class SweepRequest(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: PoleResidueModel
    f_start_hz: float = Field(gt=0)
    f_stop_hz: float = Field(gt=0)
    points: int = Field(default=101, ge=1, le=100_001)
    z_ref: float = Field(default=ETA0, gt=0)


class ZeroListing(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    zeros: ZeroSet
    transmission_zeros_hz: list[float]
    reflection_zeros_hz: list[float]
