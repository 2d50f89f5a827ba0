"""Model, matrix and sweep file formats."""

import json
import logging
from pathlib import Path
from typing import TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from app.models.schemas import (
    ETA0,
    ClassicalCouplingMatrix,
    FrequencyBand,
    MatrixDocument,
    ModelFile,
    NetworkParameter,
    PoleResidueModel,
    SParameterSweep,
    SweepSamples,
)
from app.services.errors import DimensionMismatchError, ParseError, SweepExportError
from app.services.model_core import validate_model

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-9
NUMBER_FORMAT = "%.15g"
TOUCHSTONE_PAIRS_PER_LINE = 4

Document = TypeVar("Document", bound=BaseModel)


def format_number(value: float) -> str:
    text = NUMBER_FORMAT % value
    return "0" if text == "-0" else text


def _field_of(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def parse_json_document(text: str, kind: type[Document]) -> Document:
    """Validate a JSON document, reporting the line or field at fault."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    try:
        return kind.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ParseError(first["msg"], field=_field_of(exc)) from exc


def parse_model(text: str) -> ModelFile:
    document = parse_json_document(text, ModelFile)
    for issue in validate_model(document.to_model()):
        field = f"terms.{issue.term}" if issue.term is not None else None
        raise ParseError(issue.message, field=field)
    return document


def serialize_model(model: PoleResidueModel | ModelFile, band: FrequencyBand | None = None) -> str:
    if isinstance(model, PoleResidueModel):
        model = ModelFile(ports=model.ports, eta0=model.eta0, terms=model.terms, band=band)
    return model.model_dump_json(indent=2) + "\n"


def read_model(path: str | Path) -> ModelFile:
    return parse_model(Path(path).read_text())


def write_model(path: str | Path, model: PoleResidueModel | ModelFile, band: FrequencyBand | None = None) -> None:
    Path(path).write_text(serialize_model(model, band))


def _parse_float(token: str, line: int, field: str | None = None) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise ParseError(f"not a number: {token!r}", line=line, field=field) from exc


def _parse_count(tokens: list[str], line: int) -> int:
    keyword = tokens[0]
    if len(tokens) != 2:
        raise ParseError(f"'{keyword}' takes one value", line=line, field=keyword)
    try:
        value = int(tokens[1])
    except ValueError as exc:
        raise ParseError(f"not an integer: {tokens[1]!r}", line=line, field=keyword) from exc
    if value < 0:
        raise ParseError("must not be negative", line=line, field=keyword)
    return value


def parse_matrix(text: str) -> MatrixDocument:
    """Parse a coupling matrix file.

    Header lines ``ports P``, ``order N`` and optionally ``band f1 f2``,
    then P+N rows of P+N numbers, ports first. ``#`` starts a comment.
    """
    header: dict[str, object] = {}
    rows: list[list[float]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        keyword = tokens[0].lower()
        if keyword in ("ports", "order"):
            if rows:
                raise ParseError(f"'{keyword}' after the matrix body", line=number, field=keyword)
            header[keyword] = _parse_count(tokens, number)
        elif keyword == "band":
            if len(tokens) != 3:
                raise ParseError("'band' takes two frequencies", line=number, field="band")
            f1 = _parse_float(tokens[1], number, "band")
            f2 = _parse_float(tokens[2], number, "band")
            try:
                header["band"] = FrequencyBand(f1_hz=f1, f2_hz=f2)
            except ValidationError as exc:
                raise ParseError(exc.errors()[0]["msg"], line=number, field="band") from exc
        else:
            rows.append([_parse_float(token, number) for token in tokens])

    for field in ("ports", "order"):
        if field not in header:
            raise ParseError("missing header line", field=field)
    ports, order = header["ports"], header["order"]
    size = ports + order
    if len(rows) != size or any(len(row) != size for row in rows):
        widths = sorted({len(row) for row in rows})
        raise DimensionMismatchError(
            f"expected a {size}x{size} body for ports={ports} order={order}, got {len(rows)} rows of width {widths}"
        )
    matrix = np.array(rows, dtype=float).reshape(size, size)
    asymmetry = np.abs(matrix - matrix.T)
    if size and asymmetry.max() > SYMMETRY_TOL:
        row, col = np.unravel_index(np.argmax(asymmetry), asymmetry.shape)
        raise ParseError(f"matrix is not symmetric at ({row + 1}, {col + 1})", field="matrix")
    if np.any(matrix[:ports, :ports]):
        raise ParseError("port block must be zero", field="matrix")
    return MatrixDocument(ports=ports, order=order, band=header.get("band"), matrix=matrix)


def serialize_matrix(document: MatrixDocument | ClassicalCouplingMatrix, comment: str | None = None) -> str:
    if isinstance(document, ClassicalCouplingMatrix):
        document = MatrixDocument(
            ports=document.ports, order=document.order, band=document.band, matrix=document.full()
        )
    lines = [f"# {line}" for line in comment.splitlines()] if comment else []
    lines += [f"ports {document.ports}", f"order {document.order}"]
    if document.band is not None:
        lines.append(f"band {format_number(document.band.f1_hz)} {format_number(document.band.f2_hz)}")
    cells = [[format_number(value) for value in row] for row in document.matrix]
    width = max((len(cell) for row in cells for cell in row), default=0)
    lines += [" ".join(cell.rjust(width) for cell in row) for row in cells]
    return "\n".join(lines) + "\n"


def read_matrix(path: str | Path) -> MatrixDocument:
    return parse_matrix(Path(path).read_text())


def write_matrix(path: str | Path, document: MatrixDocument | ClassicalCouplingMatrix, comment: str | None = None) -> None:
    Path(path).write_text(serialize_matrix(document, comment))


def read_document(path: str | Path, kind: type[Document]) -> Document:
    """Any pydantic document stored as JSON (zero sets, transforms, out-of-band terms)."""
    return parse_json_document(Path(path).read_text(), kind)


def write_document(path: str | Path, document: BaseModel) -> None:
    Path(path).write_text(document.model_dump_json(indent=2) + "\n")


def _check_exportable(sweep: SParameterSweep) -> None:
    if len(sweep.frequencies) == 0:
        raise SweepExportError("cannot export an empty sweep")


def _touchstone_order(ports: int) -> list[tuple[int, int]]:
    if ports == 2:
        return [(0, 0), (1, 0), (0, 1), (1, 1)]
    return [(row, col) for row in range(ports) for col in range(ports)]


def format_touchstone(sweep: SParameterSweep) -> str:
    _check_exportable(sweep)
    ports = sweep.ports
    lines = [f"! {ports}-port {sweep.parameter.value}-parameters", f"# Hz {sweep.parameter.value} RI R {format_number(sweep.z_ref)}"]
    for frequency, matrix in zip(sweep.frequencies, sweep.matrices):
        pairs = [f"{format_number(matrix[r, c].real)} {format_number(matrix[r, c].imag)}" for r, c in _touchstone_order(ports)]
        if ports <= 2:
            lines.append(" ".join([format_number(frequency)] + pairs))
            continue
        # one matrix row per record line, wrapped at four pairs
        for row in range(ports):
            row_pairs = pairs[row * ports : (row + 1) * ports]
            for start in range(0, ports, TOUCHSTONE_PAIRS_PER_LINE):
                chunk = " ".join(row_pairs[start : start + TOUCHSTONE_PAIRS_PER_LINE])
                prefix = format_number(frequency) if row == 0 and start == 0 else " "
                lines.append(f"{prefix} {chunk}")
    return "\n".join(lines) + "\n"


def export_touchstone(sweep: SParameterSweep, path: str | Path) -> None:
    text = format_touchstone(sweep)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise SweepExportError(f"cannot write {path}: {exc}") from exc
    logger.info("wrote %d records to %s", len(sweep.frequencies), path)


def sweep_frame(sweep: SParameterSweep) -> pd.DataFrame:
    prefix = sweep.parameter.value
    columns: dict[str, np.ndarray] = {"freq_hz": np.asarray(sweep.frequencies)}
    for row in range(sweep.ports):
        for col in range(sweep.ports):
            values = np.asarray(sweep.matrices)[:, row, col]
            columns[f"{prefix}{row + 1}{col + 1}_re"] = values.real
            columns[f"{prefix}{row + 1}{col + 1}_im"] = values.imag
    return pd.DataFrame(columns)


def export_csv(sweep: SParameterSweep, path: str | Path) -> None:
    _check_exportable(sweep)
    frame = sweep_frame(sweep)
    try:
        frame.to_csv(path, index=False, float_format=NUMBER_FORMAT)
    except OSError as exc:
        raise SweepExportError(f"cannot write {path}: {exc}") from exc
    logger.info("wrote %d rows to %s", len(frame), path)


def read_sweep_csv(path: str | Path, z_ref: float = ETA0) -> SParameterSweep:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read sweep: {exc}") from exc
    if "freq_hz" not in frame.columns:
        raise ParseError("missing column", field="freq_hz")
    value_columns = [column for column in frame.columns if column != "freq_hz"]
    prefix = value_columns[0][0] if value_columns else "S"
    try:
        parameter = NetworkParameter(prefix)
    except ValueError as exc:
        raise ParseError(f"unknown parameter columns starting with {prefix!r}", field=value_columns[0]) from exc
    ports = int(round(np.sqrt(len(value_columns) / 2)))
    if 2 * ports * ports != len(value_columns):
        raise DimensionMismatchError(f"{len(value_columns)} value columns do not form a square matrix")
    matrices = np.zeros((len(frame), ports, ports), dtype=complex)
    for row in range(ports):
        for col in range(ports):
            name = f"{prefix}{row + 1}{col + 1}"
            if f"{name}_re" not in frame.columns or f"{name}_im" not in frame.columns:
                raise ParseError("missing column", field=f"{name}_re")
            matrices[:, row, col] = frame[f"{name}_re"].to_numpy() + 1j * frame[f"{name}_im"].to_numpy()
    try:
        return SParameterSweep(
            frequencies=frame["freq_hz"].to_numpy(dtype=float), matrices=matrices, z_ref=z_ref, parameter=parameter
        )
    except ValidationError as exc:
        raise ParseError(exc.errors()[0]["msg"], field=_field_of(exc)) from exc


def samples_from_sweep(sweep: SParameterSweep) -> SweepSamples:
    if sweep.parameter is not NetworkParameter.Z:
        raise ParseError("fitting needs Z-parameter samples", field="parameter")
    try:
        return SweepSamples(frequencies=sweep.frequencies, Z=sweep.matrices)
    except ValidationError as exc:
        raise ParseError(exc.errors()[0]["msg"], field=_field_of(exc)) from exc
