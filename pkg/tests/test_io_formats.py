import json

import numpy as np
import pandas as pd
import pytest

from app.models.schemas import (
    ETA0,
    FrequencyBand,
    MatrixDocument,
    NetworkParameter,
    PoleResidueModel,
    PoleResidueTerm,
    SParameterSweep,
    ZeroSet,
)
from app.services import fixtures
from app.services.classical_fit import find_zeros
from app.services.errors import DimensionMismatchError, ParseError, SweepExportError
from app.services.io_formats import (
    export_csv,
    export_touchstone,
    format_number,
    format_touchstone,
    parse_matrix,
    parse_model,
    read_document,
    read_sweep_csv,
    samples_from_sweep,
    serialize_matrix,
    serialize_model,
    write_document,
)

MATRIX_TEXT = """\
# two resonators
ports 2
order 2
band 1e9 1.1e9
0 0 1.2 0
0 0 0 1.2
1.2 0 0.1 0.9
0 1.2 0.9 -0.1
"""


@pytest.fixture
def model(rng):
    terms = tuple(PoleResidueTerm(k_n=float(k), c=rng.standard_normal(2), inband=bool(k > 30)) for k in (0.0, 35.2, 36.8))
    return PoleResidueModel(ports=2, terms=terms, eta0=ETA0)


def sweep(ports: int, points: int = 3) -> SParameterSweep:
    base = np.arange(ports * ports).reshape(ports, ports)
    matrix = (base + base.T) * (0.1 - 0.05j)
    return SParameterSweep(
        frequencies=np.linspace(1e9, 2e9, points),
        matrices=np.array([matrix * (n + 1) for n in range(points)]),
        z_ref=50.0,
    )


def test_format_number():
    assert format_number(0.1) == "0.1"
    assert format_number(-0.0) == "0"
    assert format_number(1 / 3) == "0.333333333333333"
    assert format_number(12.26e9) == "12260000000"


def test_model_round_trip(model):
    band = FrequencyBand(f1_hz=1.6e9, f2_hz=1.8e9)
    parsed = parse_model(serialize_model(model, band))
    assert parsed.ports == model.ports
    assert parsed.eta0 == model.eta0
    assert parsed.band.f1_hz == band.f1_hz
    for original, again in zip(model.terms, parsed.terms):
        assert again.k_n == original.k_n
        assert again.inband == original.inband
        np.testing.assert_array_equal(again.c, original.c)
    assert serialize_model(parsed) == serialize_model(model, band)


def test_model_missing_ports():
    with pytest.raises(ParseError) as info:
        parse_model(json.dumps({"terms": []}))
    assert info.value.field == "ports"


def test_model_coupling_length_mismatch():
    text = json.dumps({"ports": 2, "terms": [{"k_n": 1.0, "c": [1.0]}]})
    with pytest.raises(ParseError) as info:
        parse_model(text)
    assert info.value.field == "terms.0"


def test_model_bad_json_reports_line():
    with pytest.raises(ParseError) as info:
        parse_model('{\n  "ports": 2,\n  "terms": [,]\n}')
    assert info.value.line == 3


def test_model_wrong_format_version():
    with pytest.raises(ParseError) as info:
        parse_model(json.dumps({"format_version": 2, "ports": 1}))
    assert info.value.field == "format_version"


def test_parse_matrix():
    document = parse_matrix(MATRIX_TEXT)
    assert (document.ports, document.order) == (2, 2)
    assert document.band.f2_hz == 1.1e9
    ccm = document.to_classical()
    np.testing.assert_array_equal(ccm.M, [[0.1, 0.9], [0.9, -0.1]])
    np.testing.assert_array_equal(ccm.D, [[1.2, 0.0], [0.0, 1.2]])


def test_matrix_round_trip_is_stable():
    text = serialize_matrix(parse_matrix(MATRIX_TEXT), comment="two resonators")
    assert serialize_matrix(parse_matrix(text), comment="two resonators") == text
    np.testing.assert_array_equal(parse_matrix(text).matrix, parse_matrix(MATRIX_TEXT).matrix)


def test_published_fixture():
    document = fixtures.load_fixture("dual_mode_classical")
    assert (document.ports, document.order) == (2, 8)
    assert document.matrix[2, 3] == 0.8058


def test_matrix_asymmetric():
    with pytest.raises(ParseError, match="symmetric"):
        parse_matrix(MATRIX_TEXT.replace("1.2 0 0.1 0.9", "1.2 0 0.1 0.8"))


def test_matrix_port_block_must_be_zero():
    text = MATRIX_TEXT.replace("0 0 1.2 0\n0 0 0 1.2", "0 0.5 1.2 0\n0.5 0 0 1.2")
    with pytest.raises(ParseError, match="port block"):
        parse_matrix(text)


def test_matrix_wrong_size():
    with pytest.raises(DimensionMismatchError):
        parse_matrix(MATRIX_TEXT.replace("order 2", "order 3"))


def test_matrix_bad_number_reports_line():
    with pytest.raises(ParseError) as info:
        parse_matrix(MATRIX_TEXT.replace("0.1 0.9", "0.1 x"))
    assert info.value.line == 7


def test_matrix_missing_header():
    with pytest.raises(ParseError) as info:
        parse_matrix("order 1\n0.5\n")
    assert info.value.field == "ports"


def test_matrix_reversed_band():
    with pytest.raises(ParseError) as info:
        parse_matrix(MATRIX_TEXT.replace("band 1e9 1.1e9", "band 1.1e9 1e9"))
    assert info.value.field == "band"


def test_zero_set_document_round_trip(tmp_path, dual_mode):
    zeros = find_zeros(dual_mode)
    path = tmp_path / "zeros.json"
    write_document(path, zeros)
    again = read_document(path, ZeroSet)
    np.testing.assert_array_equal(again.transmission_zeros, zeros.transmission_zeros)
    np.testing.assert_array_equal(again.prototype_poles, zeros.prototype_poles)


def test_touchstone_two_port_order():
    text = format_touchstone(sweep(2, points=1))
    lines = text.splitlines()
    assert lines[1] == "# Hz S RI R 50"
    # S11 S21 S12 S22
    assert lines[2] == "1000000000 0 0 0.3 -0.15 0.3 -0.15 0.6 -0.3"


def test_touchstone_wraps_wide_rows():
    lines = format_touchstone(sweep(5, points=1)).splitlines()[2:]
    assert len(lines) == 10
    assert len(lines[0].split()) == 1 + 2 * 4
    assert len(lines[1].split()) == 2


def test_touchstone_empty_sweep(tmp_path):
    empty = SParameterSweep(frequencies=[], matrices=np.zeros((0, 2, 2)), z_ref=50.0)
    with pytest.raises(SweepExportError):
        export_touchstone(empty, tmp_path / "empty.s2p")


def test_export_to_missing_directory(tmp_path):
    with pytest.raises(SweepExportError):
        export_touchstone(sweep(2), tmp_path / "missing" / "out.s2p")


def test_export_is_deterministic(tmp_path):
    first, second = tmp_path / "a.s2p", tmp_path / "b.s2p"
    export_touchstone(sweep(2), first)
    export_touchstone(sweep(2), second)
    assert first.read_bytes() == second.read_bytes()


def test_csv_round_trip(tmp_path):
    original = sweep(3)
    path = tmp_path / "sweep.csv"
    export_csv(original, path)
    frame = pd.read_csv(path)
    assert list(frame.columns[:5]) == ["freq_hz", "S11_re", "S11_im", "S12_re", "S12_im"]
    again = read_sweep_csv(path, z_ref=50.0)
    np.testing.assert_array_equal(again.frequencies, original.frequencies)
    np.testing.assert_allclose(again.matrices, original.matrices, rtol=1e-14)


def test_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"S11_re": [1.0], "S11_im": [0.0]}).to_csv(path, index=False)
    with pytest.raises(ParseError) as info:
        read_sweep_csv(path)
    assert info.value.field == "freq_hz"


def test_samples_need_impedance():
    with pytest.raises(ParseError):
        samples_from_sweep(sweep(2))
    z_sweep = sweep(2).model_copy(update={"parameter": NetworkParameter.Z})
    samples = samples_from_sweep(z_sweep)
    assert samples.ports == 2


def test_matrix_document_requires_band():
    document = MatrixDocument(ports=1, order=1, matrix=[[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        document.to_classical()
