"""Command-line interface: ``python -m app <command> ...``."""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.models.schemas import (
    ETA0,
    AffineOutOfBand,
    BasisTransform,
    ClassicalCouplingMatrix,
    FrequencyBand,
    MatrixDocument,
    NetworkParameter,
    TopologyMask,
    ZeroSet,
)
from app.services import io_formats
from app.services.basis import apply_basis, compare_coupling, fix_sign_gauge, to_transversal
from app.services.classical_fit import REFLECTION_TOL, find_zeros, fit_classical
from app.services.errors import CouplingMatrixError, InvalidArgumentError
from app.services.impedance import eval_impedance, run_sweep, z_to_s
from app.services.model_core import make_band, model_from_em
from app.services.narrowband import (
    bandpass_map,
    eval_classical,
    inverse_reduce,
    lowpass_map,
    narrowband_from_model,
    reduce_to_classical,
)
from app.services.rational_fit import fit_pole_residue

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _pair(text: str, what: str) -> tuple[float, float]:
    try:
        first, second = (float(part) for part in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"{what} must look like A:B, got {text!r}") from exc
    return first, second


def _band(text: str | None, fallback: FrequencyBand | None = None) -> FrequencyBand:
    if text is None:
        if fallback is None:
            raise UsageError("a band is required (--band F1:F2)")
        return fallback
    return make_band(*_pair(text, "--band"))


def _read(reader: Callable[[Path], object], path: str) -> object:
    try:
        return reader(Path(path))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _classical(document: MatrixDocument, band_text: str | None) -> ClassicalCouplingMatrix:
    return document.to_classical(_band(band_text, document.band))


def _print_report(report) -> None:
    for entry in report.entries:
        print(
            f"({entry.row},{entry.col}) {io_formats.format_number(entry.value_a)} -> "
            f"{io_formats.format_number(entry.value_b)} delta {io_formats.format_number(entry.delta)}"
        )


def cmd_eval(args: argparse.Namespace) -> int:
    document = _read(io_formats.read_model, args.model)
    model = document.to_model()
    if args.mode == "exact" and args.band is None and document.band is None:
        band = None
    else:
        band = _band(args.band, document.band)
    f_start = args.f_start if args.f_start is not None else (band.f1_hz if band else None)
    f_stop = args.f_stop if args.f_stop is not None else (band.f2_hz if band else None)
    if f_start is None or f_stop is None:
        raise UsageError("--f-start and --f-stop are required without a band")
    if not 0 < f_start <= f_stop:
        raise UsageError(f"need 0 < --f-start <= --f-stop, got {f_start:g} and {f_stop:g}")
    if args.points < 1:
        raise UsageError(f"--points must be at least 1, got {args.points}")
    frequencies = np.array([np.sqrt(f_start * f_stop)]) if args.points == 1 else np.linspace(f_start, f_stop, args.points)
    z_ref = args.zref if args.zref is not None else model.eta0
    parameter = NetworkParameter(args.parameter)

    if args.mode == "exact":

        def impedance(f: float) -> np.ndarray:
            return eval_impedance(model, FrequencyBand.wavenumber(f))

    else:
        result = narrowband_from_model(model, band)
        oob = result.out_of_band if args.mode == "narrowband" else AffineOutOfBand.zero(model.ports)

        def impedance(f: float) -> np.ndarray:
            K = lowpass_map(FrequencyBand.wavenumber(f), band)
            return eval_classical(result.classical, K) + oob.at(K)

    def evaluate(f: float) -> np.ndarray:
        Z = impedance(f)
        return Z if parameter is NetworkParameter.Z else z_to_s(Z, z_ref)

    sweep = run_sweep(evaluate, frequencies, z_ref, parameter, args.threads)
    if args.format == "csv":
        io_formats.export_csv(sweep, args.out)
    else:
        io_formats.export_touchstone(sweep, args.out)
    print(f"wrote {len(frequencies)} points to {args.out}")
    return EXIT_OK


def cmd_narrowband(args: argparse.Namespace) -> int:
    document = _read(io_formats.read_model, args.model)
    band = _band(args.band, document.band)
    result = narrowband_from_model(document.to_model(), band)
    io_formats.write_matrix(args.out, result.classical, comment="narrowband coupling matrix")
    oob_path = args.oob_out or str(Path(args.out).with_suffix(".oob.json"))
    io_formats.write_document(oob_path, result.out_of_band)
    print(f"wrote {args.out} and {oob_path}")
    return EXIT_OK


def cmd_inverse(args: argparse.Namespace) -> int:
    ccm = _classical(_read(io_formats.read_matrix, args.matrix), args.band)
    emcm = inverse_reduce(ccm, args.eta0)
    model = model_from_em(emcm, args.eta0)
    io_formats.write_model(args.out, model, band=ccm.band)
    for term in model.terms:
        print(f"k_n {io_formats.format_number(term.k_n)} f_n {io_formats.format_number(FrequencyBand.frequency(term.k_n))}")
    return EXIT_OK


def cmd_basis(args: argparse.Namespace) -> int:
    ccm = _classical(_read(io_formats.read_matrix, args.matrix), args.band)
    emcm = inverse_reduce(ccm, ETA0)
    if args.transform:
        transform = _read(lambda path: io_formats.read_document(path, BasisTransform), args.transform)
        changed = apply_basis(emcm, transform)
    else:
        changed, transform = to_transversal(emcm)
        if args.transform_out:
            io_formats.write_document(args.transform_out, transform)
    result = reduce_to_classical(changed, ccm.band, ETA0)
    io_formats.write_matrix(args.out, result)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_zeros(args: argparse.Namespace) -> int:
    ccm = _classical(_read(io_formats.read_matrix, args.matrix), args.band)
    k_range = _pair(args.range, "--range")
    port_in, port_out = (int(value) - 1 for value in _pair(args.ports, "--ports"))
    zeros = find_zeros(
        ccm, k_range=k_range, points=args.points, ports=(port_in, port_out), reflection_tol=args.reflection_tol
    )
    for label, values in (("TZ", zeros.transmission_zeros), ("RZ", zeros.reflection_zeros)):
        for K in values:
            f = FrequencyBand.frequency(bandpass_map(K, ccm.band))
            print(f"{label} K {K:+.10f} f_hz {io_formats.format_number(f)}")
    for pole in zeros.prototype_poles:
        print(f"POLE K {pole.real:+.10f} {pole.imag:+.10f}j")
    if args.out:
        io_formats.write_document(args.out, zeros)
    return EXIT_OK


def cmd_fit_model(args: argparse.Namespace) -> int:
    sweep = _read(lambda path: io_formats.read_sweep_csv(path, args.eta0), args.samples)
    samples = io_formats.samples_from_sweep(sweep)
    band = _band(args.band) if args.band else None
    report = fit_pole_residue(samples, args.poles, eta0=args.eta0, max_iters=args.max_iters, tol=args.tol, band=band)
    io_formats.write_model(args.out, report.model, band=band)
    print(f"residual {report.residual:.3e} iterations {report.iterations} converged {report.converged}")
    return EXIT_OK if report.converged else EXIT_COMPUTATION


def cmd_fit_classical(args: argparse.Namespace) -> int:
    init_document = _read(io_formats.read_matrix, args.init)
    init = _classical(init_document, args.band)
    if args.targets:
        targets = _read(lambda path: io_formats.read_document(path, ZeroSet), args.targets)
    elif args.targets_from:
        reference = _classical(_read(io_formats.read_matrix, args.targets_from), args.band)
        targets = find_zeros(
            reference,
            k_range=_pair(args.range, "--range"),
            points=args.points,
            reflection_tol=args.reflection_tol,
        )
    else:
        raise UsageError("one of --targets or --targets-from is required")
    mask_source = _read(io_formats.read_matrix, args.mask).matrix if args.mask else init.full()
    mask = TopologyMask.from_matrix(mask_source, init.ports)
    result = fit_classical(targets, mask, init, max_iters=args.max_iters, tol=args.tol)
    io_formats.write_matrix(args.out, fix_sign_gauge(result.matrix), comment=f"fitted, residual {result.residual:.3e}")
    print(f"residual {result.residual:.3e} iterations {result.iterations} converged {result.converged}")
    return EXIT_OK if result.converged else EXIT_COMPUTATION


def cmd_compare(args: argparse.Namespace) -> int:
    first = _read(io_formats.read_matrix, args.a)
    second = _read(io_formats.read_matrix, args.b)
    _print_report(compare_coupling(first.matrix, second.matrix, top_k=args.top, threshold=args.threshold))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emcm", description="EM coupling matrix toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("eval", help="sweep a pole-residue model and export S or Z parameters")
    p.add_argument("--model", required=True)
    p.add_argument("--band", help="F1:F2 in Hz (defaults to the model file band)")
    p.add_argument("--f-start", type=float)
    p.add_argument("--f-stop", type=float)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--zref", type=float, help="reference impedance (defaults to the model eta0)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["touchstone", "csv"], default="touchstone")
    p.add_argument("--mode", choices=["exact", "narrowband", "classical"], default="exact")
    p.add_argument("--parameter", choices=["S", "Z"], default="S")
    p.add_argument("--threads", type=int)
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("narrowband", help="reduce a model to a classical matrix and out-of-band term")
    p.add_argument("--model", required=True)
    p.add_argument("--band")
    p.add_argument("--out", required=True)
    p.add_argument("--oob-out")
    p.set_defaults(handler=cmd_narrowband)

    p = commands.add_parser("inverse", help="recover an EM pole-residue model from a classical matrix")
    p.add_argument("matrix")
    p.add_argument("--band")
    p.add_argument("--eta0", type=float, default=ETA0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_inverse)

    p = commands.add_parser("basis", help="transversal form of a matrix, or apply a saved transform")
    p.add_argument("matrix")
    p.add_argument("--band")
    p.add_argument("--transform", help="apply this transform instead of diagonalizing")
    p.add_argument("--transform-out")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_basis)

    p = commands.add_parser("zeros", help="transmission/reflection zeros and poles of a matrix")
    p.add_argument("matrix")
    p.add_argument("--band")
    p.add_argument("--range", default="-10:10", help="K_LO:K_HI (write as --range=-5:5)")
    p.add_argument("--points", type=int, default=4001)
    p.add_argument("--ports", default="1:2", help="IN:OUT, 1-based")
    p.add_argument("--reflection-tol", type=float, default=REFLECTION_TOL, help="largest |S11| kept as a reflection zero")
    p.add_argument("--out", help="write the zero set as JSON")
    p.set_defaults(handler=cmd_zeros)

    p = commands.add_parser("fit-model", help="fit a pole-residue model to Z-parameter samples")
    p.add_argument("--samples", required=True, help="Z-parameter CSV")
    p.add_argument("--poles", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--band")
    p.add_argument("--eta0", type=float, default=ETA0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit_model)

    p = commands.add_parser("fit-classical", help="fit a classical matrix to target zeros and poles")
    p.add_argument("--init", required=True)
    p.add_argument("--targets", help="zero set JSON")
    p.add_argument("--targets-from", help="take targets from the zeros of this matrix")
    p.add_argument("--mask", help="matrix whose nonzero pattern is the topology (defaults to --init)")
    p.add_argument("--band")
    p.add_argument("--range", default="-10:10")
    p.add_argument("--points", type=int, default=4001)
    p.add_argument("--reflection-tol", type=float, default=REFLECTION_TOL)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit_classical)

    p = commands.add_parser("compare", help="rank the entries that differ between two matrices")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--top", type=int)
    p.add_argument("--threshold", type=float, default=0.0)
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CouplingMatrixError, ValidationError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
