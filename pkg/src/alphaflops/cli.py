"""Command-line interface.

Exit codes: 0 success, 1 usage or parse error, 2 data error, 3 partial
success (some benchmark layers skipped).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .alpha import layer_alpha, load_params, default_params, predicted_time, save_params
from .bench import CPU_DEVICE, BenchConfig, KernelVariant, run_sweep_bench
from .calibration import FitConfig, fit, parse_fixed
from .dataset import import_dataset, load_dataset
from .errors import (
    DatasetError,
    FitError,
    MemoryCapError,
    ParseError,
    ShapeError,
    SizeGuardError,
    SweepError,
)
from .layers import (
    DenseDescriptor,
    Padding,
    dense_flops,
    format_layer,
    kernel_size,
    layer_flops,
    parse_layer,
    surface,
)
from .report import format_tsv, group_rows, render_svg, rows_for_layers, rows_for_records, summary
from .sweep import PRESETS, SweepSpec, plan_sweep

log = logging.getLogger("alphaflops")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(text, path=None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _layers_from_args(tokens):
    text = " ".join(tokens)
    return [parse_layer(part) for part in text.split(";") if part.strip()]


def _layers_from_file(path):
    layers = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            layers.append(parse_layer(line))
        except ParseError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return layers


def _params(args):
    return load_params(args.params) if args.params else default_params()


_DIM_NAMES = {
    "w": "w_in",
    "h": "h_in",
    "cin": "c_in",
    "cout": "c_out",
    "k1": "k1",
    "k2": "k2",
    "stride": "stride",
    "pad": "padding",
    "batch": "batch",
}


def _parse_dims(text):
    dims = {}
    for tok in (text or "").split():
        key, sep, raw = tok.partition("=")
        if not sep or key not in _DIM_NAMES:
            raise UsageError(f"bad dimension {tok!r} (expected one of {', '.join(_DIM_NAMES)} as key=value)")
        if key == "pad":
            try:
                dims["padding"] = Padding(raw)
            except ValueError:
                raise UsageError(f"pad must be same or valid, got {raw!r}") from None
            continue
        if not (raw.isascii() and raw.isdigit()) or int(raw) < 1:
            raise UsageError(f"{key} must be a positive integer, got {raw!r}")
        dims[_DIM_NAMES[key]] = int(raw)
    return dims


def _parse_count(text):
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None
    if value != int(value) or value < 1:
        raise UsageError(f"expected a positive integer count, got {text!r}")
    return int(value)


def _parse_values(text):
    if ":" in text:
        lo, _, hi = text.partition(":")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise UsageError(f"empty range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(v) for v in text.split(",") if v.strip())


def _sweep_spec(args):
    if args.preset:
        maker = PRESETS[args.preset]
        if args.target is not None:
            try:
                return maker(_parse_count(args.target))
            except TypeError:
                raise UsageError(f"preset {args.preset} has a fixed target") from None
        return maker()
    if args.target is None or args.vary is None or args.values is None:
        raise UsageError("give --preset, or all of --target, --vary and --values")
    try:
        return SweepSpec(
            target_flops=_parse_count(args.target),
            varied_axis=args.vary,
            compensating_axis=args.compensate,
            axis_values=_parse_values(args.values),
            fixed_dims=_parse_dims(args.dims),
            tolerance=args.tolerance,
        )
    except ValueError as exc:
        if isinstance(exc, SweepError):
            raise
        raise UsageError(str(exc)) from None


def _sweep_layers(args):
    if getattr(args, "layers", None):
        return _layers_from_file(args.layers)
    return [p.layer for p in plan_sweep(_sweep_spec(args)) if p.kept]


def _load(args):
    if getattr(args, "mapping", None):
        return import_dataset(args.dataset, args.mapping)
    return load_dataset(args.dataset)


def _single_device(records, wanted=None):
    if wanted:
        records = [r for r in records if r.device == wanted]
        if not records:
            raise DatasetError(f"no records for device {wanted!r}")
        return records
    devices = sorted({r.device for r in records})
    if len(devices) > 1:
        raise DatasetError(
            f"dataset mixes devices ({', '.join(devices)}); run once per device with --device <label>"
        )
    return records


def _write_plots(rows, directory, stem):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for flops, group in group_rows(rows).items():
        path = directory / f"{stem}_{flops}.svg"
        path.write_text(render_svg(group, f"{flops:,} FLOPs"), encoding="utf-8")
        written.append(path)
    return written


# -- commands -----------------------------------------------------------------------


def cmd_flops(args):
    layers = _layers_from_file(args.file) if args.file else _layers_from_args(args.layer)
    if not layers:
        raise UsageError("no layer given")
    lines = ["layer\tflops\tflops_exact\tmflops"]
    for layer in layers:
        flops = layer_flops(layer)
        exact = dense_flops(layer, exact=True) if isinstance(layer, DenseDescriptor) else flops
        lines.append(f"{format_layer(layer)}\t{flops}\t{exact}\t{flops / 1e6:.2f}")
    _out("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_alpha(args):
    layers = _layers_from_file(args.file) if args.file else _layers_from_args(args.layer)
    if not layers:
        raise UsageError("no layer given")
    params = _params(args)
    lines = ["layer\tflops\tsurface\tkernel_k\talpha\talpha_flops\tpredicted_ms"]
    for layer in layers:
        alpha = layer_alpha(layer, params)
        lines.append(
            f"{format_layer(layer)}\t{layer_flops(layer)}\t{surface(layer)}\t{kernel_size(layer)}\t"
            f"{alpha:.6f}\t{layer_flops(layer) * alpha:.1f}\t{predicted_time(layer, params) * 1e3:.6g}"
        )
    _out("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_sweep(args):
    spec = _sweep_spec(args)
    points = plan_sweep(spec)
    lines = ["index\tvalue\tstatus\tflops\trel_error\tlayer"]
    for p in points:
        status = "kept" if p.kept else "dropped"
        layer = format_layer(p.layer) if p.kept else ""
        lines.append(f"{p.index}\t{p.value}\t{status}\t{p.flops}\t{p.rel_error:.6f}\t{layer}")
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        kept = [format_layer(p.layer) for p in points if p.kept]
        Path(args.out).write_text("\n".join(kept) + ("\n" if kept else ""), encoding="utf-8")
    return EXIT_OK


def cmd_bench(args):
    layers = _sweep_layers(args)
    config = BenchConfig(
        warmup_runs=args.warmup,
        timed_runs=args.runs,
        seed=args.seed,
        kernel_variant=KernelVariant(args.variant),
        memcap_mb=args.memcap_mb,
    )
    records, skipped = run_sweep_bench(layers, config, args.out, device=args.device)
    print(f"wrote {len(records)} record(s) to {args.out}")
    if skipped:
        for layer in skipped:
            print(f"skipped (memory cap): {format_layer(layer)}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_fit(args):
    records = _single_device(_load(args), args.device)
    fixed = parse_fixed(args.fix or [])
    config = FitConfig(refine_evals=args.refine_evals, workers=args.workers, trim=args.trim)
    result = fit(records, fixed, config)
    if args.out:
        save_params(result.params, args.out)
    lines = [
        f"records\t{result.n_records}",
        f"mape\t{result.mape:.6f}",
        f"max_ape\t{result.max_ape:.6f}",
        f"loss\t{result.loss:.6g}",
        f"converged\t{'yes' if result.converged else 'no'}",
        f"time_per_flop_c\t{result.params.time_per_flop_c!r}",
    ]
    for threshold, regime in result.params.regimes:
        lines.append(f"regime k={threshold}\tbeta={regime.beta!r}\tgamma={regime.gamma!r}\ts_k={regime.s_k!r}")
    if args.out:
        lines.append(f"params written to {args.out}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_predict(args):
    if not args.params:
        raise UsageError("predict needs --params")
    params = load_params(args.params)
    records = _single_device(_load(args), args.device)
    if not records:
        raise DatasetError("dataset has no records")
    rows = rows_for_records(records, params)
    _out(format_tsv(rows), args.out)
    if args.plot:
        stem = Path(args.out).stem if args.out else "predict"
        directory = args.plot_dir or (Path(args.out).parent if args.out else Path.cwd())
        for path in _write_plots(rows, directory, stem):
            print(f"plot written to {path}", file=sys.stderr)
    mape, max_ape = summary(rows)
    print(f"mape {mape:.6f}  max_ape {max_ape:.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args):
    params = _params(args)
    layers = _sweep_layers(args)
    rows = rows_for_layers(layers, params)
    _out(format_tsv(rows), args.out)
    if args.plot:
        stem = Path(args.out).stem if args.out else "report"
        directory = args.plot_dir or (Path(args.out).parent if args.out else Path.cwd())
        for path in _write_plots(rows, directory, stem):
            print(f"plot written to {path}", file=sys.stderr)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--params", default=default(None), help="alpha parameter file")
    parser.add_argument("--seed", type=int, default=default(0), help="seed for generated input data")
    parser.add_argument("--plot", action="store_true", default=default(False), help="also write SVG charts")
    parser.add_argument(
        "--fix", action="append", default=default(None), metavar="KEY=VALUE", help="pin a parameter while fitting"
    )
    parser.add_argument("--trim", action="store_true", default=default(False), help="drop the worst 1%% before refitting")


def _sweep_flags(parser, allow_layers):
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named sweep")
    parser.add_argument("--target", help="target FLOPs, e.g. 2025e6")
    parser.add_argument("--vary", choices=["k", "wh", "cin", "cout", "batch"], help="axis to vary")
    parser.add_argument("--values", help="axis values: lo:hi (inclusive) or a,b,c")
    parser.add_argument("--compensate", default="cin_cout", choices=["cin_cout", "wh", "none"])
    parser.add_argument("--dims", help='fixed dimensions, e.g. "w=10 h=10"')
    parser.add_argument("--tolerance", type=float, default=0.05, help="relative FLOPs tolerance per point")
    if allow_layers:
        parser.add_argument("--layers", help="file of layer descriptors (one per line) instead of a sweep")


def build_parser():
    parser = _Parser(prog="alphaflops", description="FLOPs and alpha-FLOPs cost models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("flops", parents=[common], help="classical FLOPs of layers")
    p.add_argument("layer", nargs="*", help="descriptor, e.g. dense din=128 dout=64 (';' separates layers)")
    p.add_argument("--file", help="file of descriptors, one per line")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("alpha", parents=[common], help="alpha factor, alpha-FLOPs and predicted time")
    p.add_argument("layer", nargs="*")
    p.add_argument("--file")
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("sweep", parents=[common], help="generate an equal-FLOPs sweep")
    _sweep_flags(p, allow_layers=False)
    p.add_argument("--out", help="write kept layers as descriptor lines")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", parents=[common], help="time a sweep on one CPU thread")
    _sweep_flags(p, allow_layers=True)
    p.add_argument("--out", required=True, help="timing CSV to write")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--variant", default=KernelVariant.NAIVE_DIRECT.value, choices=[v.value for v in KernelVariant])
    p.add_argument("--memcap-mb", type=float, default=None, help="override ALPHAFLOPS_BENCH_MEMCAP_MB")
    p.add_argument("--device", default=CPU_DEVICE)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fit", parents=[common], help="fit alpha parameters to a timing CSV")
    p.add_argument("dataset")
    p.add_argument("--out", help="parameter file to write")
    p.add_argument("--mapping", help="column-mapping file for foreign CSV layouts")
    p.add_argument("--device", help="use only records from this device")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--refine-evals", type=int, default=500)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="compare predictions with a timing CSV")
    p.add_argument("dataset")
    p.add_argument("--out", help="report TSV (default stdout)")
    p.add_argument("--mapping")
    p.add_argument("--device")
    p.add_argument("--plot-dir")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", parents=[common], help="predicted times for a sweep or layer list")
    _sweep_flags(p, allow_layers=True)
    p.add_argument("--out")
    p.add_argument("--plot-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="alphaflops: %(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError) as exc:
        print(f"alphaflops: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FitError, SweepError, ShapeError, SizeGuardError, MemoryCapError, OSError) as exc:
        print(f"alphaflops: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"alphaflops: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
