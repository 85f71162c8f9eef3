"""Command-line front end.

    pctmeta analyze  --input F --measure log-rr --percentile 0.25,0.5 --method weighted,dl --out results.csv
    pctmeta simulate --spec experiment.yaml --out table.md
    pctmeta forest   --input F --measure log-hr --out forest.svg

Exit codes: 0 success, 2 input error, 3 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import yaml

from . import __version__
from .comparators import MethodError
from .effects import DEFAULT_CI_DIVISOR, DataError, Dataset, parse_dataset
from .forest import forest_svg
from .harness import run_experiment, spec_from_mapping, write_report
from .inversion import METHODS, InversionConfig, interval
from .simgen import true_percentile

EXIT_INPUT = 2
EXIT_USAGE = 3

MEASURE_FLAGS = ("log-rr", "rd", "log-hr")
RESULT_COLUMNS = (
    "method", "target", "p", "level", "K", "point", "lower", "upper",
    "point_bt", "lower_bt", "upper_bt", "non_interval", "empty", "grid_points", "refinements", "seed", "null",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text: str) -> list[str]:
    out = [v.strip() for v in text.split(",") if v.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {','.join(METHODS)}")
    return out


def _add_inference_flags(p: argparse.ArgumentParser, methods_default: str) -> None:
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--measure", choices=MEASURE_FLAGS, default="log-rr")
    p.add_argument("--percentile", type=_floats, default=[0.5])
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--method", type=_methods, default=_methods(methods_default))
    p.add_argument("--seed", type=int, default=InversionConfig.seed)
    p.add_argument("--resamples", type=int, default=InversionConfig.n_resamples)
    p.add_argument("--exact-threshold", type=int, default=InversionConfig.exact_threshold)
    p.add_argument("--grid-size", type=int, default=InversionConfig.grid_size)
    p.add_argument("--ci-divisor", type=float, default=DEFAULT_CI_DIVISOR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pctmeta", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="percentile and mean intervals for one dataset")
    _add_inference_flags(a, "weighted")
    a.add_argument("--out", type=Path, help="results CSV (default: stdout)")

    s = sub.add_parser("simulate", help="coverage experiment from a spec file")
    s.add_argument("--spec", required=True, type=Path)
    s.add_argument("--out", type=Path, help="report file (default: stdout)")
    s.add_argument("--format", choices=("csv", "markdown"), help="default: from spec or file extension")
    s.add_argument("--workers", type=int, default=1, help="worker processes; output does not depend on it")

    f = sub.add_parser("forest", help="forest plot SVG with percentile diamonds")
    _add_inference_flags(f, "weighted")
    f.add_argument("--out", required=True, type=Path)
    f.add_argument("--title", default="")
    return parser


def _validate(args) -> InversionConfig:
    for p in args.percentile:
        if not 0 < p < 1:
            raise UsageError(f"--percentile values must lie in (0, 1), got {p}")
    if not args.percentile:
        raise UsageError("--percentile needs at least one value")
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    if args.ci_divisor <= 0:
        raise UsageError("--ci-divisor must be positive")
    try:
        return InversionConfig(grid_size=args.grid_size, seed=args.seed, n_resamples=args.resamples,
                               exact_threshold=args.exact_threshold)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_methods(d: Dataset, methods: list[str]) -> None:
    for m in methods:
        if m in ("dl", "sj") and d.K < 2:
            raise UsageError(f"--method {m} requires K >= 2 studies; the input has K={d.K}")
        if m == "dl" and (d.sigma <= 0).any():
            raise UsageError("--method dl requires every standard error to be positive")


def _load(args) -> Dataset:
    try:
        raw = args.input.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc.strerror}") from None
    return parse_dataset(raw, args.measure, ci_divisor=args.ci_divisor)


def _intervals(d: Dataset, args, cfg: InversionConfig):
    alpha = 1.0 - args.level
    out = []
    for m in args.method:
        if m in ("dl", "sj"):
            out.append(interval(d, None, alpha, m, cfg))
        else:
            out.extend(interval(d, p, alpha, m, cfg) for p in args.percentile)
    return out


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _header(lines: dict, prefix: str = "# ") -> str:
    return "".join(f"{prefix}{k} = {v}\n" for k, v in lines.items())


def cmd_analyze(args) -> int:
    cfg = _validate(args)
    d = _load(args)
    _check_methods(d, args.method)
    results = _intervals(d, args, cfg)

    buf = io.StringIO()
    buf.write(f"# pctmeta {__version__} analyze\n")
    buf.write(_header({
        "input": args.input.name, "measure": d.measure.kind, "K": d.K,
        "excluded": ";".join(f"{e.study_id}:{e.reason}" for e in d.exclusions) or "none",
        "percentile": ",".join(f"{p:g}" for p in args.percentile), "level": args.level,
        "method": ",".join(args.method), "seed": cfg.seed, "resamples": cfg.n_resamples,
        "exact_threshold": cfg.exact_threshold, "grid_size": cfg.grid_size, "range_mult": cfg.range_mult,
        "crn": cfg.crn, "bound": cfg.bound, "ci_divisor": args.ci_divisor,
    }))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        dg = r.diagnostics
        w.writerow([
            r.method, "mean" if r.p is None else "percentile", "" if r.p is None else f"{r.p:g}",
            f"{r.level:g}", d.K, _num(r.point), _num(r.lower), _num(r.upper),
            _num(r.point_bt), _num(r.lower_bt), _num(r.upper_bt),
            int(dg.non_interval_flag), int(dg.empty_flag), dg.grid_points, dg.refinements,
            "" if dg.seed is None else dg.seed, dg.null_kind,
        ])
    _emit(buf.getvalue().encode(), args.out)
    return 0


def cmd_simulate(args) -> int:
    try:
        cfg = yaml.safe_load(args.spec.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {args.spec}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise DataError(f"cannot parse {args.spec}: {exc}") from None
    try:
        spec = spec_from_mapping(cfg)
    except (ValueError, TypeError, KeyError) as exc:
        raise DataError(f"{args.spec}: {exc}") from None
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    fmt = args.format or (cfg.get("format") if isinstance(cfg, dict) else None)
    if fmt is None:
        fmt = "markdown" if args.out and args.out.suffix.lower() in (".md", ".markdown") else "csv"
    if fmt not in ("csv", "markdown"):
        raise DataError(f"{args.spec}: unknown format {fmt!r}")

    rows = run_experiment(spec, workers=args.workers)
    sc = spec.scenario
    provenance = {
        "spec": args.spec.name, "kind": sc.kind, "measure": sc.measure.kind,
        "eta": list(sc.eta), "sigma": [list(r) for r in sc.cov], "shapes": list(sc.shapes),
        "rates": list(sc.rates), "n_per_arm": sc.n_per_arm if isinstance(sc.n_per_arm, int) else list(sc.n_per_arm),
        "K": spec.K, "reps": spec.reps, "level": spec.level, "percentiles": list(spec.percentiles),
        "methods": ",".join(spec.methods), "base_seed": spec.base_seed, "score_mean": spec.score_mean,
        "resamples": spec.inversion.n_resamples, "exact_threshold": spec.inversion.exact_threshold,
        "grid_size": spec.inversion.grid_size, "oracle_draws": spec.oracle_draws, "oracle_seed": spec.oracle_seed,
    }
    if sc.kind != "fixed":
        provenance["truth"] = {f"{p:g}": true_percentile(sc, p, spec.oracle_draws, spec.oracle_seed)
                               for p in spec.percentiles}
    if fmt == "markdown":
        head = "<!--\n" + _header({"pctmeta": f"{__version__} simulate", **provenance}, prefix="") + "-->\n\n"
    else:
        head = f"# pctmeta {__version__} simulate\n" + _header(provenance)
    _emit(head.encode() + write_report(rows, fmt), args.out)
    return 0


def cmd_forest(args) -> int:
    cfg = _validate(args)
    d = _load(args)
    _check_methods(d, args.method)
    svg = forest_svg(d, _intervals(d, args, cfg), title=args.title)
    _emit(svg.encode(), args.out)
    return 0


def _emit(data: bytes, out: Path | None) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        out.write_bytes(data)


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "forest": cmd_forest}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(f"pctmeta {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MethodError) as exc:
        print(f"pctmeta {args.subcommand}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
