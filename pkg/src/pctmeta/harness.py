"""Coverage experiments: replicate a scenario, analyse each replicate with every
method, and aggregate empirical coverage (ECL) and median interval length (ML).

Replicate ``r`` draws everything from ``SeedSequence([base_seed, r])``, whose
two children seed the data generator and the sign matrix. Results therefore
do not depend on the number of worker processes or on scheduling order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .comparators import MethodError, dl_interval, sj_interval
from .effects import Dataset, summarize_tables
from .inversion import METHODS, InversionConfig, invert_ci
from .simgen import ORACLE_DRAWS, ORACLE_SEED, Scenario, scenario_from_mapping, simulate, true_mean, true_percentile

MEAN_TARGET = "mean"


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: Scenario
    K: int
    reps: int = 2000
    level: float = 0.95
    percentiles: tuple[float, ...] = (0.5,)
    methods: tuple[str, ...] = METHODS
    base_seed: int = 0
    inversion: InversionConfig = field(default_factory=InversionConfig)
    score_mean: bool = False
    oracle_draws: int = ORACLE_DRAWS
    oracle_seed: int = ORACLE_SEED

    def __post_init__(self):
        object.__setattr__(self, "percentiles", tuple(float(p) for p in self.percentiles))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if not self.percentiles or not all(0 < p < 1 for p in self.percentiles):
            raise ValueError("percentiles must lie in (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.K < 2 and {"dl", "sj"} & set(self.methods):
            raise ValueError("dl and sj need K >= 2")

    @property
    def alpha(self) -> float:
        return 1.0 - self.level

    def targets(self, method: str) -> list[float | str]:
        out: list[float | str] = list(self.percentiles)
        if self.score_mean and method in ("dl", "sj"):
            out.append(MEAN_TARGET)
        return out


@dataclass(frozen=True)
class CoverageRow:
    method: str
    p: float | str
    K: int
    ECL: float
    ML: float
    reps_used: int
    truth: float


def _replicate(spec: ExperimentSpec, r: int) -> dict:
    """Interval endpoints per (method, target) for replicate ``r``; None on method failure."""
    data_ss, sign_ss = np.random.SeedSequence([spec.base_seed, r]).spawn(2)
    meta = simulate(spec.scenario, spec.K, data_ss)
    studies, _ = summarize_tables(meta.tables, spec.scenario.measure)
    out: dict = {}
    if not studies:
        return out
    d = Dataset(tuple(studies), spec.scenario.measure)
    cfg = replace(spec.inversion, seed=int(sign_ss.generate_state(1, np.uint64)[0]))
    for method in spec.methods:
        if method in ("dl", "sj"):
            try:
                res = (dl_interval if method == "dl" else sj_interval)(d, spec.alpha)
            except MethodError:
                continue
            for target in spec.targets(method):
                out[method, target] = (res.lower, res.upper)
        else:
            for p in spec.percentiles:
                res = invert_ci(d, p, spec.alpha, method, cfg)
                out[method, p] = (res.lower, res.upper)
    return out


def _replicate_star(args):
    return _replicate(*args)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[CoverageRow]:
    """Run ``spec.reps`` replicates and aggregate ECL/ML per method and target."""
    truths = {p: true_percentile(spec.scenario, p, spec.oracle_draws, spec.oracle_seed) for p in spec.percentiles}
    if spec.score_mean:
        truths[MEAN_TARGET] = true_mean(spec.scenario, spec.oracle_draws, spec.oracle_seed)

    jobs = [(spec, r) for r in range(spec.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replicate_star, jobs, chunksize=max(1, spec.reps // (8 * workers))))
    else:
        records = [_replicate(*job) for job in jobs]

    rows = []
    for method in spec.methods:
        for target in spec.targets(method):
            truth = truths[target]
            found = [rec[method, target] for rec in records if (method, target) in rec]
            covered = [lo <= truth <= hi for lo, hi in found]
            lengths = [hi - lo for lo, hi in found if math.isfinite(hi - lo)]
            rows.append(CoverageRow(
                method=method,
                p=target,
                K=spec.K,
                ECL=float(np.mean(covered)) if covered else math.nan,
                ML=float(np.median(lengths)) if lengths else math.nan,
                reps_used=len(found),
                truth=truth,
            ))
    return rows


REPORT_COLUMNS = ("method", "p", "K", "ECL", "ML", "reps", "truth")


def write_report(rows: list[CoverageRow], format: str = "csv") -> bytes:
    """Render coverage rows as CSV or as one markdown table per target."""
    if not rows:
        raise ValueError("no rows to report")
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.method, _p_label(r.p), r.K, f"{r.ECL:.6f}", f"{r.ML:.6f}", r.reps_used, f"{r.truth:.6f}"])
        return buf.getvalue().encode()
    if format == "markdown":
        return _markdown(rows).encode()
    raise ValueError(f"unknown report format {format!r}")


def _p_label(p) -> str:
    return p if isinstance(p, str) else f"{p:g}"


def _markdown(rows: list[CoverageRow]) -> str:
    targets = list(dict.fromkeys(r.p for r in rows))
    blocks = []
    for target in targets:
        sub = [r for r in rows if r.p == target]
        methods = list(dict.fromkeys(r.method for r in sub))
        ks = sorted({r.K for r in sub}, reverse=True)
        title = "Mean" if target == MEAN_TARGET else f"{100 * target:g}th percentile"
        head = "| K | " + " | ".join(f"{m} ECL | {m} ML" for m in methods) + " |"
        rule = "|---|" + "---|---|" * len(methods)
        lines = [f"### {title}", "", head, rule]
        cells = {(r.K, r.method): r for r in sub}
        for k in ks:
            vals = []
            for m in methods:
                r = cells.get((k, m))
                vals += [_pct(r.ECL), _num(r.ML)] if r else ["", ""]
            lines.append(f"| {k} | " + " | ".join(vals) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def _pct(x: float) -> str:
    return "NA" if math.isnan(x) else f"{100 * x:.0f}%"


def _num(x: float) -> str:
    return "NA" if math.isnan(x) else f"{x:.2f}"


_HARNESS_KEYS = {"K", "reps", "level", "percentiles", "methods", "base_seed", "n_resamples",
                 "exact_threshold", "grid_size", "score_mean", "oracle_draws", "oracle_seed",
                 "seed", "workers", "format"}


def spec_from_mapping(cfg: dict) -> ExperimentSpec:
    """ExperimentSpec from a parsed experiment file (scenario keys plus harness keys)."""
    if not isinstance(cfg, dict):
        raise ValueError("experiment spec must be a key-value mapping")
    scenario = scenario_from_mapping({k: v for k, v in cfg.items() if k not in _HARNESS_KEYS})
    inv = InversionConfig(
        grid_size=int(cfg.get("grid_size", 512)),
        n_resamples=int(cfg.get("n_resamples", InversionConfig.n_resamples)),
        exact_threshold=int(cfg.get("exact_threshold", InversionConfig.exact_threshold)),
    )
    pcts = cfg.get("percentiles", [0.5])
    methods = cfg.get("methods", list(METHODS))
    return ExperimentSpec(
        scenario=scenario,
        K=int(cfg["K"]) if "K" in cfg else _missing("K"),
        reps=int(cfg.get("reps", 2000)),
        level=float(cfg.get("level", 0.95)),
        percentiles=tuple(pcts if isinstance(pcts, list) else [pcts]),
        methods=tuple(methods if isinstance(methods, list) else str(methods).split(",")),
        base_seed=int(cfg.get("base_seed", 0)),
        inversion=inv,
        score_mean=bool(cfg.get("score_mean", False)),
        oracle_draws=int(cfg.get("oracle_draws", ORACLE_DRAWS)),
        oracle_seed=int(cfg.get("oracle_seed", ORACLE_SEED)),
    )


def _missing(key: str):
    raise ValueError(f"experiment spec needs {key!r}")
