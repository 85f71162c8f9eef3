"""Study-level data model and conversion of raw inputs to analysis-scale effects.

Every study enters the analysis as a pair ``(theta_hat, sigma_hat)``: an effect
estimate on the analysis scale (log relative risk, risk difference or log
hazard ratio) and its standard error. Two input routes are supported:

* raw 2x2 tables (events / sample size per arm), with double-zero studies
  excluded and a 0.5 continuity correction applied when a cell is zero;
* reported point estimates with a 95% interval, where the standard error is
  taken as the interval length divided by ``ci_divisor`` (default 4).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

SCHEMA_SUMMARY = ("study_id", "estimate", "ci_lower", "ci_upper", "scale")
SCHEMA_TABLE = ("study_id", "events_trt", "n_trt", "events_ctl", "n_ctl")

CONTINUITY = 0.5
DEFAULT_CI_DIVISOR = 4.0


class DataError(ValueError):
    """Malformed or inconsistent input data.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Source(str, Enum):
    RAW_TABLE = "raw_table"
    REPORTED_CI = "reported_ci"
    DIRECT = "direct"


@dataclass(frozen=True)
class EffectMeasure:
    kind: str
    back_transform: str

    def __post_init__(self):
        expected = _MEASURES.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown effect measure {self.kind!r}")
        if self.back_transform != expected:
            raise ValueError(
                f"{self.kind} pairs with back-transform {expected!r}, got {self.back_transform!r}"
            )

    @classmethod
    def of(cls, kind: str) -> "EffectMeasure":
        kind = _ALIASES.get(kind, kind)
        if kind not in _MEASURES:
            raise ValueError(f"unknown effect measure {kind!r}")
        return cls(kind, _MEASURES[kind])

    @property
    def is_ratio(self) -> bool:
        return self.back_transform == "exp"

    def back(self, x):
        """Map analysis-scale values to the reporting scale (exp for log measures)."""
        if self.is_ratio:
            return np.exp(x) if isinstance(x, np.ndarray) else _safe_exp(x)
        return x


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


_MEASURES = {
    "log_relative_risk": "exp",
    "risk_difference": "identity",
    "log_hazard_ratio": "exp",
}
_ALIASES = {"log-rr": "log_relative_risk", "rd": "risk_difference", "log-hr": "log_hazard_ratio"}

LOG_RR = EffectMeasure.of("log_relative_risk")
RISK_DIFF = EffectMeasure.of("risk_difference")
LOG_HR = EffectMeasure.of("log_hazard_ratio")


@dataclass(frozen=True)
class TwoByTwoTable:
    study_id: str
    events_trt: int
    n_trt: int
    events_ctl: int
    n_ctl: int

    def __post_init__(self):
        if self.n_trt < 1 or self.n_ctl < 1:
            raise ValueError(f"{self.study_id}: arm sizes must be >= 1")
        if not 0 <= self.events_trt <= self.n_trt:
            raise ValueError(f"{self.study_id}: events_trt outside [0, n_trt]")
        if not 0 <= self.events_ctl <= self.n_ctl:
            raise ValueError(f"{self.study_id}: events_ctl outside [0, n_ctl]")


@dataclass(frozen=True)
class StudySummary:
    study_id: str
    theta_hat: float
    sigma_hat: float
    source: Source = Source.DIRECT

    def __post_init__(self):
        if not math.isfinite(self.theta_hat):
            raise ValueError(f"{self.study_id}: theta_hat must be finite")
        if not (self.sigma_hat >= 0 and math.isfinite(self.sigma_hat)):
            raise ValueError(f"{self.study_id}: sigma_hat must be finite and >= 0")


@dataclass(frozen=True)
class Excluded:
    study_id: str
    reason: str


@dataclass(frozen=True)
class Dataset:
    studies: tuple[StudySummary, ...]
    measure: EffectMeasure = LOG_RR
    exclusions: tuple[Excluded, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "studies", tuple(self.studies))
        object.__setattr__(self, "exclusions", tuple(self.exclusions))
        if not self.studies:
            raise DataError("no studies left after exclusions")
        ids = [s.study_id for s in self.studies]
        if len(set(ids)) != len(ids):
            raise DataError("study_id values must be unique")

    @classmethod
    def from_arrays(cls, theta, sigma, measure: EffectMeasure = LOG_RR) -> "Dataset":
        theta = np.asarray(theta, dtype=float).ravel()
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), theta.shape)
        studies = [
            StudySummary(f"s{i + 1}", float(t), float(s)) for i, (t, s) in enumerate(zip(theta, sigma))
        ]
        return cls(tuple(studies), measure)

    @property
    def K(self) -> int:
        return len(self.studies)

    @property
    def theta(self) -> np.ndarray:
        return np.array([s.theta_hat for s in self.studies], dtype=float)

    @property
    def sigma(self) -> np.ndarray:
        return np.array([s.sigma_hat for s in self.studies], dtype=float)

    def affine(self, a: float, b: float) -> "Dataset":
        """Dataset with every estimate mapped to ``a*theta + b`` and every SE to ``a*sigma``."""
        if a <= 0:
            raise ValueError("scale factor must be positive")
        studies = tuple(
            StudySummary(s.study_id, a * s.theta_hat + b, a * s.sigma_hat, s.source) for s in self.studies
        )
        return Dataset(studies, self.measure, self.exclusions)


def summarize_table(t: TwoByTwoTable, m: EffectMeasure = LOG_RR) -> StudySummary | Excluded:
    """Effect estimate and standard error from one 2x2 table.

    Studies with no events in either arm are excluded. Otherwise, if any cell
    the estimator depends on is zero, 0.5 is added to all four cells (so each
    arm size grows by one).
    """
    if m.kind not in ("log_relative_risk", "risk_difference"):
        raise ValueError(f"tables cannot be summarized as {m.kind}")
    if t.events_trt == 0 and t.events_ctl == 0:
        return Excluded(t.study_id, "double-zero")

    x1, n1, x0, n0 = float(t.events_trt), float(t.n_trt), float(t.events_ctl), float(t.n_ctl)
    if m.kind == "log_relative_risk":
        needs_correction = x1 == 0 or x0 == 0
    else:
        needs_correction = min(x1, n1 - x1, x0, n0 - x0) == 0
    if needs_correction:
        x1, x0 = x1 + CONTINUITY, x0 + CONTINUITY
        n1, n0 = n1 + 2 * CONTINUITY, n0 + 2 * CONTINUITY

    if m.kind == "log_relative_risk":
        theta = math.log((x1 / n1) / (x0 / n0))
        var = 1.0 / x1 - 1.0 / n1 + 1.0 / x0 - 1.0 / n0
    else:
        p1, p0 = x1 / n1, x0 / n0
        theta = p1 - p0
        var = p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0
    return StudySummary(t.study_id, theta, math.sqrt(max(var, 0.0)), Source.RAW_TABLE)


def summarize_reported(
    est: float,
    lo: float,
    hi: float,
    reported_scale: str,
    m: EffectMeasure = LOG_HR,
    study_id: str = "",
    ci_divisor: float = DEFAULT_CI_DIVISOR,
) -> StudySummary:
    """Convert a reported estimate and 95% interval to ``(theta_hat, sigma_hat)``.

    Ratio-scale inputs are logged first; the standard error is the interval
    length on the analysis scale divided by ``ci_divisor``.
    """
    if not (lo < est < hi):
        raise DataError(f"{study_id or 'study'}: need ci_lower < estimate < ci_upper")
    if reported_scale == "ratio":
        if not m.is_ratio:
            raise DataError(f"{study_id or 'study'}: ratio-scale input requires a log measure")
        if lo <= 0:
            raise DataError(f"{study_id or 'study'}: ratio-scale values must be positive")
        theta, lo_a, hi_a = math.log(est), math.log(lo), math.log(hi)
    elif reported_scale == "analysis":
        theta, lo_a, hi_a = est, lo, hi
    else:
        raise DataError(f"unknown scale {reported_scale!r}")
    return StudySummary(study_id, theta, (hi_a - lo_a) / ci_divisor, Source.REPORTED_CI)


def summarize_tables(tables, m: EffectMeasure = LOG_RR) -> tuple[list[StudySummary], list[Excluded]]:
    studies, excluded = [], []
    for t in tables:
        s = summarize_table(t, m)
        (excluded if isinstance(s, Excluded) else studies).append(s)
    return studies, excluded


def parse_dataset(data: bytes | str, measure: str | EffectMeasure, ci_divisor: float = DEFAULT_CI_DIVISOR) -> Dataset:
    """Parse a CSV file in summary (A) or table (B) schema into a Dataset."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise DataError(f"input is not UTF-8: {exc}") from None
    m = measure if isinstance(measure, EffectMeasure) else EffectMeasure.of(measure)

    reader = csv.reader(io.StringIO(data))
    header = None
    for row in reader:
        if row and any(cell.strip() for cell in row):
            header = tuple(cell.strip() for cell in row)
            break
    if header is None:
        raise DataError("empty input", line=1)
    header_line = reader.line_num
    if header == SCHEMA_SUMMARY:
        kind = "summary"
    elif header == SCHEMA_TABLE:
        kind = "table"
        if m.kind not in ("log_relative_risk", "risk_difference"):
            raise DataError(f"table schema cannot produce {m.kind}", line=header_line)
    else:
        raise DataError(f"unrecognised header {','.join(header)!r}", line=header_line)

    studies, excluded, seen = [], [], set()
    for row in reader:
        line = reader.line_num
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", line=line)
        row = [cell.strip() for cell in row]
        sid = row[0]
        if not sid:
            raise DataError("empty study_id", line=line)
        if sid in seen:
            raise DataError(f"duplicate study_id {sid!r}", line=line)
        seen.add(sid)
        try:
            if kind == "summary":
                est, lo, hi = (_number(v, line) for v in row[1:4])
                s = summarize_reported(est, lo, hi, row[4], m, study_id=sid, ci_divisor=ci_divisor)
            else:
                counts = [_count(v, line) for v in row[1:5]]
                s = summarize_table(TwoByTwoTable(sid, *counts), m)
        except DataError as exc:
            if exc.line is None:
                raise DataError(str(exc), line=line) from None
            raise
        except ValueError as exc:
            raise DataError(str(exc), line=line) from None
        (excluded if isinstance(s, Excluded) else studies).append(s)

    if not studies:
        raise DataError("no studies left after exclusions")
    return Dataset(tuple(studies), m, tuple(excluded))


def _number(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric field {text!r}", line=line) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite field {text!r}", line=line)
    return value


def _count(text: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"expected an integer count, got {text!r}", line=line) from None
