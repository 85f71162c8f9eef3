"""P-values, test-inversion confidence intervals and point estimates.

The interval for the 100p-th percentile is the closure of the set of
hypothesised values ``mu0`` whose p-value exceeds ``alpha``. The set is
located on a regular grid spanning ``[min theta - 6 max sigma, max theta + 6
max sigma]`` and each boundary is refined by bisection between the last
accepted and the first rejected grid point. Bisection runs to floating-point
resolution, which makes the endpoints an affine-equivariant function of the
data.

For Monte Carlo nulls one sign matrix is drawn per interval and reused at every
``mu0`` (common random numbers), so the p-value curve is a deterministic
function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nulldist
from .effects import Dataset
from .teststat import PercentileQuery, centered_coverage

METHODS = ("weighted", "unweighted", "dl", "sj")
TEST_METHODS = ("weighted", "unweighted")
BOUNDS = ("two-sided", "lower", "upper")
DEFAULT_SEED = 20090101


@dataclass(frozen=True)
class InversionConfig:
    grid_size: int = 512
    range_mult: float = 6.0
    seed: int = DEFAULT_SEED
    n_resamples: int = nulldist.DEFAULT_RESAMPLES
    exact_threshold: int = nulldist.EXACT_THRESHOLD
    crn: bool = True
    bound: str = "two-sided"

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.range_mult <= 0:
            raise ValueError("range_mult must be positive")
        if self.n_resamples < 1:
            raise ValueError("n_resamples must be >= 1")
        if self.bound not in BOUNDS:
            raise ValueError(f"bound must be one of {BOUNDS}")


@dataclass(frozen=True)
class Diagnostics:
    grid_points: int = 0
    refinements: int = 0
    non_interval_flag: bool = False
    empty_flag: bool = False
    seed: int | None = None
    null_kind: str = ""


@dataclass(frozen=True)
class IntervalResult:
    p: float | None
    level: float
    lower: float
    upper: float
    lower_bt: float
    upper_bt: float
    point: float
    point_bt: float
    method: str
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(out.pop("diagnostics"))
        return out


@dataclass(frozen=True)
class PValueCurve:
    mu_grid: np.ndarray
    pvals: np.ndarray


class PValueEngine:
    """P-values of one test (dataset, p, method) at arbitrary ``mu0`` values."""

    def __init__(self, d: Dataset, p: float, method: str = "weighted",
                 config: InversionConfig | None = None, signs: nulldist.SignMatrix | None = None):
        if method not in TEST_METHODS:
            raise ValueError(f"method must be one of {TEST_METHODS}, not {method!r}")
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        self.config = config or InversionConfig()
        self.theta = d.theta
        self.sigma = d.sigma
        self.K, self.p, self.method = d.K, p, method
        self.seed = None
        if method == "unweighted":
            self.tails = nulldist.BinomialTails(self.K, p)
        elif self.K <= self.config.exact_threshold:
            self.tails = nulldist.ExactTails(self.K, p)
        elif not self.config.crn:
            self.seed = self.config.seed
            self.tails = nulldist.FreshMonteCarloTails(self.K, p, self.config.n_resamples, self.config.seed)
        else:
            if signs is None:
                signs = nulldist.make_sign_matrix(self.K, p, self.config.n_resamples, self.config.seed)
            elif signs.K != self.K:
                raise ValueError(f"sign matrix has {signs.K} columns for K={self.K}")
            self.seed = signs.seed
            self.tails = nulldist.MonteCarloTails(signs)
        self.evaluations = 0

    @property
    def piecewise(self) -> bool:
        """True when the observed statistic jumps at some study estimates."""
        return self.method == "unweighted" or bool(np.any(self.sigma == 0))

    def observed(self, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if self.method == "unweighted":
            t = (self.theta < mu[:, None]).sum(1) - (self.theta > mu[:, None]).sum(1)
            return None, t.astype(float)
        c = centered_coverage(mu, self.theta, self.sigma)
        return np.abs(c), c.sum(axis=1)

    def pvalues(self, mu) -> np.ndarray:
        W, t = self.observed(mu)
        le, ge = self.tails(W, t)
        self.evaluations += len(t)
        if self.config.bound == "lower":
            return le
        if self.config.bound == "upper":
            return ge
        return nulldist.two_sided(le, ge)


def pvalue(d: Dataset, q: PercentileQuery, method: str = "weighted",
           signs: nulldist.SignMatrix | None = None, config: InversionConfig | None = None) -> float:
    """Equal-tailed p-value ``min(1, 2 min(Pr(T* <= t), Pr(T* >= t)))`` at ``q.mu0``."""
    return float(PValueEngine(d, q.p, method, config, signs).pvalues([q.mu0])[0])


def scan_range(d: Dataset, range_mult: float = 6.0) -> tuple[float, float]:
    theta, sigma = d.theta, d.sigma
    pad = range_mult * sigma.max()
    if pad == 0:
        # all SEs zero: extend by the data spread so both outer regions are scanned
        pad = theta.max() - theta.min() or 1.0
    return theta.min() - pad, theta.max() + pad


def scan_grid(d: Dataset, config: InversionConfig, piecewise: bool) -> np.ndarray:
    lo, hi = scan_range(d, config.range_mult)
    grid = np.linspace(lo, hi, config.grid_size)
    if piecewise:
        # every piece of a step-function p-value curve gets at least one point
        th = np.unique(d.theta)
        grid = np.unique(np.concatenate((grid, th, 0.5 * (th[:-1] + th[1:]))))
    return grid


def pvalue_curve(d: Dataset, p: float, method: str = "weighted",
                 config: InversionConfig | None = None) -> PValueCurve:
    engine = PValueEngine(d, p, method, config)
    grid = scan_grid(d, engine.config, engine.piecewise)
    return PValueCurve(grid, engine.pvalues(grid))


def _bisect(accept, rejected: float, accepted: float, span: float) -> tuple[float, int]:
    # stop at float resolution relative to the scan span (not to the endpoint,
    # which may sit at 0 and drag the search through subnormals)
    floor = 4 * np.finfo(float).eps * span
    steps = 0
    while True:
        mid = 0.5 * (rejected + accepted)
        if mid == rejected or mid == accepted or abs(accepted - rejected) <= floor:
            return accepted, steps
        steps += 1
        if accept(mid):
            accepted = mid
        else:
            rejected = mid


def invert_ci(d: Dataset, p: float = 0.5, alpha: float = 0.05, method: str = "weighted",
              config: InversionConfig | None = None, signs: nulldist.SignMatrix | None = None) -> IntervalResult:
    """Confidence interval for the 100p-th percentile by inverting the sign test."""
    PercentileQuery(p, alpha)
    engine = PValueEngine(d, p, method, config, signs)
    cfg = engine.config
    grid = scan_grid(d, cfg, engine.piecewise)
    pv = engine.pvalues(grid)
    acc = pv > alpha

    def accept(mu: float) -> bool:
        return bool(engine.pvalues([mu])[0] > alpha)

    point = point_estimate(d, p, method)
    if not acc.any():
        at = float(grid[int(np.argmax(pv))])
        diag = Diagnostics(len(grid), 0, False, True, engine.seed, engine.tails.kind)
        return _result(d, p, alpha, at, at, point, method, diag)

    idx = np.flatnonzero(acc)
    i_lo, i_hi = int(idx[0]), int(idx[-1])
    non_interval = not bool(acc[i_lo : i_hi + 1].all())
    steps = 0
    span = grid[-1] - grid[0]
    if i_lo == 0:
        lower = -math.inf
    else:
        lower, n = _bisect(accept, grid[i_lo - 1], grid[i_lo], span)
        steps += n
    if i_hi == len(grid) - 1:
        upper = math.inf
    else:
        upper, n = _bisect(accept, grid[i_hi + 1], grid[i_hi], span)
        steps += n
    if engine.piecewise:
        tol = 1e-9 * span
        lower, upper = _snap(lower, d.theta, tol), _snap(upper, d.theta, tol)
    diag = Diagnostics(len(grid), steps, non_interval, False, engine.seed, engine.tails.kind)
    return _result(d, p, alpha, float(lower), float(upper), point, method, diag)


def _snap(x: float, theta: np.ndarray, tol: float) -> float:
    if not math.isfinite(x):
        return x
    nearest = theta[np.argmin(np.abs(theta - x))]
    return float(nearest) if abs(nearest - x) <= tol else x


def _result(d, p, alpha, lower, upper, point, method, diag) -> IntervalResult:
    m = d.measure
    return IntervalResult(
        p=p, level=1.0 - alpha, lower=lower, upper=upper,
        lower_bt=float(m.back(lower)), upper_bt=float(m.back(upper)),
        point=float(point), point_bt=float(m.back(point)),
        method=method, diagnostics=diag,
    )


def sample_percentile(values, p: float) -> float:
    """Order statistic of rank ceil(pK); the even-K median averages the two central values."""
    x = np.sort(np.asarray(values, dtype=float))
    K = x.size
    if p == 0.5 and K % 2 == 0:
        return float(0.5 * (x[K // 2 - 1] + x[K // 2]))
    rank = min(K, max(1, math.ceil(p * K - 1e-9)))
    return float(x[rank - 1])


def point_estimate(d: Dataset, p: float = 0.5, method: str = "weighted") -> float:
    """Point estimate of the 100p-th percentile.

    The weighted estimate is the root in ``mu`` of
    ``sum_k c_k(mu) - (2p - 1) * sum_k |c_k(mu)|`` with
    ``c_k(mu) = Phi((mu - theta_k)/sigma_k) - 1/2``, i.e. the value at which
    the observed weighted statistic equals its null mean. The left side is
    non-decreasing in ``mu`` and changes sign on ``[min theta, max theta]``.
    """
    if method == "unweighted":
        return sample_percentile(d.theta, p)
    if method != "weighted":
        raise ValueError(f"no percentile point estimate for method {method!r}")
    theta, sigma = d.theta, d.sigma
    if np.all(sigma == 0):
        return sample_percentile(theta, p)

    def f(mu: float) -> float:
        c = centered_coverage(mu, theta, sigma)
        return float(c.sum() - (2 * p - 1) * np.abs(c).sum())

    lo, hi = float(theta.min()), float(theta.max())
    if lo == hi:
        return lo
    floor = 4 * np.finfo(float).eps * (hi - lo)
    while hi - lo > floor:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi if abs(f(hi)) <= abs(f(lo)) else lo


def interval(d: Dataset, p: float | None, alpha: float, method: str,
             config: InversionConfig | None = None) -> IntervalResult:
    """Dispatch to the percentile tests or to the DL/SJ mean intervals."""
    if method in TEST_METHODS:
        return invert_ci(d, p, alpha, method, config)
    if method in ("dl", "sj"):
        from .comparators import dl_interval, sj_interval

        r = (dl_interval if method == "dl" else sj_interval)(d, alpha)
        return _result(d, None, alpha, r.lower, r.upper, r.mean_hat, method, Diagnostics())
    raise ValueError(f"unknown method {method!r}")
