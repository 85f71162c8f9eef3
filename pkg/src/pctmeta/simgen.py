"""Random-effects scenarios for coverage experiments on 2x2 tables.

Each scenario draws per-study event rates ``(P0_k, P1_k)`` (control,
treatment) and then binomial event counts. The true effect is
``log(P1/P0)`` for log relative risk or ``P1 - P0`` for risk difference.

Variate order for one meta-analysis of K studies, from a single
``numpy.random.default_rng(seed)`` stream:

1. latent rates for all K studies
   (logit-normal: ``standard_normal((K, 2))`` mapped through ``eta + L z`` with
   ``L`` the lower Cholesky factor of the covariance;
   bivariate beta: ``standard_gamma(shapes, size=(K, 3))``);
2. treatment-arm event counts for all K studies;
3. control-arm event counts for all K studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .effects import LOG_RR, EffectMeasure, TwoByTwoTable

# Default bivariate logit-normal (control, treatment) for low event-rate trials.
DEFAULT_ETA = (-3.56, -2.86)
DEFAULT_COV = ((0.90, 0.62), (0.62, 1.10))
# Olkin-Liu shapes, in the order (control numerator, treatment numerator, shared).
DEFAULT_SHAPES = (2.0, 8.0, 10.0)
DEFAULT_FIXED_RATES = (0.1, 0.2)

DEFAULT_N_PER_ARM = 200
ORACLE_DRAWS = 10_000_000
ORACLE_SEED = 271828
_ORACLE_CHUNK = 1_000_000


@dataclass(frozen=True)
class Scenario:
    kind: str
    eta: tuple[float, float] = DEFAULT_ETA
    cov: tuple[tuple[float, float], tuple[float, float]] = DEFAULT_COV
    shapes: tuple[float, float, float] = DEFAULT_SHAPES
    rates: tuple[float, float] = DEFAULT_FIXED_RATES
    n_per_arm: int | tuple[int, ...] = DEFAULT_N_PER_ARM
    measure: EffectMeasure = field(default=LOG_RR)

    def __post_init__(self):
        if self.kind not in ("logit_normal", "bivariate_beta", "fixed"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        object.__setattr__(self, "eta", tuple(float(v) for v in self.eta))
        object.__setattr__(self, "cov", tuple(tuple(float(v) for v in row) for row in self.cov))
        object.__setattr__(self, "shapes", tuple(float(v) for v in self.shapes))
        object.__setattr__(self, "rates", tuple(float(v) for v in self.rates))
        if not isinstance(self.n_per_arm, int):
            object.__setattr__(self, "n_per_arm", tuple(int(v) for v in self.n_per_arm))
        if self.measure.kind not in ("log_relative_risk", "risk_difference"):
            raise ValueError("scenarios generate log relative risks or risk differences")
        if self.kind == "logit_normal":
            _cov_factor(self.cov)
        elif self.kind == "bivariate_beta":
            if len(self.shapes) != 3 or min(self.shapes) <= 0:
                raise ValueError("bivariate beta needs three positive gamma shapes")
        elif not all(0 < r < 1 for r in self.rates):
            raise ValueError("fixed event rates must lie in (0, 1)")
        sizes = (self.n_per_arm,) if isinstance(self.n_per_arm, int) else self.n_per_arm
        if not sizes or min(sizes) < 2:
            raise ValueError("per-arm sample sizes must be >= 2")

    def sample_sizes(self, K: int) -> np.ndarray:
        if isinstance(self.n_per_arm, int):
            return np.full(K, self.n_per_arm)
        if len(self.n_per_arm) < K:
            raise ValueError(f"{len(self.n_per_arm)} sample sizes given for K={K}")
        return np.array(self.n_per_arm[:K])

    def effect(self, p0, p1):
        if self.measure.kind == "log_relative_risk":
            return np.log(p1) - np.log(p0)
        return p1 - p0


@dataclass(frozen=True)
class SimulatedMeta:
    tables: tuple[TwoByTwoTable, ...]
    true_thetas: np.ndarray


def _cov_factor(cov) -> np.ndarray:
    c = np.asarray(cov, dtype=float)
    if c.shape != (2, 2) or not np.allclose(c, c.T):
        raise ValueError("covariance must be a symmetric 2x2 matrix")
    if not np.any(c):
        return np.zeros((2, 2))
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(c)
        if vals.min() < -1e-12 * max(1.0, vals.max()):
            raise ValueError("covariance is not positive semi-definite") from None
        return vecs * np.sqrt(np.clip(vals, 0, None))


def draw_rates(scenario: Scenario, K: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Latent (control, treatment) event rates for K studies."""
    if scenario.kind == "logit_normal":
        z = rng.standard_normal((K, 2))
        logits = np.asarray(scenario.eta) + z @ _cov_factor(scenario.cov).T
        return expit(logits[:, 0]), expit(logits[:, 1])
    if scenario.kind == "bivariate_beta":
        g = rng.standard_gamma(scenario.shapes, size=(K, 3))
        return g[:, 0] / (g[:, 0] + g[:, 2]), g[:, 1] / (g[:, 1] + g[:, 2])
    p0, p1 = scenario.rates
    return np.full(K, p0), np.full(K, p1)


def simulate(scenario: Scenario, K: int, seed) -> SimulatedMeta:
    """One simulated meta-analysis of K two-arm studies."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    p0, p1 = draw_rates(scenario, K, rng)
    n = scenario.sample_sizes(K)
    x1 = rng.binomial(n, p1)
    x0 = rng.binomial(n, p0)
    tables = tuple(
        TwoByTwoTable(f"sim{k + 1}", int(x1[k]), int(n[k]), int(x0[k]), int(n[k])) for k in range(K)
    )
    return SimulatedMeta(tables, scenario.effect(p0, p1))


def _require(scenario: Scenario, kind: str) -> None:
    if scenario.kind != kind:
        raise ValueError(f"expected a {kind} scenario, got {scenario.kind}")


def draw_logit_normal(K: int, scenario: Scenario, seed) -> SimulatedMeta:
    _require(scenario, "logit_normal")
    return simulate(scenario, K, seed)


def draw_bivariate_beta(K: int, scenario: Scenario, seed) -> SimulatedMeta:
    _require(scenario, "bivariate_beta")
    return simulate(scenario, K, seed)


def draw_fixed(K: int, scenario: Scenario, seed) -> SimulatedMeta:
    _require(scenario, "fixed")
    return simulate(scenario, K, seed)


def _oracle_key(scenario: Scenario) -> tuple:
    return (scenario.kind, scenario.eta, scenario.cov, scenario.shapes, scenario.rates, scenario.measure.kind)


@lru_cache(maxsize=4)
def _oracle_sample(key: tuple, draws: int, seed: int) -> np.ndarray:
    kind, eta, cov, shapes, rates, measure = key
    scenario = Scenario(kind, eta, cov, shapes, rates, measure=EffectMeasure.of(measure))
    rng = np.random.default_rng(seed)
    parts = []
    for start in range(0, draws, _ORACLE_CHUNK):
        p0, p1 = draw_rates(scenario, min(_ORACLE_CHUNK, draws - start), rng)
        parts.append(scenario.effect(p0, p1))
    out = np.sort(np.concatenate(parts))
    out.flags.writeable = False
    return out


def true_percentile(scenario: Scenario, p: float, oracle_draws: int = ORACLE_DRAWS,
                    oracle_seed: int = ORACLE_SEED) -> float:
    """100p-th percentile of the random-effects distribution.

    Exact for the fixed scenario; otherwise the empirical quantile of one
    cached Monte Carlo sample of ``oracle_draws`` effects.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if scenario.kind == "fixed":
        return float(scenario.effect(np.float64(scenario.rates[0]), np.float64(scenario.rates[1])))
    sample = _oracle_sample(_oracle_key(scenario), oracle_draws, oracle_seed)
    return float(np.quantile(sample, p))


def true_mean(scenario: Scenario, oracle_draws: int = ORACLE_DRAWS, oracle_seed: int = ORACLE_SEED) -> float:
    if scenario.kind == "fixed":
        return true_percentile(scenario, 0.5)
    return float(_oracle_sample(_oracle_key(scenario), oracle_draws, oracle_seed).mean())


def scenario_from_mapping(cfg: dict) -> Scenario:
    """Build a Scenario from a parsed config mapping (see README for keys)."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind is None:
        raise ValueError("scenario config needs a 'kind'")
    kw = {}
    if "eta" in cfg:
        kw["eta"] = tuple(cfg["eta"])
    if "sigma" in cfg:
        s = cfg["sigma"]
        if len(s) == 3 and not isinstance(s[0], (list, tuple)):
            s = ((s[0], s[1]), (s[1], s[2]))
        kw["cov"] = tuple(tuple(r) for r in s)
    if "shapes" in cfg:
        kw["shapes"] = tuple(cfg["shapes"])
    if "rates" in cfg:
        kw["rates"] = tuple(cfg["rates"])
    if "n_per_arm" in cfg:
        n = cfg["n_per_arm"]
        kw["n_per_arm"] = int(n) if isinstance(n, (int, float)) else tuple(n)
    if "measure" in cfg:
        kw["measure"] = EffectMeasure.of(cfg["measure"])
    return Scenario(str(kind), **kw)

