"""Conditional null laws of the sign statistics.

Under the hypothesis that ``mu0`` is the 100p-th percentile, the weighted
statistic is referred to ``sum_k w_k * D_k`` with independent multipliers
``D_k = +1`` (probability p) or ``-1`` (probability 1-p), the weights held at
their observed values. The law is obtained by exact enumeration of the 2^K
sign vectors for small K and by Monte Carlo over a seeded sign matrix
otherwise. With unit weights the law is that of ``2N - K``, N ~ Binomial(K, p).

Sign matrices are drawn from a PCG64 stream seeded with the given integer: a
single ``random((n_resamples, K))`` call, filled row-major (resample by
resample), thresholded as ``u < p -> +1``. The same integer seed therefore
yields the same matrix on every platform, and matrices for different ``p``
with the same seed are coupled through the shared uniforms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

TIE_TOL = 1e-12
EXACT_THRESHOLD = 20
DEFAULT_RESAMPLES = 100_000


@dataclass(frozen=True)
class NullLaw:
    support: np.ndarray
    probs: np.ndarray
    kind: str
    n_resamples: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        if np.any(np.diff(self.support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.support.tolist(), self.probs.tolist()))


@dataclass(frozen=True)
class SignMatrix:
    entries: np.ndarray  # int8, shape (n_resamples, K)
    p: float
    seed: int

    @property
    def n_resamples(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]


def _merge(values: np.ndarray, probs: np.ndarray, tol: float = TIE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Sort and merge values closer than ``tol`` to their predecessor."""
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    if values.size == 0:
        return values, probs
    new_group = np.concatenate(([True], np.diff(values) > tol))
    starts = np.flatnonzero(new_group)
    return values[starts], np.add.reduceat(probs, starts)


def _sign_patterns(k: int) -> np.ndarray:
    """All 2^k vectors in {-1, +1}^k, shape (2^k, k)."""
    if k == 0:
        return np.zeros((1, 0))
    bits = np.array(list(itertools.product((0, 1), repeat=k)), dtype=float)
    return 2.0 * bits - 1.0


def _pattern_probs(patterns: np.ndarray, p: float) -> np.ndarray:
    n_plus = (patterns > 0).sum(axis=1)
    n_minus = patterns.shape[1] - n_plus
    return p**n_plus * (1.0 - p) ** n_minus


def null_exact(weights, p: float, exact_threshold: int = EXACT_THRESHOLD) -> NullLaw:
    """Law of ``sum_k w_k D_k`` by enumerating every sign vector."""
    w = np.asarray(weights, dtype=float)
    if w.size > exact_threshold:
        raise ValueError(f"K={w.size} exceeds exact_threshold={exact_threshold}; use null_mc")
    patterns = _sign_patterns(w.size)
    support, probs = _merge(patterns @ w, _pattern_probs(patterns, p))
    return NullLaw(support, probs / probs.sum(), "exact_enumeration")


def null_binomial(K: int, p: float) -> NullLaw:
    """Law of ``2N - K`` with N ~ Binomial(K, p)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    n = np.arange(K + 1)
    probs = stats.binom.pmf(n, K, p)
    keep = probs > 0
    probs = probs[keep]
    return NullLaw((2.0 * n - K)[keep], probs / probs.sum(), "binomial_lattice")


def make_sign_matrix(K: int, p: float, n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> SignMatrix:
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((n_resamples, K))
    return SignMatrix(np.where(u < p, 1, -1).astype(np.int8), p, seed)


def null_mc(weights, signs: SignMatrix) -> NullLaw:
    """Empirical law of the row-wise sums ``signs @ weights``."""
    w = np.asarray(weights, dtype=float)
    if w.size != signs.K:
        raise ValueError(f"{w.size} weights for a sign matrix with {signs.K} columns")
    draws = signs.entries.astype(float) @ w
    support, counts = _merge(draws, np.ones_like(draws))
    return NullLaw(support, counts / signs.n_resamples, "monte_carlo", signs.n_resamples, signs.seed)


def tail_prob(law: NullLaw, t: float, side: str) -> float:
    """``Pr(T* <= t)`` (side='le') or ``Pr(T* >= t)`` (side='ge'), ties within 1e-12 included."""
    if side == "le":
        idx = np.searchsorted(law.support, t + TIE_TOL, side="right")
        return 1.0 if idx == law.support.size else float(min(1.0, law.probs[:idx].sum()))
    if side == "ge":
        idx = np.searchsorted(law.support, t - TIE_TOL, side="left")
        return 1.0 if idx == 0 else float(min(1.0, law.probs[idx:].sum()))
    raise ValueError(f"side must be 'le' or 'ge', not {side!r}")


def two_sided(le, ge):
    return np.minimum(1.0, 2.0 * np.minimum(le, ge))


# Vectorised tails over a grid of hypothesised values. Each takes a weight
# matrix W (G, K) and observed statistics t (G,) and returns (le, ge) arrays.


class ExactTails:
    """Exact tails of ``sum_k W[g, k] D_k`` by meet-in-the-middle enumeration.

    The K multipliers are split into two halves; one half's sums are sorted
    with cumulative probabilities and queried for every sum of the other
    half. Agrees with :func:`null_exact` + :func:`tail_prob`.
    """

    kind = "exact_enumeration"

    def __init__(self, K: int, p: float):
        self.K, self.p = K, p
        self.h = K // 2
        self.pa = _sign_patterns(self.h)
        self.pb = _sign_patterns(K - self.h)
        self.proba = _pattern_probs(self.pa, p)
        self.probb = _pattern_probs(self.pb, p)

    def __call__(self, W: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = np.atleast_2d(W)
        t = np.atleast_1d(t)
        le = np.empty(len(t))
        ge = np.empty(len(t))
        for g in range(len(t)):
            a = self.pa @ W[g, : self.h]
            b = self.pb @ W[g, self.h :]
            order = np.argsort(b, kind="stable")
            b = b[order]
            cum = np.concatenate(([0.0], np.cumsum(self.probb[order])))
            below = cum[np.searchsorted(b, t[g] + TIE_TOL - a, side="right")]
            above = 1.0 - cum[np.searchsorted(b, t[g] - TIE_TOL - a, side="left")]
            le[g] = self.proba @ below
            ge[g] = self.proba @ above
        return np.minimum(le, 1.0), np.minimum(ge, 1.0)


class MonteCarloTails:
    """Empirical tails over one fixed sign matrix (common random numbers)."""

    kind = "monte_carlo"
    chunk = 64

    def __init__(self, signs: SignMatrix):
        self.signs = signs
        self._s = signs.entries.astype(float)

    def __call__(self, W: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = np.atleast_2d(W)
        t = np.atleast_1d(t)
        n = self.signs.n_resamples
        le = np.empty(len(t))
        ge = np.empty(len(t))
        for start in range(0, len(t), self.chunk):
            sl = slice(start, start + self.chunk)
            draws = self._s @ W[sl].T
            le[sl] = np.count_nonzero(draws <= t[sl] + TIE_TOL, axis=0) / n
            ge[sl] = np.count_nonzero(draws >= t[sl] - TIE_TOL, axis=0) / n
        return le, ge


class FreshMonteCarloTails:
    """Monte Carlo tails with a new sign matrix for every evaluation.

    Evaluation i draws its matrix from seed ``(seed, i)``; the counter runs
    over evaluations in call order, so results stay reproducible.
    """

    kind = "monte_carlo"

    def __init__(self, K: int, p: float, n_resamples: int, seed: int):
        self.K, self.p, self.n, self.seed = K, p, n_resamples, seed
        self.calls = 0

    def __call__(self, W: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = np.atleast_2d(W)
        t = np.atleast_1d(t)
        le = np.empty(len(t))
        ge = np.empty(len(t))
        for g in range(len(t)):
            sub = int(np.random.SeedSequence([self.seed, self.calls]).generate_state(1, np.uint64)[0])
            self.calls += 1
            s = make_sign_matrix(self.K, self.p, self.n, sub).entries.astype(float)
            draws = s @ W[g]
            le[g] = np.count_nonzero(draws <= t[g] + TIE_TOL) / self.n
            ge[g] = np.count_nonzero(draws >= t[g] - TIE_TOL) / self.n
        return le, ge


class BinomialTails:
    """Tails of the lattice law ``2N - K`` (unit weights); W is ignored."""

    kind = "binomial_lattice"

    def __init__(self, K: int, p: float):
        self.K, self.p = K, p

    def __call__(self, W, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n_le = np.floor((t + TIE_TOL + self.K) / 2.0)
        n_ge = np.ceil((t - TIE_TOL + self.K) / 2.0)
        le = stats.binom.cdf(n_le, self.K, self.p)
        ge = stats.binom.sf(n_ge - 1, self.K, self.p)
        return np.minimum(le, 1.0), np.minimum(ge, 1.0)
