"""Observed sign statistics for a hypothesised percentile.

For a hypothesised value ``mu0`` each study contributes the sign
``B_k = I(theta_k < mu0) - I(theta_k > mu0)``. The unweighted statistic sums
the signs; the weighted statistic multiplies each sign by
``|Phi((mu0 - theta_k) / sigma_k) - 1/2|``, the estimated coverage of
``(-inf, mu0)`` for the study's true effect, centred at one half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .effects import Dataset

_SQRT1_2 = math.sqrt(0.5)


def normal_cdf(z):
    """Standard normal distribution function (scalar or array)."""
    out = special.ndtr(z)
    return float(out) if np.ndim(out) == 0 else out


def centered_coverage(mu0, theta, sigma) -> np.ndarray:
    """``Phi((mu0 - theta) / sigma) - 1/2`` broadcast over ``mu0``.

    ``mu0`` of shape (G,) against studies of shape (K,) gives (G, K). A zero
    standard error is treated as the step-function limit: +-1/2 off the
    estimate, 0 on it. The half-erf form keeps the result exactly odd in
    ``mu0 - theta``.
    """
    mu0 = np.asarray(mu0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = mu0[..., None] - theta if mu0.ndim else mu0 - theta
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = diff / sigma
    out = 0.5 * special.erf(z * _SQRT1_2)
    zero = sigma == 0
    if np.any(zero):
        out = np.where(zero, 0.5 * np.sign(diff), out)
    return out


def weight(theta_hat: float, sigma_hat: float, mu0: float) -> float:
    """Weight ``|Phi((mu0 - theta_hat)/sigma_hat) - 1/2|`` of one study, in [0, 1/2]."""
    if sigma_hat < 0:
        raise ValueError("sigma_hat must be >= 0")
    return abs(float(centered_coverage(mu0, theta_hat, sigma_hat)))


@dataclass(frozen=True)
class PercentileQuery:
    p: float
    alpha: float
    mu0: float = 0.0

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("percentile level p must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class StatisticValue:
    value: float
    per_study_weights: np.ndarray
    per_study_signs: np.ndarray


def signs(theta, mu0: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return (theta < mu0).astype(int) - (theta > mu0).astype(int)


def statistic_weighted(d: Dataset, mu0: float) -> StatisticValue:
    """Weighted sign statistic; equals ``sum_k (Phi(z_k) - 1/2)``."""
    c = centered_coverage(float(mu0), d.theta, d.sigma)
    b = signs(d.theta, mu0)
    w = np.abs(c)
    return StatisticValue(float(np.sum(w * b)), w, b)


def statistic_unweighted(d: Dataset, mu0: float) -> StatisticValue:
    """Plain sign statistic ``#{theta < mu0} - #{theta > mu0}``."""
    b = signs(d.theta, mu0)
    return StatisticValue(float(b.sum()), np.ones(d.K), b)
