"""DerSimonian-Laird and Sidik-Jonkman intervals for the random-effects mean."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .effects import Dataset

SJ_TAU2_FLOOR = 1e-10


class MethodError(ValueError):
    """A method cannot be applied to the given data."""


@dataclass(frozen=True)
class MeanMethodResult:
    mean_hat: float
    tau2_hat: float
    lower: float
    upper: float
    method: str


def dl_interval(d: Dataset, alpha: float = 0.05) -> MeanMethodResult:
    """DerSimonian-Laird moment estimate of tau^2 with a normal-quantile interval."""
    if d.K < 2:
        raise MethodError("DL requires K >= 2 studies")
    y, s = d.theta, d.sigma
    if np.any(s <= 0):
        raise MethodError("DL requires every standard error to be positive")
    w = 1.0 / s**2
    sw = w.sum()
    fixed = (w * y).sum() / sw
    q = (w * (y - fixed) ** 2).sum()
    c = sw - (w**2).sum() / sw
    tau2 = max(0.0, (q - (d.K - 1)) / c)
    ws = 1.0 / (s**2 + tau2)
    mean = float((ws * y).sum() / ws.sum())
    half = stats.norm.ppf(1 - alpha / 2) / np.sqrt(ws.sum())
    return MeanMethodResult(mean, float(tau2), mean - half, mean + half, "dl")


def sj_interval(d: Dataset, alpha: float = 0.05) -> MeanMethodResult:
    """Sidik-Jonkman two-step tau^2 with a t_{K-1} interval.

    Starting from the crude ``tau0^2 = mean((y - ybar)^2)``, studies get
    weights ``1/v_k`` with ``v_k = s_k^2/tau0^2 + 1``. The variance estimate is
    ``sum (1/v_k)(y_k - ybar_v)^2 / (K - 1)`` and the interval is
    ``ybar_v +- t * sqrt(tau2_SJ / sum(1/v_k))``.
    """
    if d.K < 2:
        raise MethodError("SJ requires K >= 2 studies")
    y, s = d.theta, d.sigma
    K = d.K
    tau0 = ((y - y.mean()) ** 2).sum() / K
    tau0 = max(tau0, SJ_TAU2_FLOOR)
    u = 1.0 / (s**2 / tau0 + 1.0)
    mean = float((u * y).sum() / u.sum())
    tau2 = float((u * (y - mean) ** 2).sum() / (K - 1))
    half = stats.t.ppf(1 - alpha / 2, K - 1) * np.sqrt(tau2 / u.sum())
    return MeanMethodResult(mean, tau2, mean - half, mean + half, "sj")
