"""Nonparametric confidence intervals for percentiles of the random-effects
distribution in meta-analysis, by inverting weighted conditional sign tests."""

from .comparators import MeanMethodResult, MethodError, dl_interval, sj_interval
from .effects import (
    LOG_HR,
    LOG_RR,
    RISK_DIFF,
    DataError,
    Dataset,
    EffectMeasure,
    Excluded,
    StudySummary,
    TwoByTwoTable,
    parse_dataset,
    summarize_reported,
    summarize_table,
)
from .inversion import InversionConfig, IntervalResult, interval, invert_ci, point_estimate, pvalue
from .nulldist import NullLaw, SignMatrix, make_sign_matrix, null_binomial, null_exact, null_mc, tail_prob
from .teststat import PercentileQuery, normal_cdf, statistic_unweighted, statistic_weighted, weight

__version__ = "0.1.0"
