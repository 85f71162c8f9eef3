import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pctmeta.effects import (
    LOG_HR,
    LOG_RR,
    RISK_DIFF,
    DataError,
    Dataset,
    EffectMeasure,
    Excluded,
    Source,
    StudySummary,
    TwoByTwoTable,
    parse_dataset,
    summarize_reported,
    summarize_table,
)

from .oracles import log_rr_delta_se


def table(x1, n1, x0, n0, sid="s"):
    return TwoByTwoTable(sid, x1, n1, x0, n0)


class TestSummarizeTable:
    def test_double_zero_is_excluded(self):
        assert summarize_table(table(0, 10, 0, 10)) == Excluded("s", "double-zero")
        assert summarize_table(table(0, 10, 0, 10), RISK_DIFF) == Excluded("s", "double-zero")

    def test_log_rr_no_correction(self):
        s = summarize_table(table(20, 100, 10, 100))
        assert s.theta_hat == pytest.approx(math.log(2), abs=1e-15)
        assert s.sigma_hat == pytest.approx(math.sqrt(0.13), abs=1e-15)
        assert s.source is Source.RAW_TABLE

    def test_log_rr_se_matches_delta_method(self):
        for cells in [(20, 100, 10, 100), (3, 17, 9, 40), (55, 60, 1, 80)]:
            s = summarize_table(table(*cells))
            assert s.sigma_hat == pytest.approx(log_rr_delta_se(*cells), rel=1e-6)

    def test_log_rr_zero_cell_correction(self):
        s = summarize_table(table(0, 50, 5, 50))
        assert s.theta_hat == pytest.approx(math.log(1 / 11), abs=1e-15)
        expected_var = 1 / 0.5 - 1 / 51 + 1 / 5.5 - 1 / 51
        assert s.sigma_hat == pytest.approx(math.sqrt(expected_var), rel=1e-14)

    def test_log_rr_all_events_needs_no_correction(self):
        # log RR stays finite when a non-event cell is zero
        s = summarize_table(table(10, 10, 5, 10))
        assert s.theta_hat == pytest.approx(math.log(2), abs=1e-15)

    def test_risk_difference(self):
        s = summarize_table(table(20, 100, 10, 100), RISK_DIFF)
        assert s.theta_hat == pytest.approx(0.1, abs=1e-15)
        assert s.sigma_hat == pytest.approx(math.sqrt(0.2 * 0.8 / 100 + 0.1 * 0.9 / 100), rel=1e-14)

    @pytest.mark.parametrize("cells", [(0, 20, 3, 20), (20, 20, 3, 20), (4, 20, 0, 20), (4, 20, 20, 20)])
    def test_risk_difference_corrects_any_zero_cell(self, cells):
        x1, n1, x0, n0 = cells
        s = summarize_table(table(*cells), RISK_DIFF)
        assert s.theta_hat == pytest.approx((x1 + 0.5) / (n1 + 1) - (x0 + 0.5) / (n0 + 1), abs=1e-15)

    def test_hazard_ratio_tables_rejected(self):
        with pytest.raises(ValueError):
            summarize_table(table(1, 10, 2, 10), LOG_HR)

    @given(
        st.integers(1, 200), st.integers(1, 200), st.integers(1, 200), st.integers(1, 200),
    )
    def test_no_zero_means_exact_ratio(self, x1, extra1, x0, extra0):
        n1, n0 = x1 + extra1, x0 + extra0
        s = summarize_table(table(x1, n1, x0, n0))
        assert math.exp(s.theta_hat) == pytest.approx((x1 / n1) / (x0 / n0), rel=1e-13)

    @given(st.integers(0, 30), st.integers(1, 30), st.integers(0, 30), st.integers(1, 30))
    def test_correction_iff_event_cell_zero(self, x1, extra1, x0, extra0):
        n1, n0 = x1 + extra1, x0 + extra0
        s = summarize_table(table(x1, n1, x0, n0))
        if x1 == 0 and x0 == 0:
            assert isinstance(s, Excluded)
        elif x1 == 0 or x0 == 0:
            assert s.theta_hat == pytest.approx(math.log(((x1 + 0.5) / (n1 + 1)) / ((x0 + 0.5) / (n0 + 1))))
        else:
            assert s.theta_hat == pytest.approx(math.log((x1 / n1) / (x0 / n0)))

    def test_invalid_table(self):
        with pytest.raises(ValueError):
            TwoByTwoTable("x", 11, 10, 1, 10)
        with pytest.raises(ValueError):
            TwoByTwoTable("x", 1, 0, 1, 10)


class TestSummarizeReported:
    def test_degenerate_bounds_rejected(self):
        with pytest.raises(DataError):
            summarize_reported(1.0, 1.0, 1.0, "ratio")

    def test_ratio_scale(self):
        s = summarize_reported(1.10, 0.90, 1.34, "ratio")
        assert s.theta_hat == pytest.approx(0.09531017980432493, abs=1e-15)
        # (log 1.34 - log 0.90) / 4, evaluated independently
        assert s.sigma_hat == pytest.approx(0.09950753240516158, abs=1e-15)
        assert s.source is Source.REPORTED_CI

    def test_analysis_scale(self):
        s = summarize_reported(0.0, -0.4, 0.4, "analysis", RISK_DIFF)
        assert (s.theta_hat, s.sigma_hat) == (0.0, 0.2)

    def test_divisor(self):
        s = summarize_reported(0.0, -0.392, 0.392, "analysis", ci_divisor=3.92)
        assert s.sigma_hat == pytest.approx(0.2)

    def test_ratio_needs_positive_values_and_log_measure(self):
        with pytest.raises(DataError):
            summarize_reported(1.0, -0.5, 2.0, "ratio")
        with pytest.raises(DataError):
            summarize_reported(0.1, 0.05, 0.2, "ratio", RISK_DIFF)
        with pytest.raises(DataError):
            summarize_reported(0.1, 0.05, 0.2, "percent")

    @given(st.floats(0.01, 100), st.floats(1.01, 5), st.floats(1.01, 5))
    def test_round_trip(self, est, down, up):
        s = summarize_reported(est, est / down, est * up, "ratio")
        assert float(f"{LOG_RR.back(s.theta_hat):.10g}") == float(f"{est:.10g}")


class TestModel:
    def test_measure_aliases(self):
        assert EffectMeasure.of("log-rr") == LOG_RR
        assert EffectMeasure.of("rd") == RISK_DIFF
        assert EffectMeasure.of("log-hr") == LOG_HR
        assert LOG_RR.is_ratio and not RISK_DIFF.is_ratio
        with pytest.raises(ValueError):
            EffectMeasure("log_relative_risk", "identity")
        with pytest.raises(ValueError):
            EffectMeasure.of("odds")

    def test_back_transform(self):
        assert LOG_HR.back(0.0) == 1.0
        assert RISK_DIFF.back(0.25) == 0.25
        assert LOG_RR.back(math.inf) == math.inf
        assert LOG_RR.back(-math.inf) == 0.0

    def test_study_summary_validation(self):
        with pytest.raises(ValueError):
            StudySummary("a", 0.0, -1.0)
        with pytest.raises(ValueError):
            StudySummary("a", math.nan, 1.0)

    def test_dataset_validation(self):
        with pytest.raises(DataError):
            Dataset(())
        with pytest.raises(DataError):
            Dataset((StudySummary("a", 0, 1), StudySummary("a", 1, 1)))

    def test_affine(self):
        d = Dataset.from_arrays([0.0, 1.0], [0.5, 0.25]).affine(2.0, 3.0)
        assert d.theta.tolist() == [3.0, 5.0]
        assert d.sigma.tolist() == [1.0, 0.5]
        with pytest.raises(ValueError):
            d.affine(-1.0, 0.0)


SUMMARY_CSV = """study_id,estimate,ci_lower,ci_upper,scale
a,1.10,0.90,1.34,ratio
b,0.80,0.60,1.07,ratio
c,1.30,1.00,1.69,ratio
"""

TABLE_CSV = """study_id,events_trt,n_trt,events_ctl,n_ctl
t1,20,100,10,100
t2,0,40,0,40
t3,0,50,5,50
"""


class TestParseDataset:
    def test_summary_schema(self):
        d = parse_dataset(SUMMARY_CSV, "log-hr")
        assert d.K == 3
        assert [s.study_id for s in d.studies] == ["a", "b", "c"]
        assert d.measure == LOG_HR

    def test_table_schema_excludes_double_zero(self):
        d = parse_dataset(TABLE_CSV.encode(), "log-rr")
        assert d.K == 2
        assert d.exclusions == (Excluded("t2", "double-zero"),)
        assert d.theta[0] == pytest.approx(math.log(2))

    def test_bom_and_blank_lines(self):
        d = parse_dataset(("﻿" + SUMMARY_CSV + "\n\n").encode(), "log-hr")
        assert d.K == 3

    def test_duplicate_id(self):
        with pytest.raises(DataError, match="line 5.*duplicate"):
            parse_dataset(SUMMARY_CSV + "a,1.0,0.5,2.0,ratio\n", "log-hr")

    def test_bad_header(self):
        with pytest.raises(DataError, match="line 1"):
            parse_dataset("id,est\n1,2\n", "log-rr")

    def test_non_numeric_field_reports_line(self):
        bad = SUMMARY_CSV.replace("0.80", "abc")
        with pytest.raises(DataError) as exc:
            parse_dataset(bad, "log-hr")
        assert exc.value.line == 3

    def test_invalid_counts_report_line(self):
        with pytest.raises(DataError) as exc:
            parse_dataset(TABLE_CSV + "t4,12,10,1,10\n", "log-rr")
        assert exc.value.line == 5

    def test_table_schema_cannot_give_hazard_ratios(self):
        with pytest.raises(DataError):
            parse_dataset(TABLE_CSV, "log-hr")

    def test_everything_excluded(self):
        with pytest.raises(DataError, match="no studies"):
            parse_dataset("study_id,events_trt,n_trt,events_ctl,n_ctl\nx,0,5,0,5\n", "log-rr")

    def test_empty(self):
        with pytest.raises(DataError):
            parse_dataset(b"", "log-rr")

    def test_wrong_field_count(self):
        with pytest.raises(DataError, match="line 2"):
            parse_dataset("study_id,estimate,ci_lower,ci_upper,scale\na,1,0.5\n", "log-hr")
