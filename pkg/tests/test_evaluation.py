from __future__ import annotations

import csv
import json
import math
import random
from datetime import date

import mpmath
import pytest
from scipy import stats

from trendvote.evaluation import (
    ConfusionCounts,
    MetricsRow,
    RunResult,
    betainc_regularized,
    compare_predictions,
    confusion,
    metrics,
    paired_ttest,
    report,
    student_t_sf,
)
from trendvote.labels import TrendLabel
from trendvote.pipeline import DayPrediction, Method, VoteTally

UP, DOWN = TrendLabel.UP, TrendLabel.DOWN


class TestConfusion:
    def test_counts(self):
        c = confusion([UP, UP, DOWN, DOWN], [UP, DOWN, UP, DOWN])
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)

    def test_positive_class_down(self):
        c = confusion([UP, DOWN, DOWN], [UP, UP, DOWN], positive_class=DOWN)
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 0, 1)

    def test_empty(self):
        with pytest.raises(ValueError):
            confusion([], [])

    def test_misaligned_dates(self):
        d1, d2 = date(2020, 1, 1), date(2020, 1, 2)
        with pytest.raises(ValueError, match="misaligned"):
            confusion([(d1, UP), (d2, UP)], [(d2, UP), (d1, UP)])


class TestMetrics:
    def test_all_negative_predictions(self):
        row = metrics(confusion([DOWN, DOWN], [UP, DOWN]))
        assert row.precision == 0.0 and row.f1 == 0.0 and row.zero_division

    def test_perfect(self):
        row = metrics(ConfusionCounts(3, 0, 2, 0))
        assert (row.acc, row.precision, row.recall, row.f1) == (1.0, 1.0, 1.0, 1.0)
        assert not row.zero_division


class TestStudentT:
    @pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 29, 100, 1000])
    @pytest.mark.parametrize("t", [0.0, 0.1, 0.7, 1.5, 2.2, 4.0, 12.0])
    def test_against_scipy(self, t, df):
        assert student_t_sf(t, df) == pytest.approx(stats.t.sf(t, df), rel=1e-9, abs=1e-14)
        assert student_t_sf(-t, df) == pytest.approx(stats.t.sf(-t, df), rel=1e-9, abs=1e-14)

    @pytest.mark.parametrize("a, b, x", [(0.5, 0.5, 0.3), (2.0, 0.5, 0.9), (15.0, 0.5, 0.99), (3.0, 7.0, 0.2)])
    def test_betainc_against_quadrature(self, a, b, x):
        ref = mpmath.betainc(a, b, 0, x, regularized=True)
        assert betainc_regularized(a, b, x) == pytest.approx(float(ref), rel=1e-10)

    def test_infinite_t(self):
        assert student_t_sf(math.inf, 5) == 0.0
        assert student_t_sf(-math.inf, 5) == 1.0


class TestPairedTTest:
    def test_against_scipy_random(self):
        rng = random.Random(3)
        for _ in range(50):
            n = rng.randint(5, 200)
            a = [rng.randint(0, 1) for _ in range(n)]
            b = [rng.randint(0, 1) for _ in range(n)]
            if a == b:
                continue
            ref = stats.ttest_rel(a, b)
            res = paired_ttest(a, b)
            assert res.t_statistic == pytest.approx(ref.statistic, rel=1e-10)
            assert res.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-15)

    def test_identical_samples(self):
        res = paired_ttest([1, 0, 1], [1, 0, 1])
        assert (res.t_statistic, res.p_value, res.degenerate) == (0.0, 1.0, True)

    def test_constant_nonzero_difference(self):
        res = paired_ttest([1, 1, 1], [0, 0, 0])
        assert res.t_statistic == math.inf and res.p_value == 0.0 and res.degenerate

    def test_needs_two_pairs(self):
        with pytest.raises(ValueError):
            paired_ttest([1], [0])

    def test_compare_requires_same_days(self):
        def pred(day, final):
            return DayPrediction(date(2020, 1, day), Method.DTV, UP, VoteTally(1, 0, 0), final)

        a = [pred(1, UP), pred(2, DOWN), pred(3, UP)]
        b = [pred(1, DOWN), pred(2, DOWN), pred(3, UP)]
        assert compare_predictions(a, b).n_pairs == 3
        assert compare_predictions(a, b[:2]) is None


class TestReport:
    def test_files(self, tmp_path):
        row = MetricsRow(0.75, 1.0, 0.5, 2 / 3, 4)
        runs = [RunResult("dtv", {"lambda": 0.5}, row), RunResult("standard", {}, row, paired_ttest([1, 0, 1], [0, 0, 1]), "dtv")]
        written = report(runs, tmp_path, series={"lambda": [(0.4, row), (0.5, row)]})
        lines = [json.loads(x) for x in written["results"].read_text().splitlines()]
        assert [r["name"] for r in lines] == ["dtv", "standard"]
        assert lines[0]["acc"] == 0.75 and lines[0]["positive_class"] == "Up"
        assert lines[1]["baseline"] == "dtv"
        table = written["table"].read_text()
        assert table.startswith("Positive class: Up")
        assert "| dtv " in table and "75.00" in table
        with written["series_lambda"].open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "acc", "p", "r", "f1"]
        assert rows[1][0] == "0.4"

    def test_nothing(self, tmp_path):
        with pytest.raises(ValueError):
            report([], tmp_path)
