from __future__ import annotations

import itertools
import warnings
from fractions import Fraction

import pytest

from trendvote.backends.base import ClassifierRequest
from trendvote.backends.lexicon import LexiconBackend
from trendvote.corpus import build_instances, ingest_news, ingest_prices
from trendvote.errors import BackendError, DataValidationError
from trendvote.labels import THREE_CLASS, TWO_CLASS, ItemLabel, TrendLabel
from trendvote.synthlab import (
    ApproximationWarning,
    OracleBackend,
    SynthConfig,
    conditional_vote_accuracy,
    expected_vote_accuracy,
    generate,
    load_truth,
    predicted_accuracy,
)


def enumerate_accuracy(m: int, q: Fraction, lam: Fraction, trend: TrendLabel) -> Fraction:
    total = Fraction(0)
    for outcome in itertools.product((0, 1), repeat=m):
        prob = Fraction(1)
        for right in outcome:
            prob *= q if right else 1 - q
        agreeing = sum(outcome)
        n_down = agreeing if trend is TrendLabel.DOWN else m - agreeing
        final = TrendLabel.DOWN if Fraction(n_down, m) > lam else TrendLabel.UP
        total += prob * (final is trend)
    return total


class TestGenerate:
    def test_deterministic(self, tmp_path):
        cfg = SynthConfig(n_days=20, items_per_day=4, seed=3)
        a = generate(cfg).write(tmp_path / "a")
        b = generate(cfg).write(tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_structure_and_labels(self, tmp_path):
        corpus = generate(SynthConfig(n_days=30, items_per_day=5, seed=1))
        paths = corpus.write(tmp_path)
        instances = build_instances(ingest_news(paths["news"]), ingest_prices(paths["prices"]))
        assert len(instances) == 30
        for inst, day in zip(instances, corpus.days):
            assert inst.truth is day.true_trend
            assert [n.id for n in inst.news] == [n.id for n, _ in day.items]
        assert load_truth(paths["truth"]) == corpus.truths

    def test_planted_rates(self):
        corpus = generate(SynthConfig(n_days=400, items_per_day=20, relevance_rate=0.3, direction_accuracy=0.7, seed=2))
        items = [(day, t) for day in corpus.days for _, t in day.items]
        rel = [(d, t) for d, t in items if t.relevant]
        assert abs(len(rel) / len(items) - 0.3) < 0.02
        agree = sum(t.planted_label.value == d.true_trend.value for d, t in rel) / len(rel)
        assert abs(agree - 0.7) < 0.02

    def test_surface_reading_matches_lexicon(self):
        corpus = generate(SynthConfig(n_days=50, items_per_day=10, seed=9))
        lex = LexiconBackend()
        for day in corpus.days:
            for item, truth in day.items:
                assert lex.read(item.title, three_class=False) is truth.surface_reading

    @pytest.mark.parametrize("kwargs", [{"n_days": 0}, {"relevance_rate": 1.5}, {"items_per_day": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(DataValidationError):
            SynthConfig(**kwargs)


class TestOracle:
    @pytest.fixture
    def corpus(self):
        return generate(SynthConfig(n_days=300, items_per_day=10, relevance_rate=0.5, seed=6))

    def _req(self, item_id, labels=THREE_CLASS):
        return ClassifierRequest("oracle", 0.0, "Title: x\nLabel:", labels, item_ids=(item_id,))

    def test_perfect_oracle_returns_truth(self, corpus):
        oracle = OracleBackend(corpus.truths)
        for item_id, truth in list(corpus.truths.items())[:300]:
            assert oracle.classify(self._req(item_id)).label is truth.planted_label
            two = oracle.classify(self._req(item_id, TWO_CLASS)).label
            assert two is (truth.planted_label if truth.relevant else truth.surface_reading)

    def test_error_rates(self, corpus):
        oracle = OracleBackend(corpus.truths, relevance_error=0.2, direction_error=0.1, seed=1)
        flipped_rel = sum(
            (oracle.item_label(i, True) is ItemLabel.IRRELEVANT) == t.relevant for i, t in corpus.truths.items()
        ) / len(corpus.truths)
        assert abs(flipped_rel - 0.2) < 0.03

    def test_order_independent(self, corpus):
        oracle = OracleBackend(corpus.truths, relevance_error=0.3, direction_error=0.3)
        ids = list(corpus.truths)
        forward = [oracle.item_label(i, True) for i in ids]
        backward = [oracle.item_label(i, True) for i in reversed(ids)]
        assert forward == backward[::-1]

    def test_needs_ids(self, corpus):
        with pytest.raises(BackendError):
            OracleBackend(corpus.truths).classify(ClassifierRequest("o", 0.0, "p", THREE_CLASS))


class TestExpectedAccuracy:
    @pytest.mark.parametrize("m", [1, 2, 3, 4, 7, 10])
    @pytest.mark.parametrize("q", [Fraction(1, 2), Fraction(7, 10), Fraction(4, 5), Fraction(19, 20)])
    @pytest.mark.parametrize("lam", [Fraction(3, 10), Fraction(1, 2), Fraction(7, 10)])
    def test_matches_enumeration(self, m, q, lam):
        for trend in TrendLabel:
            got = conditional_vote_accuracy(m, float(q), float(lam), trend)
            assert got == pytest.approx(float(enumerate_accuracy(m, q, lam, trend)), abs=1e-12)

    def test_jury_value(self):
        assert expected_vote_accuracy(3, 0.8, 0.5) == pytest.approx(0.896, abs=1e-12)

    def test_odd_jury_monotone(self):
        values = [expected_vote_accuracy(m, 0.7, 0.5) for m in range(1, 16, 2)]
        assert values == sorted(values)

    def test_normal_approximation(self):
        with pytest.warns(ApproximationWarning):
            approx = expected_vote_accuracy(41, 0.6, 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            exact = expected_vote_accuracy(29, 0.6, 0.5)
        assert 0.8 < approx < 0.95 and approx > exact

    def test_predicted_accuracy_uses_fallback(self):
        got = predicted_accuracy([0, 0, 3], [TrendLabel.UP, TrendLabel.DOWN, TrendLabel.UP], 0.8, 0.5)
        assert got == pytest.approx((1 + 0 + 0.896) / 3)
