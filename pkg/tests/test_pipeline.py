from __future__ import annotations

from datetime import date
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trendvote.backends.base import ClassifierResponse, parse_label
from trendvote.backends.lexicon import LexiconBackend
from trendvote.corpus import NewsItem, PredictionInstance
from trendvote.errors import AuthError, ConfigError, RunAborted
from trendvote.labels import ItemLabel, TrendLabel
from trendvote.pipeline import (
    DayPrediction,
    Method,
    MethodConfig,
    VoteTally,
    build_context,
    predict_day,
    read_predictions,
    revote,
    run_method,
    sweep_lambda,
    tally,
    vote,
    write_predictions,
)
from trendvote.prompting import Exemplar

UP, DOWN, IRR = ItemLabel.UP, ItemLabel.DOWN, ItemLabel.IRRELEVANT


def _instance(titles, day=2, truth=TrendLabel.UP):
    news = tuple(NewsItem(f"{day}-{i}", date(2020, 1, day - 1), t) for i, t in enumerate(titles))
    return PredictionInstance(date(2020, 1, day), news, truth)


class ScriptedBackend:
    """Answers from a title -> raw map, raising for configured titles."""

    model_id = "scripted"

    def __init__(self, answers, failures=None):
        self.answers = answers
        self.failures = failures or {}

    def classify(self, request):
        from trendvote.prompting import extract_query

        query = extract_query(request.prompt)
        if query in self.failures:
            raise self.failures[query]
        raw = self.answers[query]
        return ClassifierResponse(raw, parse_label(raw, request.label_set), "lexicon")


class TestVote:
    @pytest.mark.parametrize(
        "counts, lam, expected",
        [
            ((0, 1, 3), 0.5, TrendLabel.DOWN),
            ((2, 1, 1), 0.5, TrendLabel.UP),
            ((1, 1, 0), 0.5, TrendLabel.UP),  # exactly lambda is not "strictly exceeding"
            ((3, 7, 0), 0.7, TrendLabel.UP),
            ((3, 7, 0), 0.69, TrendLabel.DOWN),
            ((5, 0, 0), 0.0, TrendLabel.UP),
            ((0, 5, 0), 1.0, TrendLabel.UP),
        ],
    )
    def test_examples(self, counts, lam, expected):
        assert vote(VoteTally(*counts), lam) == (expected, False)

    def test_all_irrelevant_uses_fallback(self):
        assert vote(VoteTally(0, 0, 5), 0.5) == (TrendLabel.UP, True)
        assert vote(VoteTally(0, 0, 5), 0.5, TrendLabel.DOWN) == (TrendLabel.DOWN, True)

    def test_lambda_range(self):
        with pytest.raises(ValueError):
            vote(VoteTally(1, 1, 0), 1.5)

    @given(st.integers(0, 60), st.integers(0, 60), st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_lambda(self, n_up, n_down, lam_a, lam_b):
        lo, hi = sorted((lam_a, lam_b))
        t = VoteTally(n_up, n_down, 0)
        # raising lambda can only turn Down into Up
        if vote(t, hi)[0] is TrendLabel.DOWN:
            assert vote(t, lo)[0] is TrendLabel.DOWN

    @given(st.integers(0, 60), st.integers(0, 60), st.integers(1, 19))
    def test_mirror_symmetry(self, n_up, n_down, twentieths):
        lam = twentieths / 20
        if n_up + n_down == 0 or Fraction(n_down, n_up + n_down) == Fraction(twentieths, 20):
            return
        # swapping Up and Down votes and reflecting lambda flips the outcome
        a = vote(VoteTally(n_up, n_down, 0), lam)[0]
        b = vote(VoteTally(n_down, n_up, 0), 1 - lam)[0]
        assert a is not b

    def test_tally(self):
        assert tally([IRR, DOWN, IRR, IRR]) == VoteTally(0, 1, 3)


class TestContext:
    def test_voting_rejects_three_class_pool(self):
        pool = [Exemplar(f"{l} {i}", l) for l in (UP, DOWN, IRR) for i in range(3)]
        with pytest.raises(ConfigError, match="voting"):
            build_context(MethodConfig(kind=Method.VOTING), pool)

    def test_zero_shot_skips_pool_check(self):
        assert build_context(MethodConfig(kind=Method.VOTING, shots_per_class=0), []).exemplars == []


class TestPredict:
    def test_dtv_day(self):
        titles = ["a", "b", "c", "d"]
        backend = ScriptedBackend(dict(zip(titles, ["Irrelevant", "Down", "Irrelevant", "Irrelevant"])))
        pred = predict_day(_instance(titles, truth=TrendLabel.DOWN), MethodConfig(shots_per_class=0), backend)
        assert pred.tally == VoteTally(0, 1, 3)
        assert pred.final is TrendLabel.DOWN and pred.correct
        assert [i for i, _ in pred.item_labels] == ["2-0", "2-1", "2-2", "2-3"]

    def test_fallback_flag(self):
        backend = ScriptedBackend({"a": "Irrelevant"})
        pred = predict_day(_instance(["a"]), MethodConfig(shots_per_class=0, fallback=TrendLabel.DOWN), backend)
        assert pred.fallback_used and pred.final is TrendLabel.DOWN

    def test_parse_failure_policies(self):
        backend = ScriptedBackend({"a": "Down", "b": "no idea"})
        inst = _instance(["a", "b"])
        with pytest.raises(RunAborted):
            predict_day(inst, MethodConfig(shots_per_class=0), backend)
        soft = predict_day(inst, MethodConfig(shots_per_class=0, error_policy="irrelevant"), backend)
        assert soft.tally == VoteTally(0, 1, 1)
        dropped = predict_day(inst, MethodConfig(shots_per_class=0, error_policy="drop"), backend)
        assert dropped.tally == VoteTally(0, 1, 0)

    def test_auth_error_always_aborts(self):
        backend = ScriptedBackend({}, failures={"a": AuthError("401")})
        with pytest.raises(RunAborted):
            predict_day(_instance(["a"]), MethodConfig(shots_per_class=0, error_policy="drop"), backend)

    def test_standard_single_call(self):
        backend = ScriptedBackend({"up news...more": "Down"})
        cfg = MethodConfig(kind=Method.STANDARD, shots_per_class=0)
        pred = predict_day(_instance(["up news", "more"]), cfg, backend)
        assert pred.final is TrendLabel.DOWN
        assert pred.tally.total == 1

    def test_standard_parse_failure_aborts(self):
        backend = ScriptedBackend({"x": "?"})
        with pytest.raises(RunAborted):
            predict_day(_instance(["x"]), MethodConfig(kind=Method.STANDARD, shots_per_class=0), backend)

    def test_threads_do_not_change_output(self):
        instances = [_instance([f"t{d} rises", f"t{d} falls", f"t{d} calm"], day=d) for d in range(2, 22)]
        cfg = MethodConfig(shots_per_class=0)
        lex = LexiconBackend()
        assert run_method(instances, cfg, lex, workers=1) == run_method(list(reversed(instances)), cfg, lex, workers=8)


def _pred(n_up, n_down, n_irr, truth, day=1, fallback=TrendLabel.UP):
    t = VoteTally(n_up, n_down, n_irr)
    final, used = vote(t, 0.5, fallback)
    return DayPrediction(date(2021, 1, day), Method.DTV, truth, t, final, used)


class TestSweep:
    def test_picks_best(self):
        # ratios 0.4 with truth Down favour lambda < 0.4
        preds = [_pred(3, 2, 0, TrendLabel.DOWN, day=i + 1) for i in range(5)]
        best, table = sweep_lambda(preds)
        assert best == 0.35
        assert dict(table)[0.35] == 1.0 and dict(table)[0.4] == 0.0

    def test_tie_prefers_half(self):
        preds = [_pred(3, 0, 0, TrendLabel.UP, day=1)]
        best, table = sweep_lambda(preds)
        assert all(acc == 1.0 for _, acc in table)
        assert best == 0.5

    def test_fallback_preserved_on_revote(self):
        p = _pred(0, 0, 4, TrendLabel.DOWN, fallback=TrendLabel.DOWN)
        assert revote([p], 0.1) == [TrendLabel.DOWN]

    def test_standard_rejected(self):
        p = DayPrediction(date(2021, 1, 1), Method.STANDARD, TrendLabel.UP, VoteTally(1, 0, 0), TrendLabel.UP)
        with pytest.raises(ConfigError):
            sweep_lambda([p])


class TestPredictionFiles:
    def test_round_trip(self, tmp_path):
        preds = [
            DayPrediction(date(2021, 1, 4), Method.DTV, TrendLabel.UP, VoteTally(1, 2, 3), TrendLabel.DOWN, False, (("a", DOWN),)),
            DayPrediction(date(2021, 1, 5), Method.DTV, TrendLabel.DOWN, VoteTally(0, 0, 1), TrendLabel.UP, True, (("b", IRR),)),
        ]
        write_predictions(preds, tmp_path / "p.jsonl")
        assert read_predictions(tmp_path / "p.jsonl") == preds

