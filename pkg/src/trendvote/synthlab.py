"""Synthetic corpora with planted labels, an oracle classifier and exact vote-accuracy enumeration.

Each day draws a fair-coin trend. Each of its ``m`` items is relevant with
probability rho; a relevant item's label equals the trend with probability q.
Noise items are Irrelevant but their text still *reads* Up (prob. beta) or
Down, which is what a 2-class classifier sees.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import warnings
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

from trendvote.backends.base import ClassifierRequest, ClassifierResponse, parse_label
from trendvote.corpus import NewsItem, PriceBar, write_news, write_prices
from trendvote.errors import BackendError, DataValidationError
from trendvote.labels import ItemLabel, TrendLabel
from trendvote.prompting import DEFAULT_TOKENIZER, Tokenizer

EXACT_ENUMERATION_LIMIT = 30

UP_VERBS = ("surges", "rallies", "climbs", "jumps", "gains", "soars", "rises")
DOWN_VERBS = ("plunges", "slumps", "tumbles", "drops", "slides", "sinks", "falls")
COMPANIES = (
    "Acme Corp", "Globex", "Initech", "Umbrella Holdings", "Stark Industries", "Wayne Enterprises",
    "Hooli", "Vandelay Imports", "Cyberdyne", "Soylent Foods", "Tyrell Systems", "Wonka Brands",
)
MARKET_TAILS = (
    "after quarterly report", "in early trading", "on analyst note", "ahead of earnings call",
    "after guidance update", "on heavy volume",
)
NOISE_SUBJECTS = (
    "Festival attendance", "Museum ticket demand", "Marathon registration", "Orchid show interest",
    "Ferry ridership", "Library membership", "Zoo visitor count", "Opera season booking",
)
NOISE_TAILS = (
    "at seaside resort", "in mountain village", "during holiday weekend", "across island towns",
    "for summer program", "at lakeside venue",
)
FILLER = (
    "The statement was published on the company website.",
    "Officials declined to comment on the details.",
    "Local reporters covered the announcement at length.",
    "Further information is expected later this week.",
    "The figures were compiled from several regional offices.",
    "Observers noted the schedule for the coming months.",
)


class ApproximationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_days: int = 250
    items_per_day: int = 20
    relevance_rate: float = 0.5
    direction_accuracy: float = 0.8
    noise_direction_bias: float = 0.5
    seed: int = 0
    start_date: date = date(2020, 1, 1)
    article_sentences: int = 4

    def __post_init__(self):
        if self.n_days < 1:
            raise DataValidationError("n_days must be >= 1")
        if self.items_per_day < 1:
            raise DataValidationError("items_per_day must be >= 1")
        for name in ("relevance_rate", "direction_accuracy", "noise_direction_bias"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataValidationError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class SynthItemTruth:
    relevant: bool
    planted_label: ItemLabel
    surface_reading: ItemLabel

    def __post_init__(self):
        if self.relevant == (self.planted_label is ItemLabel.IRRELEVANT):
            raise ValueError("relevant items carry Up/Down, noise items carry Irrelevant")


@dataclass(frozen=True)
class PlantedDay:
    target_date: date
    true_trend: TrendLabel
    items: tuple[tuple[NewsItem, SynthItemTruth], ...]

    @property
    def n_relevant(self) -> int:
        return sum(truth.relevant for _, truth in self.items)


@dataclass(frozen=True)
class SynthCorpus:
    config: SynthConfig
    days: tuple[PlantedDay, ...]
    prices: tuple[PriceBar, ...]

    @property
    def news(self) -> list[NewsItem]:
        return [item for day in self.days for item, _ in day.items]

    @property
    def truths(self) -> dict[str, SynthItemTruth]:
        return {item.id: truth for day in self.days for item, truth in day.items}

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"news": out / "news.jsonl", "prices": out / "prices.csv", "truth": out / "truth.jsonl"}
        write_news(self.news, paths["news"])
        write_prices(self.prices, paths["prices"])
        with paths["truth"].open("w", encoding="utf-8", newline="\n") as fh:
            for day in self.days:
                for item, truth in day.items:
                    rec = {
                        "id": item.id,
                        "date": item.date.isoformat(),
                        "relevant": truth.relevant,
                        "planted_label": truth.planted_label.value,
                        "surface_reading": truth.surface_reading.value,
                    }
                    fh.write(json.dumps(rec) + "\n")
        return paths


def trading_days(start: date, count: int) -> list[date]:
    days, d = [], start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def _flip(label: ItemLabel) -> ItemLabel:
    return ItemLabel.DOWN if label is ItemLabel.UP else ItemLabel.UP


def _title(rng: random.Random, reading: ItemLabel, relevant: bool) -> str:
    verb = rng.choice(UP_VERBS if reading is ItemLabel.UP else DOWN_VERBS)
    if relevant:
        return f"{rng.choice(COMPANIES)} shares {verb} {rng.choice(MARKET_TAILS)}."
    return f"{rng.choice(NOISE_SUBJECTS)} {verb} {rng.choice(NOISE_TAILS)}."


def generate(cfg: SynthConfig) -> SynthCorpus:
    """Draw a corpus. All randomness comes from one ``random.Random(cfg.seed)`` stream."""
    rng = random.Random(cfg.seed)
    sessions = trading_days(cfg.start_date, cfg.n_days + 1)
    price = 100.0
    prices = [PriceBar(sessions[0], price)]
    days = []
    for k in range(1, len(sessions)):
        trend = TrendLabel.UP if rng.random() < 0.5 else TrendLabel.DOWN
        agree = ItemLabel(trend.value)
        disagree = _flip(agree)
        items = []
        for j in range(cfg.items_per_day):
            relevant = rng.random() < cfg.relevance_rate
            if relevant:
                planted = agree if rng.random() < cfg.direction_accuracy else disagree
                surface = planted
            else:
                planted = ItemLabel.IRRELEVANT
                surface = ItemLabel.UP if rng.random() < cfg.noise_direction_bias else ItemLabel.DOWN
            title = _title(rng, surface, relevant)
            article = " ".join([title, *rng.sample(FILLER, min(cfg.article_sentences, len(FILLER)))])
            news = NewsItem(id=f"d{k:05d}-i{j:03d}", date=sessions[k - 1], title=title, article=article)
            items.append((news, SynthItemTruth(relevant, planted, surface)))
        if trend is TrendLabel.UP:
            price += 1.0
        prices.append(PriceBar(sessions[k], price))
        days.append(PlantedDay(sessions[k], trend, tuple(items)))
    return SynthCorpus(cfg, tuple(days), tuple(prices))


def load_truth(path: str | Path) -> dict[str, SynthItemTruth]:
    truths = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            truths[rec["id"]] = SynthItemTruth(
                bool(rec["relevant"]), ItemLabel(rec["planted_label"]), ItemLabel(rec["surface_reading"])
            )
    return truths


class OracleBackend:
    """Returns planted labels, corrupted at fixed rates.

    Each item's corruption draws come from ``sha256(seed, item id)``, so results
    do not depend on call order or threading. In 2-class mode a noise item
    cannot abstain and reports its surface reading instead. A merged request
    (several item ids) reads like a 2-class majority over those items' answers.
    """

    source = "oracle"

    def __init__(
        self,
        truths: Mapping[str, SynthItemTruth],
        relevance_error: float = 0.0,
        direction_error: float = 0.0,
        seed: int = 0,
        model_id: str = "oracle",
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ):
        for name, value in (("relevance_error", relevance_error), ("direction_error", direction_error)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        self.truths = dict(truths)
        self.relevance_error = relevance_error
        self.direction_error = direction_error
        self.seed = seed
        self.model_id = model_id
        self.tokenizer = tokenizer

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "OracleBackend":
        return cls(load_truth(path), **kwargs)

    def _draws(self, item_id: str) -> tuple[float, float]:
        digest = hashlib.sha256(f"{self.seed}\x00{item_id}".encode("utf-8")).digest()
        scale = float(2**64)
        return int.from_bytes(digest[:8], "big") / scale, int.from_bytes(digest[8:16], "big") / scale

    def item_label(self, item_id: str, three_class: bool) -> ItemLabel:
        try:
            truth = self.truths[item_id]
        except KeyError:
            raise BackendError(f"oracle has no truth for item {item_id!r}") from None
        u_rel, u_dir = self._draws(item_id)
        if three_class:
            relevant = truth.relevant != (u_rel < self.relevance_error)
            if not relevant:
                return ItemLabel.IRRELEVANT
        direction = truth.planted_label if truth.relevant else truth.surface_reading
        return _flip(direction) if u_dir < self.direction_error else direction

    def classify(self, request: ClassifierRequest) -> ClassifierResponse:
        if not request.item_ids:
            raise BackendError("oracle backend needs item ids on the request")
        three_class = ItemLabel.IRRELEVANT in request.label_set
        if len(request.item_ids) == 1:
            label = self.item_label(request.item_ids[0], three_class)
        else:
            votes = [self.item_label(i, False) for i in request.item_ids]
            downs = sum(v is ItemLabel.DOWN for v in votes)
            label = ItemLabel.DOWN if downs / len(votes) > 0.5 else ItemLabel.UP
        raw = f"Label: {label}"
        return ClassifierResponse(raw=raw, label=parse_label(raw, request.label_set), source=self.source)

    def summarize(self, article: str, n_tokens: int) -> str:
        return self.tokenizer.detokenize(self.tokenizer.tokenize(article)[:n_tokens])


def oracle_backend(truth_path: str | Path, relevance_error: float = 0.0, direction_error: float = 0.0, seed: int = 0) -> OracleBackend:
    return OracleBackend.from_file(truth_path, relevance_error=relevance_error, direction_error=direction_error, seed=seed)


# ---------------------------------------------------------------------------
# expected accuracy


def _binom_pmf(k: int, n: int, p: float) -> float:
    return math.comb(n, k) * p**k * (1.0 - p) ** (n - k)


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def conditional_vote_accuracy(m_relevant: int, q: float, lam: float, trend: TrendLabel) -> float:
    """P(vote == trend | trend) for ``m_relevant`` independent voters each right w.p. ``q``.

    On an Up day the vote is right iff n_down / m <= lam; on a Down day iff
    n_down / m > lam. Exact for m <= 30; above that a continuity-corrected
    normal approximation is used and an ``ApproximationWarning`` is emitted.
    """
    if m_relevant < 1:
        raise ValueError("m_relevant must be >= 1; days without relevant items use the fallback")
    if not 0.0 <= q <= 1.0 or not 0.0 <= lam <= 1.0:
        raise ValueError("q and lambda must lie in [0, 1]")
    m = m_relevant
    down_day = TrendLabel(trend) is TrendLabel.DOWN
    if m <= EXACT_ENUMERATION_LIMIT:
        # k = number of voters agreeing with the trend
        if down_day:
            return sum(_binom_pmf(k, m, q) for k in range(m + 1) if k / m > lam)
        return sum(_binom_pmf(k, m, q) for k in range(m + 1) if not (m - k) / m > lam)
    warnings.warn(f"normal approximation used for m_relevant={m}", ApproximationWarning, stacklevel=2)
    mu, sd = m * q, math.sqrt(m * q * (1.0 - q))
    cut = math.floor(lam * m)
    if down_day:  # right iff agreeing votes > cut
        return float(mu > cut) if sd == 0 else 1.0 - _normal_cdf((cut + 0.5 - mu) / sd)
    # right iff disagreeing votes <= cut
    return float(m - mu <= cut) if sd == 0 else _normal_cdf((cut + 0.5 - (m - mu)) / sd)


def expected_vote_accuracy(m_relevant: int, q: float, lam: float) -> float:
    """Vote accuracy averaged over a fair-coin trend prior."""
    return 0.5 * (
        conditional_vote_accuracy(m_relevant, q, lam, TrendLabel.UP)
        + conditional_vote_accuracy(m_relevant, q, lam, TrendLabel.DOWN)
    )


def predicted_accuracy(
    relevant_counts: Sequence[int],
    truths: Sequence[TrendLabel],
    q: float,
    lam: float,
    fallback: TrendLabel = TrendLabel.UP,
) -> float:
    """Mean per-day expected accuracy given each day's realised relevant count.

    Days without relevant votes score 1 when the fallback matches the trend.
    """
    if len(relevant_counts) != len(truths) or not truths:
        raise ValueError("need equal-length, non-empty inputs")
    total = 0.0
    for m, trend in zip(relevant_counts, truths):
        total += float(trend == fallback) if m == 0 else conditional_vote_accuracy(m, q, lam, trend)
    return total / len(truths)
