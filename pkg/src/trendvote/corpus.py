"""News/price ingestion, trend labels, trading-day windows and dataset splits."""

from __future__ import annotations

import bisect
import csv
import json
import logging
import random
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from trendvote.errors import DataValidationError, RecordParseError
from trendvote.labels import TrendLabel

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class NewsItem:
    id: str
    date: date
    title: str
    article: str | None = None
    tickers: tuple[str, ...] = ()


@dataclass(frozen=True)
class PriceBar:
    date: date
    adj_close: float


@dataclass(frozen=True)
class PredictionInstance:
    """Target trading day, the news window preceding it, and the realised trend."""

    target_date: date
    news: tuple[NewsItem, ...]
    truth: TrendLabel

    @property
    def key(self) -> str:
        return self.target_date.isoformat()


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    span: tuple[date, date]
    instances: tuple[PredictionInstance, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.instances)

    def label_counts(self) -> dict[TrendLabel, int]:
        counts = {TrendLabel.DOWN: 0, TrendLabel.UP: 0}
        for inst in self.instances:
            counts[inst.truth] += 1
        return counts


def parse_date(value: str) -> date:
    return date.fromisoformat(value.strip())


def _news_from_record(record: dict, line_no: int, path) -> NewsItem:
    if not isinstance(record, dict):
        raise RecordParseError(path, line_no, "record is not an object")
    title = record.get("title")
    if not isinstance(title, str) or not title.strip():
        raise RecordParseError(path, line_no, "missing or empty 'title'")
    raw_date = record.get("date")
    if not isinstance(raw_date, str):
        raise RecordParseError(path, line_no, "missing 'date'")
    try:
        day = parse_date(raw_date)
    except ValueError as exc:
        raise RecordParseError(path, line_no, f"bad date {raw_date!r}") from exc
    article = record.get("article")
    if article is not None and not isinstance(article, str):
        raise RecordParseError(path, line_no, "'article' must be a string")
    tickers = record.get("tickers") or ()
    if not isinstance(tickers, (list, tuple)) or not all(isinstance(t, str) for t in tickers):
        raise RecordParseError(path, line_no, "'tickers' must be an array of strings")
    item_id = record.get("id", str(line_no))
    return NewsItem(id=str(item_id), date=day, title=title, article=article, tickers=tuple(tickers))


def ingest_news(path: str | Path) -> list[NewsItem]:
    """Read a JSON-lines news file. Records without an ``id`` get their line number."""
    path = Path(path)
    items: list[NewsItem] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(path, line_no, f"invalid JSON ({exc.msg})") from exc
            item = _news_from_record(record, line_no, path)
            if item.id in seen:
                raise DataValidationError(
                    f"{path}:{line_no}: duplicate news id {item.id!r} (first seen on line {seen[item.id]})"
                )
            seen[item.id] = line_no
            items.append(item)
    return items


def ingest_prices(path: str | Path) -> list[PriceBar]:
    path = Path(path)
    bars: list[PriceBar] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return bars
        if [h.strip() for h in header] != ["date", "adj_close"]:
            raise DataValidationError(f"{path}: expected header 'date,adj_close', got {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise RecordParseError(path, line_no, f"expected 2 columns, got {len(row)}")
            try:
                bar = PriceBar(parse_date(row[0]), float(row[1]))
            except ValueError as exc:
                raise RecordParseError(path, line_no, str(exc)) from exc
            if not bar.adj_close > 0:
                raise DataValidationError(f"{path}:{line_no}: adj_close must be positive, got {bar.adj_close}")
            if bars and bar.date <= bars[-1].date:
                raise DataValidationError(
                    f"{path}:{line_no}: dates must be strictly increasing ({bar.date} after {bars[-1].date})"
                )
            bars.append(bar)
    return bars


def derive_labels(prices: Sequence[PriceBar]) -> dict[date, TrendLabel]:
    """Up iff today's adjusted close strictly exceeds yesterday's; ties are Down."""
    if len(prices) < 2:
        raise DataValidationError("at least two price bars are needed to derive labels")
    labels: dict[date, TrendLabel] = {}
    for prev, cur in zip(prices, prices[1:]):
        labels[cur.date] = TrendLabel.UP if cur.adj_close > prev.adj_close else TrendLabel.DOWN
    return labels


def build_instances(
    news: Iterable[NewsItem],
    prices: Sequence[PriceBar],
    ticker: str | None = None,
) -> list[PredictionInstance]:
    """Attach news to the first trading day strictly after its date.

    The window for day k is ``[previous trading day, day k)``, so weekend and
    holiday news rolls into the next session. News dated before the first bar,
    or on/after the last bar, has no labelled target and is ignored.
    Days whose window is empty are dropped.
    """
    labels = derive_labels(prices)
    days = [bar.date for bar in prices]
    windows: dict[date, list[NewsItem]] = {d: [] for d in days[1:]}
    for item in news:
        if ticker is not None and item.tickers and ticker not in item.tickers:
            continue
        idx = bisect.bisect_right(days, item.date)
        # days[idx - 1] <= item.date < days[idx]
        if idx == 0 or idx >= len(days):
            continue
        windows[days[idx]].append(item)

    instances = [
        PredictionInstance(target_date=d, news=tuple(windows[d]), truth=labels[d])
        for d in days[1:]
        if windows[d]
    ]
    dropped = len(days) - 1 - len(instances)
    if dropped:
        logger.info("dropped %d labelled day(s) with an empty news window", dropped)
    return instances


def split_dataset(
    instances: Sequence[PredictionInstance],
    spans: Mapping[str, tuple[date, date]],
) -> dict[str, DatasetSplit]:
    """Assign instances to train/valid/test by target date (inclusive spans)."""
    missing = [name for name in SPLIT_NAMES if name not in spans]
    if missing:
        raise DataValidationError(f"missing split span(s): {', '.join(missing)}")
    ordered = [spans[name] for name in SPLIT_NAMES]
    for (name_a, (_, end_a)), (name_b, (start_b, _)) in zip(
        zip(SPLIT_NAMES, ordered), zip(SPLIT_NAMES[1:], ordered[1:])
    ):
        if not end_a < start_b:
            raise DataValidationError(f"split spans overlap or are out of order: {name_a} ends {end_a}, {name_b} starts {start_b}")

    buckets: dict[str, list[PredictionInstance]] = {name: [] for name in SPLIT_NAMES}
    outside = 0
    for inst in instances:
        for name, (start, end) in zip(SPLIT_NAMES, ordered):
            if start <= inst.target_date <= end:
                buckets[name].append(inst)
                break
        else:
            outside += 1
    if outside:
        logger.info("%d instance(s) fall outside every split span", outside)
    splits = {
        name: DatasetSplit(name=name, span=span, instances=tuple(sorted(buckets[name], key=lambda i: i.target_date)))
        for name, span in zip(SPLIT_NAMES, ordered)
    }
    for name, split in splits.items():
        logger.debug("split %s: %d day(s)", name, len(split))
    return splits


def sample_news(instance: PredictionInstance, n: int, seed: int) -> PredictionInstance:
    """Keep at most ``n`` news items, sampled uniformly and returned in original order."""
    if n < 1:
        raise ValueError(f"news budget must be >= 1, got {n}")
    if len(instance.news) <= n:
        return instance
    rng = random.Random(f"{seed}:{instance.key}")
    keep = sorted(rng.sample(range(len(instance.news)), n))
    return replace(instance, news=tuple(instance.news[i] for i in keep))


def write_news(items: Iterable[NewsItem], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            record: dict = {"id": item.id, "date": item.date.isoformat(), "title": item.title}
            if item.article is not None:
                record["article"] = item.article
            if item.tickers:
                record["tickers"] = list(item.tickers)
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_prices(bars: Iterable[PriceBar], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "adj_close"])
        for bar in bars:
            writer.writerow([bar.date.isoformat(), repr(float(bar.adj_close))])
