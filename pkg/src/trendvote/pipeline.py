"""Standard, voting and denoise-then-vote prediction over instances."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from trendvote.backends.base import ClassifierRequest, summarize
from trendvote.corpus import DatasetSplit, PredictionInstance, parse_date, sample_news
from trendvote.errors import BackendError, ConfigError, LabelParseError, RunAborted, TransportError
from trendvote.labels import THREE_CLASS, TWO_CLASS, ItemLabel, TrendLabel
from trendvote.prompting import (
    DEFAULT_TOKENIZER,
    TITLE,
    Exemplar,
    InputVariant,
    Tokenizer,
    default_template,
    extract_input,
    pool_labels,
    render_item_prompt,
    render_standard_prompt,
    select_exemplars,
)

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
ERROR_POLICIES = ("abort", "irrelevant", "drop")


class Method(str, Enum):
    STANDARD = "standard"
    VOTING = "voting"
    DTV = "dtv"

    def __str__(self) -> str:
        return self.value

    @property
    def label_set(self) -> tuple[ItemLabel, ...]:
        return THREE_CLASS if self is Method.DTV else TWO_CLASS


@dataclass(frozen=True)
class MethodConfig:
    kind: Method = Method.DTV
    shots_per_class: int = 3
    lam: float = 0.5
    max_news: int = 60
    input_variant: InputVariant = TITLE
    fallback: TrendLabel = TrendLabel.UP
    token_budget: int | None = 4097
    seed: int = 0
    temperature: float = 0.0
    error_policy: str = "abort"

    def __post_init__(self):
        object.__setattr__(self, "kind", Method(self.kind))
        object.__setattr__(self, "fallback", TrendLabel(self.fallback))
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.shots_per_class < 0:
            raise ConfigError("shots_per_class must be >= 0")
        if self.max_news < 1:
            raise ConfigError("max_news must be >= 1")
        if self.kind is Method.STANDARD and not self.token_budget:
            raise ConfigError("the standard method needs a token budget")
        if self.error_policy not in ERROR_POLICIES:
            raise ConfigError(f"error_policy must be one of {ERROR_POLICIES}")

    @property
    def label_set(self) -> tuple[ItemLabel, ...]:
        return self.kind.label_set


@dataclass(frozen=True)
class VoteTally:
    n_up: int = 0
    n_down: int = 0
    n_irrelevant: int = 0

    def __post_init__(self):
        if min(self.n_up, self.n_down, self.n_irrelevant) < 0:
            raise ValueError("tally counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_up + self.n_down + self.n_irrelevant


@dataclass(frozen=True)
class DayPrediction:
    target_date: date
    method: Method
    truth: TrendLabel
    tally: VoteTally
    final: TrendLabel
    fallback_used: bool = False
    item_labels: tuple[tuple[str, ItemLabel], ...] = field(default=())

    @property
    def correct(self) -> bool:
        return self.final == self.truth


def tally(labels: Iterable[ItemLabel]) -> VoteTally:
    up = down = irr = 0
    for label in labels:
        label = ItemLabel(label)
        if label is ItemLabel.UP:
            up += 1
        elif label is ItemLabel.DOWN:
            down += 1
        else:
            irr += 1
    return VoteTally(up, down, irr)


def vote(t: VoteTally, lam: float, fallback: TrendLabel = TrendLabel.UP) -> tuple[TrendLabel, bool]:
    """Down iff n_down / (n_up + n_down) > lam; Irrelevant votes never count.

    A day with no directional votes gets ``fallback`` and the flag set.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    relevant = t.n_up + t.n_down
    if relevant == 0:
        return TrendLabel(fallback), True
    # keep the division: n_down > lam * relevant disagrees at float boundaries like 29 > 0.29 * 100
    return (TrendLabel.DOWN if t.n_down / relevant > lam else TrendLabel.UP), False


@dataclass
class PromptContext:
    """Template, selected exemplars and tokenizer shared by every call in a run."""

    exemplars: Sequence[Exemplar] = ()
    template: str = field(default_factory=default_template)
    tokenizer: Tokenizer = DEFAULT_TOKENIZER


def build_context(
    cfg: MethodConfig,
    pool: Sequence[Exemplar] = (),
    template: str | None = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> PromptContext:
    """Validate the pool against the method's label set and pick the exemplars."""
    if cfg.shots_per_class:
        labels = pool_labels(pool)
        if labels != cfg.label_set:
            raise ConfigError(
                f"{cfg.kind} method needs exemplars labelled {[str(x) for x in cfg.label_set]}, "
                f"pool has {[str(x) for x in labels]}"
            )
    exemplars = select_exemplars(pool, cfg.shots_per_class, cfg.seed, cfg.label_set)
    return PromptContext(exemplars, template or default_template(), tokenizer)


def _summarizer(backend, tokenizer: Tokenizer):
    if not callable(getattr(backend, "summarize", None)):
        return None
    return lambda article, n: summarize(article, n, backend, tokenizer)


def predict_per_item(
    instance: PredictionInstance,
    cfg: MethodConfig,
    backend,
    ctx: PromptContext | None = None,
) -> list[tuple[str, ItemLabel]]:
    if cfg.kind is Method.STANDARD:
        raise ConfigError("per-item prediction applies to the voting and dtv methods")
    ctx = ctx or PromptContext()
    sampled = sample_news(instance, cfg.max_news, cfg.seed)
    summarizer = _summarizer(backend, ctx.tokenizer)
    out: list[tuple[str, ItemLabel]] = []
    for item in sampled.news:
        try:
            query = extract_input(item, cfg.input_variant, ctx.tokenizer, summarizer)
            prompt = render_item_prompt(ctx.template, ctx.exemplars, query, cfg.label_set)
            request = ClassifierRequest(
                backend.model_id, cfg.temperature, prompt.text, cfg.label_set, item_ids=(item.id,)
            )
            label = backend.classify(request).label
        except BackendError as exc:
            # auth failures and replay misses are never softened
            if cfg.error_policy == "abort" or not isinstance(exc, (LabelParseError, TransportError)):
                raise RunAborted(f"{instance.key} item {item.id}: {exc}") from exc
            logger.warning("%s item %s: %s (policy=%s)", instance.key, item.id, exc, cfg.error_policy)
            if cfg.error_policy == "drop":
                continue
            label = ItemLabel.IRRELEVANT
        out.append((item.id, label))
    return out


def predict_standard(
    instance: PredictionInstance,
    cfg: MethodConfig,
    backend,
    ctx: PromptContext | None = None,
) -> DayPrediction:
    if cfg.kind is not Method.STANDARD:
        raise ConfigError("predict_standard requires the standard method")
    ctx = ctx or PromptContext()
    sampled = sample_news(instance, cfg.max_news, cfg.seed)
    prompt = render_standard_prompt(
        ctx.template,
        ctx.exemplars,
        sampled,
        cfg.token_budget,
        ctx.tokenizer,
        cfg.input_variant,
        _summarizer(backend, ctx.tokenizer),
    )
    ids = tuple(item.id for item in sampled.news[: prompt.n_retained])
    request = ClassifierRequest(backend.model_id, cfg.temperature, prompt.text, TWO_CLASS, item_ids=ids)
    try:
        label = backend.classify(request).label
    except BackendError as exc:
        raise RunAborted(f"{instance.key}: {exc}") from exc
    final = TrendLabel(label.value)
    return DayPrediction(
        target_date=instance.target_date,
        method=cfg.kind,
        truth=instance.truth,
        tally=tally([label]),
        final=final,
    )


def predict_day(instance: PredictionInstance, cfg: MethodConfig, backend, ctx: PromptContext | None = None) -> DayPrediction:
    if cfg.kind is Method.STANDARD:
        return predict_standard(instance, cfg, backend, ctx)
    items = predict_per_item(instance, cfg, backend, ctx)
    t = tally(label for _, label in items)
    final, used = vote(t, cfg.lam, cfg.fallback)
    return DayPrediction(
        target_date=instance.target_date,
        method=cfg.kind,
        truth=instance.truth,
        tally=t,
        final=final,
        fallback_used=used,
        item_labels=tuple(items),
    )


def run_method(
    split: DatasetSplit | Sequence[PredictionInstance],
    cfg: MethodConfig,
    backend,
    ctx: PromptContext | None = None,
    workers: int = 1,
) -> list[DayPrediction]:
    """One prediction per instance, ordered by target date.

    With ``workers > 1`` days run concurrently; results are joined by position,
    so completion order cannot change the output.
    """
    instances = split.instances if isinstance(split, DatasetSplit) else tuple(split)
    instances = sorted(instances, key=lambda i: i.target_date)
    ctx = ctx or PromptContext()
    if workers <= 1 or len(instances) < 2:
        return [predict_day(inst, cfg, backend, ctx) for inst in instances]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda inst: predict_day(inst, cfg, backend, ctx), instances))


def revote(predictions: Sequence[DayPrediction], lam: float) -> list[TrendLabel]:
    # a day that fell back has final == fallback, so reuse it as the fallback
    return [vote(p.tally, lam, p.final)[0] for p in predictions]


def sweep_lambda(
    predictions: Sequence[DayPrediction],
    truths: Sequence[TrendLabel] | None = None,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
) -> tuple[float, list[tuple[float, float]]]:
    """Re-threshold stored tallies over ``grid``; no backend calls.

    Returns the accuracy-maximising lambda (ties go to the value nearest 0.5,
    then the smaller) and the full (lambda, accuracy) table.
    """
    if not grid:
        raise ValueError("lambda grid must be non-empty")
    if any(p.method is Method.STANDARD for p in predictions):
        raise ConfigError("standard-method predictions carry no per-item tallies to re-threshold")
    if truths is None:
        truths = [p.truth for p in predictions]
    if len(truths) != len(predictions):
        raise ValueError("truths and predictions differ in length")
    table = []
    for lam in grid:
        finals = revote(predictions, lam)
        hits = sum(f == t for f, t in zip(finals, truths))
        table.append((lam, hits / len(predictions) if predictions else 0.0))
    best = max(table, key=lambda row: (row[1], -abs(row[0] - 0.5), -row[0]))
    return best[0], table


# ---------------------------------------------------------------------------
# prediction files


def prediction_record(p: DayPrediction) -> dict:
    return {
        "date": p.target_date.isoformat(),
        "method": p.method.value,
        "final": p.final.value,
        "truth": p.truth.value,
        "n_up": p.tally.n_up,
        "n_down": p.tally.n_down,
        "n_irrelevant": p.tally.n_irrelevant,
        "fallback_used": p.fallback_used,
        "items": [[item_id, label.value] for item_id, label in p.item_labels],
    }


def write_predictions(predictions: Iterable[DayPrediction], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in predictions:
            fh.write(json.dumps(prediction_record(p), ensure_ascii=False, separators=(",", ":")) + "\n")


def read_predictions(path: str | Path) -> list[DayPrediction]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                DayPrediction(
                    target_date=parse_date(rec["date"]),
                    method=Method(rec["method"]),
                    truth=TrendLabel(rec["truth"]),
                    tally=VoteTally(rec["n_up"], rec["n_down"], rec["n_irrelevant"]),
                    final=TrendLabel(rec["final"]),
                    fallback_used=bool(rec["fallback_used"]),
                    item_labels=tuple((i, ItemLabel(l)) for i, l in rec.get("items", [])),
                )
            )
    return out
