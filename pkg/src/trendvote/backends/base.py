from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

from trendvote.errors import ConfigError, LabelParseError
from trendvote.labels import THREE_CLASS, TWO_CLASS, ItemLabel, canonical_label_set
from trendvote.prompting import DEFAULT_TOKENIZER, Tokenizer

SOURCES = ("remote", "cache", "lexicon", "oracle")

SUMMARY_PROMPT = "Summarize the following news article in no more than {n} words.\n\nArticle: {article}\n\nSummary:"


@dataclass(frozen=True)
class ClassifierRequest:
    """One classification call.

    ``item_ids`` names the news items the query was built from; only the
    synthetic oracle looks at it, and it is not part of the cache key.
    """

    model_id: str
    temperature: float
    prompt: str
    label_set: tuple[ItemLabel, ...]
    item_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        labels = canonical_label_set(self.label_set)
        if labels not in (TWO_CLASS, THREE_CLASS):
            raise ValueError(f"label set must be Up/Down or Up/Down/Irrelevant, got {self.label_set}")
        object.__setattr__(self, "label_set", labels)


@dataclass(frozen=True)
class ClassifierResponse:
    raw: str
    label: ItemLabel
    source: str


@runtime_checkable
class Classifier(Protocol):
    model_id: str

    def classify(self, request: ClassifierRequest) -> ClassifierResponse: ...


_WORD_RE = {label: re.compile(rf"\b{label.value}\b", re.IGNORECASE) for label in ItemLabel}


def parse_label(raw: str, label_set: Sequence[ItemLabel]) -> ItemLabel:
    """Earliest whole-word, case-insensitive label mention in ``raw``.

    Labels outside ``label_set`` are ignored, so a 2-class call that answers
    "irrelevant" still fails instead of leaking a third class.
    """
    best: tuple[int, ItemLabel] | None = None
    for label in (ItemLabel.IRRELEVANT, ItemLabel.UP, ItemLabel.DOWN):
        if label not in label_set:
            continue
        m = _WORD_RE[label].search(raw)
        if m and (best is None or m.start() < best[0]):
            best = (m.start(), label)
    if best is None:
        raise LabelParseError(raw, label_set)
    return best[1]


def summarize(article: str, n_tokens: int, backend, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> str:
    """Ask ``backend`` for a summary and cut it to ``n_tokens`` tokens."""
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    if backend is None or not callable(getattr(backend, "summarize", None)):
        raise ConfigError("summary input needs a backend that can summarize")
    if not article.strip():
        return ""
    text = backend.summarize(article, n_tokens)
    return tokenizer.detokenize(tokenizer.tokenize(text)[:n_tokens])
