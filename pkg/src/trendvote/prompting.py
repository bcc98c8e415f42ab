"""Few-shot prompt rendering, exemplar pools, input variants and token budgets."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from trendvote.corpus import NewsItem, PredictionInstance
from trendvote.errors import ConfigError, DataValidationError, RecordParseError, TemplateError
from trendvote.labels import THREE_CLASS, TWO_CLASS, ItemLabel, canonical_label_set, to_item

PLACEHOLDERS = ("instruction", "exemplars", "query")
_PLACEHOLDER_RE = re.compile(r"\{(instruction|exemplars|query)\}")

INSTRUCTION_3CLASS = (
    'Predict the impact of news passages on the stock trend into 3 classes: "Up", "Down" or "Irrelevant".'
)
INSTRUCTION_2CLASS = 'Predict the impact of news passages on the stock trend into 2 classes: "Up" or "Down".'

TITLE_SEPARATOR = "..."

Summarizer = Callable[[str, int], str]


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> list[str]: ...

    def detokenize(self, tokens: Sequence[str]) -> str: ...

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """Counts whitespace-delimited words. Budgets are relative to whichever tokenizer is configured."""

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)

    def count(self, text: str) -> int:
        return len(text.split())


DEFAULT_TOKENIZER = WhitespaceTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    return tokenizer.count(text)


# ---------------------------------------------------------------------------
# input variants


@dataclass(frozen=True)
class InputVariant:
    kind: str = "title"
    n: int | None = None

    KINDS = ("title", "first", "middle", "last", "summary")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown input variant kind {self.kind!r}")
        if self.kind == "title":
            if self.n is not None:
                raise ValueError("title variant takes no token count")
        elif self.n is None or self.n < 1:
            raise ValueError(f"article variant {self.kind!r} needs a token count >= 1")

    @classmethod
    def parse(cls, text: str) -> "InputVariant":
        """Parse ``title`` or ``article-{first,middle,last,summary}-N``."""
        text = text.strip().lower()
        if text == "title":
            return cls()
        m = re.fullmatch(r"article-(first|middle|last|summary)-(\d+)", text)
        if not m:
            raise ValueError(f"cannot parse input variant {text!r}")
        return cls(m.group(1), int(m.group(2)))

    def __str__(self) -> str:
        return "title" if self.kind == "title" else f"article-{self.kind}-{self.n}"


TITLE = InputVariant()


def slice_tokens(tokens: Sequence[str], kind: str, n: int) -> list[str]:
    length = len(tokens)
    if n >= length:
        return list(tokens)
    if kind == "first":
        return list(tokens[:n])
    if kind == "last":
        return list(tokens[length - n :])
    if kind == "middle":
        start = min(max(length // 2 - n // 2, 0), length - n)
        return list(tokens[start : start + n])
    raise ValueError(f"not a slice variant: {kind!r}")


def extract_input(
    item: NewsItem,
    variant: InputVariant = TITLE,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    summarizer: Summarizer | None = None,
) -> str:
    """Text that represents ``item`` in a prompt under ``variant``."""
    if variant.kind == "title":
        return item.title
    if item.article is None:
        raise DataValidationError(f"news {item.id!r} has no article for variant {variant}")
    if variant.kind == "summary":
        if summarizer is None:
            raise ConfigError(f"variant {variant} needs a summarizing backend")
        return summarizer(item.article, variant.n)
    return tokenizer.detokenize(slice_tokens(tokenizer.tokenize(item.article), variant.kind, variant.n))


# ---------------------------------------------------------------------------
# exemplars


@dataclass(frozen=True)
class Exemplar:
    text: str
    label: ItemLabel

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("exemplar text must be non-empty")
        object.__setattr__(self, "label", to_item(self.label))


def load_exemplars(path: str | Path) -> list[Exemplar]:
    path = Path(path)
    pool = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pool.append(Exemplar(rec["text"], rec["label"]))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise RecordParseError(path, line_no, f"bad exemplar record: {exc}") from exc
    return pool


def pool_labels(pool: Iterable[Exemplar]) -> tuple[ItemLabel, ...]:
    return canonical_label_set(ex.label for ex in pool)


def select_exemplars(
    pool: Sequence[Exemplar],
    shots_per_class: int,
    seed: int,
    label_set: Sequence[ItemLabel] | None = None,
) -> list[Exemplar]:
    """Pick ``shots_per_class`` exemplars per class, interleaved Up, Down[, Irrelevant].

    ``label_set`` defaults to the classes present in ``pool``.
    """
    if shots_per_class < 0:
        raise ValueError("shots_per_class must be >= 0")
    if shots_per_class == 0:
        return []
    classes = canonical_label_set(label_set) if label_set is not None else pool_labels(pool)
    rng = random.Random(seed)
    picked: list[list[Exemplar]] = []
    for label in classes:
        members = [ex for ex in pool if ex.label == label]
        if len(members) < shots_per_class:
            raise ConfigError(
                f"exemplar pool has {len(members)} {label} exemplar(s), {shots_per_class} required"
            )
        idx = sorted(rng.sample(range(len(members)), shots_per_class))
        picked.append([members[i] for i in idx])
    return [group[i] for i in range(shots_per_class) for group in picked]


# ---------------------------------------------------------------------------
# rendering


@dataclass(frozen=True)
class PromptSpec:
    instruction: str
    exemplars: tuple[Exemplar, ...]
    query: str
    label_set: tuple[ItemLabel, ...]
    text: str
    n_retained: int | None = None

    def __str__(self) -> str:
        return self.text


def load_template(path: str | Path) -> str:
    return validate_template(Path(path).read_text(encoding="utf-8"))


def default_template() -> str:
    return resources.files("trendvote.data.templates").joinpath("item.txt").read_text(encoding="utf-8")


def validate_template(template: str) -> str:
    missing = [p for p in PLACEHOLDERS if "{" + p + "}" not in template]
    if missing:
        raise TemplateError(f"template lacks placeholder(s): {', '.join('{' + m + '}' for m in missing)}")
    return template


def instruction_for(label_set: Sequence[ItemLabel]) -> str:
    labels = canonical_label_set(label_set)
    if labels == THREE_CLASS:
        return INSTRUCTION_3CLASS
    if labels == TWO_CLASS:
        return INSTRUCTION_2CLASS
    raise ConfigError(f"unsupported label set {[str(x) for x in labels]}")


def format_exemplar(ex: Exemplar) -> str:
    return f"Title: {ex.text}\nLabel: {ex.label}\n\n"


def format_query(text: str) -> str:
    return f"Title: {text}\nLabel:"


def extract_query(prompt: str) -> str:
    """Recover the query text from a prompt rendered by this module."""
    start = prompt.rfind("Title: ")
    if start < 0:
        return prompt
    body = prompt[start + len("Title: ") :]
    if body.endswith("\nLabel:"):
        body = body[: -len("\nLabel:")]
    return body


def _render(template: str, instruction: str, exemplars: Sequence[Exemplar], query: str) -> str:
    values = {
        "instruction": instruction,
        "exemplars": "".join(format_exemplar(ex) for ex in exemplars),
        "query": format_query(query),
    }
    # single pass, so placeholder-like text inside titles is never re-expanded
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)


def render_item_prompt(
    template: str,
    exemplars: Sequence[Exemplar],
    query_text: str,
    label_set: Sequence[ItemLabel],
) -> PromptSpec:
    validate_template(template)
    labels = canonical_label_set(label_set)
    stray = [ex for ex in exemplars if ex.label not in labels]
    if stray:
        raise ConfigError(f"exemplar label {stray[0].label} is outside the label set {[str(x) for x in labels]}")
    instruction = instruction_for(labels)
    text = _render(template, instruction, exemplars, query_text)
    return PromptSpec(instruction, tuple(exemplars), query_text, labels, text)


def render_standard_prompt(
    template: str,
    exemplars: Sequence[Exemplar],
    instance: PredictionInstance,
    budget: int,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    variant: InputVariant = TITLE,
    summarizer: Summarizer | None = None,
) -> PromptSpec:
    """Merge the window's texts into one 2-class query, dropping whole trailing
    texts until the rendered prompt fits ``budget`` tokens."""
    validate_template(template)
    fixed = _render(template, instruction_for(TWO_CLASS), exemplars, "")
    if tokenizer.count(fixed) >= budget:
        raise ConfigError(f"token budget {budget} leaves no room after instruction and exemplars")
    texts = [extract_input(item, variant, tokenizer, summarizer) for item in instance.news]

    retained = 0
    best: PromptSpec | None = None
    for k in range(1, len(texts) + 1):
        candidate = render_item_prompt(template, exemplars, TITLE_SEPARATOR.join(texts[:k]), TWO_CLASS)
        if tokenizer.count(candidate.text) > budget:
            break
        best, retained = candidate, k
    if best is None:
        raise ConfigError(f"token budget {budget} cannot fit even the first news text")
    return PromptSpec(best.instruction, best.exemplars, best.query, best.label_set, best.text, retained)
