"""Offline keyword classifier driven by a signed phrase lexicon."""

from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path
from typing import Mapping

from trendvote.backends.base import ClassifierRequest, ClassifierResponse, parse_label
from trendvote.labels import ItemLabel
from trendvote.prompting import extract_query


def default_lexicon() -> dict[str, float]:
    text = resources.files("trendvote.data").joinpath("lexicon.json").read_text(encoding="utf-8")
    return json.loads(text)


class LexiconBackend:
    """Scores only the query text; exemplars in the prompt are ignored.

    Score > 0 reads Up, < 0 Down. A zero score (including no match) is
    Irrelevant in 3-class mode and Up in 2-class mode.
    """

    source = "lexicon"

    def __init__(self, lexicon: Mapping[str, float] | None = None, model_id: str = "lexicon"):
        self.lexicon = dict(default_lexicon() if lexicon is None else lexicon)
        self.model_id = model_id
        self._patterns = [
            (re.compile(rf"(?<!\w){re.escape(phrase)}(?!\w)", re.IGNORECASE), float(weight))
            for phrase, weight in self.lexicon.items()
        ]

    @classmethod
    def from_file(cls, path: str | Path, model_id: str = "lexicon") -> "LexiconBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), model_id=model_id)

    def score(self, text: str) -> float:
        return sum(weight * len(pattern.findall(text)) for pattern, weight in self._patterns)

    def read(self, text: str, three_class: bool = True) -> ItemLabel:
        s = self.score(text)
        if s > 0:
            return ItemLabel.UP
        if s < 0:
            return ItemLabel.DOWN
        return ItemLabel.IRRELEVANT if three_class else ItemLabel.UP

    def classify(self, request: ClassifierRequest) -> ClassifierResponse:
        label = self.read(extract_query(request.prompt), ItemLabel.IRRELEVANT in request.label_set)
        raw = f"Label: {label}"
        return ClassifierResponse(raw=raw, label=parse_label(raw, request.label_set), source=self.source)
