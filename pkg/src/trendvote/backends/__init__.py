"""Classifier backends: remote chat completion, response cache, lexicon, plus label parsing."""

from trendvote.backends.base import (
    Classifier,
    ClassifierRequest,
    ClassifierResponse,
    parse_label,
    summarize,
)
from trendvote.backends.cache import CachedBackend, cache_key
from trendvote.backends.lexicon import LexiconBackend
from trendvote.backends.remote import RemoteBackend

__all__ = [
    "CachedBackend",
    "Classifier",
    "ClassifierRequest",
    "ClassifierResponse",
    "LexiconBackend",
    "RemoteBackend",
    "cache_key",
    "parse_label",
    "summarize",
]
