"""Append-only JSON-lines response cache keyed by request fingerprint."""

from __future__ import annotations

import hashlib
import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from trendvote.backends.base import SUMMARY_PROMPT, ClassifierRequest, ClassifierResponse, parse_label
from trendvote.errors import CacheIntegrityError, CacheMissError, ConfigError

CACHE_FIELDS = ("key", "model_id", "temperature", "prompt", "raw", "created_at")


def fingerprint(model_id: str, temperature: float, prompt: str) -> str:
    return f"{model_id}\n{temperature:.6f}\n{prompt}"


def cache_key(model_id: str, temperature: float, prompt: str) -> str:
    return hashlib.sha256(fingerprint(model_id, temperature, prompt).encode("utf-8")).hexdigest()


class CachedBackend:
    """Read-through cache in front of ``inner``; with ``inner=None`` it only replays.

    Hits re-parse the stored raw text against the request's label set. Misses
    go to ``inner`` and are appended under a lock, so concurrent readers see a
    consistent dict and the file has a single writer.
    """

    source = "cache"

    def __init__(self, inner, path: str | Path, model_id: str | None = None):
        self.inner = inner
        self.path = Path(path)
        self.model_id = model_id or getattr(inner, "model_id", "replay")
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        self.hits = 0
        self.misses = 0
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = rec["key"]
                    expected = cache_key(rec["model_id"], float(rec["temperature"]), rec["prompt"])
                    raw = rec["raw"]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise CacheIntegrityError(f"{self.path}:{line_no}: unreadable cache entry ({exc})") from exc
                if key != expected:
                    raise CacheIntegrityError(f"{self.path}:{line_no}: digest {key} does not match its fingerprint")
                self._entries[key] = raw

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, model_id: str, temperature: float, prompt: str) -> str | None:
        return self._entries.get(cache_key(model_id, temperature, prompt))

    def _append(self, model_id: str, temperature: float, prompt: str, raw: str) -> None:
        key = cache_key(model_id, temperature, prompt)
        rec = {
            "key": key,
            "model_id": model_id,
            "temperature": temperature,
            "prompt": prompt,
            "raw": raw,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        with self._lock:
            if key in self._entries:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            self._entries[key] = raw

    def _resolve(self, model_id: str, temperature: float, prompt: str, fetch) -> tuple[str, bool]:
        raw = self.lookup(model_id, temperature, prompt)
        if raw is not None:
            with self._lock:
                self.hits += 1
            return raw, True
        if self.inner is None:
            raise CacheMissError(cache_key(model_id, temperature, prompt))
        with self._lock:
            self.misses += 1
        raw = fetch()
        self._append(model_id, temperature, prompt, raw)
        return raw, False

    def classify(self, request: ClassifierRequest) -> ClassifierResponse:
        inner_response: list[ClassifierResponse] = []

        def fetch() -> str:
            inner_response.append(self.inner.classify(request))
            return inner_response[0].raw

        raw, hit = self._resolve(request.model_id, request.temperature, request.prompt, fetch)
        if not hit:
            return inner_response[0]
        return ClassifierResponse(raw=raw, label=parse_label(raw, request.label_set), source=self.source)

    def summarize(self, article: str, n_tokens: int) -> str:
        prompt = SUMMARY_PROMPT.format(n=n_tokens, article=article)
        if self.inner is not None and not callable(getattr(self.inner, "summarize", None)):
            raise ConfigError("inner backend cannot summarize")
        raw, _ = self._resolve(self.model_id, 0.0, prompt, lambda: self.inner.summarize(article, n_tokens))
        return raw
