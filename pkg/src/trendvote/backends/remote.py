"""Chat-completion HTTP client with bounded retries, in-flight cap and RPM limiter."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from typing import Callable

import httpx

from trendvote.backends.base import SUMMARY_PROMPT, ClassifierRequest, ClassifierResponse, parse_label
from trendvote.errors import AuthError, BackendError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-0301"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_KEY_ENV = "TRENDVOTE_API_KEY"

RETRYABLE_STATUS = {408, 409, 429}


class RateLimiter:
    """Spaces request starts at least ``60 / rpm`` seconds apart."""

    def __init__(self, rpm: float | None, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        self.interval = 60.0 / rpm if rpm else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            self._sleep(wait)


class RemoteBackend:
    source = "remote"

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        model_id: str = DEFAULT_MODEL,
        api_key_env: str = DEFAULT_KEY_ENV,
        max_attempts: int = 5,
        base_delay: float = 1.0,
        max_delay: float = 30.0,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        rpm: float | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        key = os.environ.get(api_key_env, "").strip()
        if not key:
            raise AuthError(f"credential environment variable {api_key_env} is not set")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.model_id = model_id
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.max_delay = max_delay
        self.max_in_flight = max_in_flight
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._limiter = RateLimiter(rpm, sleep=sleep)
        self._jitter = random.Random()
        self._count_lock = threading.Lock()
        self.calls = 0
        self.retries = 0

    def _backoff(self, attempt: int) -> float:
        delay = min(self.max_delay, self.base_delay * 2**attempt)
        return delay + self._jitter.uniform(0, self.base_delay)

    def complete(self, prompt: str, temperature: float = 0.0, model_id: str | None = None) -> str:
        payload = {
            "model": model_id or self.model_id,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                with self._count_lock:
                    self.retries += 1
                self._sleep(self._backoff(attempt - 1))
            self._limiter.acquire()
            with self._slots:
                with self._count_lock:
                    self.calls += 1
                try:
                    resp = self._client.post(self.endpoint, json=payload, headers=self._headers)
                except httpx.TransportError as exc:
                    last = exc
                    logger.warning("attempt %d/%d: transport error %s", attempt + 1, self.max_attempts, exc)
                    continue
            status = resp.status_code
            if status in RETRYABLE_STATUS or status >= 500:
                last = BackendError(f"HTTP {status}")
                logger.warning("attempt %d/%d: HTTP %d, backing off", attempt + 1, self.max_attempts, status)
                continue
            if status >= 400:
                raise AuthError(f"endpoint rejected request with HTTP {status}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed chat-completion response: {resp.text[:200]}") from exc
            if attempt:
                logger.info("request succeeded after %d retr%s", attempt, "y" if attempt == 1 else "ies")
            return content if isinstance(content, str) else str(content)
        raise TransportError(f"gave up after {self.max_attempts} attempts: {last}")

    def classify(self, request: ClassifierRequest) -> ClassifierResponse:
        raw = self.complete(request.prompt, request.temperature, request.model_id)
        return ClassifierResponse(raw=raw, label=parse_label(raw, request.label_set), source=self.source)

    def summarize(self, article: str, n_tokens: int) -> str:
        return self.complete(SUMMARY_PROMPT.format(n=n_tokens, article=article), 0.0)
