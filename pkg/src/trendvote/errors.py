"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class TrendVoteError(Exception):
    pass


class DataValidationError(TrendVoteError):
    """Input data violates a format or invariant."""


class RecordParseError(DataValidationError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class ConfigError(TrendVoteError):
    pass


class TemplateError(ConfigError):
    pass


class BackendError(TrendVoteError):
    pass


class LabelParseError(BackendError):
    def __init__(self, raw: str, label_set=()):
        self.raw = raw
        names = ", ".join(str(label) for label in label_set)
        super().__init__(f"no label among [{names}] found in model output: {raw!r}")


class AuthError(BackendError):
    """Non-retryable 4xx from the endpoint, or a missing credential."""


class TransportError(BackendError):
    """Retries exhausted."""


class CacheMissError(BackendError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"replay cache miss for digest {digest}")


class CacheIntegrityError(BackendError):
    pass


class RunAborted(TrendVoteError):
    pass
