"""
Error hierarchy for lmrec
=========================
Library code raises these; only cli.py turns them into exit codes and
server.py into JSON error bodies.
"""

from typing import Optional


class LmrecError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(LmrecError):
    """Malformed input line. `line_no` is 1-based."""

    def __init__(self, line_no: int, message: str, source: str = "input"):
        self.line_no = line_no
        self.source = source
        super().__init__(f"{source}: line {line_no}: {message}")


class DatasetError(LmrecError):
    """Protocol precondition not met (too few profiles, positives, negatives...)."""


class ConfigError(LmrecError):
    """Invalid or inconsistent configuration."""


class UnknownEntityError(LmrecError, KeyError):
    """A user or item id that a model has never indexed."""

    def __init__(self, kind: str, entity_id: int):
        self.kind = kind
        self.entity_id = entity_id
        super().__init__(f"unknown {kind}: {entity_id}")

    def __str__(self) -> str:
        return f"unknown {self.kind}: {self.entity_id}"


class ScorerTransportError(LmrecError):
    """Remote scoring failed after retries."""

    def __init__(
        self,
        message: str,
        endpoint: str,
        status_code: Optional[int] = None,
        cause: Optional[str] = None,
    ):
        self.endpoint = endpoint
        self.status_code = status_code
        self.cause = cause
        detail = f"status={status_code}" if status_code is not None else f"cause={cause}"
        super().__init__(f"{message} ({endpoint}, {detail})")


class UnsupportedOperationError(LmrecError):
    """The selected backend cannot perform the requested operation."""


class PromptError(LmrecError, ValueError):
    """Template cannot be parsed or rendered."""


class EvaluationError(LmrecError):
    """An instance could not be ranked, or nothing was left to evaluate."""
