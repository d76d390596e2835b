"""
Scoring Models - sequence scores, backend settings and the remote wire schema
"""

import math
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_NGRAM_WEIGHTS: Tuple[float, ...] = (0.1, 0.3, 0.6)


class SequenceScore(BaseModel):
    """Natural-log likelihood of a token sequence and its token count."""

    model_config = ConfigDict(frozen=True)

    total_logprob: float = 0.0
    token_count: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_empty(self) -> "SequenceScore":
        if self.token_count == 0 and self.total_logprob != 0.0:
            raise ValueError("an empty sequence must have total_logprob 0")
        if math.isnan(self.total_logprob):
            raise ValueError("total_logprob is NaN")
        return self

    @property
    def per_token(self) -> float:
        return self.total_logprob / self.token_count if self.token_count else 0.0


class NgramSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    order: int = Field(default=3, ge=1)
    weights: Tuple[float, ...] = DEFAULT_NGRAM_WEIGHTS
    unk_count: float = Field(default=1.0, gt=0.0)

    @field_validator("weights", mode="before")
    @classmethod
    def _split_weights(cls, value):
        if isinstance(value, str):
            return tuple(float(w) for w in value.split(",") if w.strip())
        return value

    @model_validator(mode="after")
    def _check_weights(self) -> "NgramSettings":
        if len(self.weights) != self.order:
            raise ValueError(f"expected {self.order} interpolation weights, got {len(self.weights)}")
        return self


class RemoteScorerConfig(BaseModel):
    """Transport settings of the HTTP language-model backend."""

    model_config = ConfigDict(frozen=True)

    endpoint: str = "http://127.0.0.1:8000"
    model_id: str = "gpt2"
    timeout: float = Field(default=30.0, gt=0.0)
    max_retries: int = Field(default=3, ge=0)
    max_batch_size: int = Field(default=16, ge=1)
    max_concurrent_requests: int = Field(default=4, ge=1)
    backoff_base: float = Field(default=0.5, ge=0.0)
    backoff_factor: float = Field(default=2.0, ge=1.0)
    api_key: Optional[str] = Field(default=None, repr=False)


# ==========================================
# WIRE PROTOCOL
# ==========================================

class ScoreRequest(BaseModel):
    model: str
    texts: List[str]


class ScoreResult(BaseModel):
    total_logprob: float
    token_count: int = Field(ge=0)


class ScoreResponse(BaseModel):
    results: List[ScoreResult]


class GenerateRequest(BaseModel):
    model: str
    prompt: str
    max_tokens: int = Field(default=32, ge=0)
    greedy: bool = True


class GenerateResponse(BaseModel):
    text: str


class ErrorResponse(BaseModel):
    error: str
