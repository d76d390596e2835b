"""
Mining Models - ranked corpus patterns around item mentions
"""

from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

ITEM_TAG = "<m>"
MIN_PATTERN_TOKENS = 3
MAX_PATTERN_TOKENS = 6


class PatternCount(BaseModel):
    model_config = ConfigDict(frozen=True)

    pattern: Tuple[str, ...]
    count: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_pattern(self) -> "PatternCount":
        if not MIN_PATTERN_TOKENS <= len(self.pattern) <= MAX_PATTERN_TOKENS:
            raise ValueError(f"pattern length {len(self.pattern)} outside {MIN_PATTERN_TOKENS}..{MAX_PATTERN_TOKENS}")
        if ITEM_TAG not in self.pattern:
            raise ValueError(f"pattern {self.pattern} has no {ITEM_TAG}")
        return self

    @property
    def text(self) -> str:
        return " ".join(self.pattern)


class MiningSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_tokens: int = Field(default=2, ge=1)
    n_min: int = Field(default=MIN_PATTERN_TOKENS, ge=MIN_PATTERN_TOKENS, le=MAX_PATTERN_TOKENS)
    n_max: int = Field(default=MAX_PATTERN_TOKENS, ge=MIN_PATTERN_TOKENS, le=MAX_PATTERN_TOKENS)
    top_k: int = Field(default=50, ge=1)
    column: Optional[int] = Field(default=None, ge=0, description="field index of a delimited dump")
    delimiter: str = "\t"
    chunk_size: int = Field(default=50_000, ge=1)
    max_workers: int = Field(default=4, ge=1)
    stop_titles_path: Optional[Path] = None

    @model_validator(mode="after")
    def _check_sizes(self) -> "MiningSettings":
        if self.n_min > self.n_max:
            raise ValueError("n_min must not exceed n_max")
        return self
