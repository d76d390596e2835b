"""
Dataset Models - ratings, catalog entries, binarized profiles, eval instances
Value records are frozen dataclasses (a MovieLens file holds a million of
them); configuration and the serialized eval instance are pydantic schemas.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


# Rating scale bounds accepted by the parsers (MovieLens 1M uses 1-5,
# the half-star releases use 0.5-5.0)
MIN_RATING = 0.5
MAX_RATING = 5.0


# ==========================================
# RECORDS
# ==========================================

@dataclass(frozen=True)
class Rating:
    user_id: int
    item_id: int
    value: float
    timestamp: int


@dataclass(frozen=True)
class Item:
    item_id: int
    raw_title: str
    display_title: str
    year: Optional[int] = None
    genres: Tuple[str, ...] = ()
    alt_titles: Tuple[str, ...] = ()


@dataclass(frozen=True)
class UserProfile:
    """Binarized ratings of one user, each list in (timestamp, item_id) order."""
    user_id: int
    positives: Tuple[int, ...]
    negatives: Tuple[int, ...] = ()


@dataclass(frozen=True)
class DatasetStats:
    total_ratings: int
    distinct_users: int
    distinct_items: int
    catalog_items: int
    positive_ratings: int
    negative_ratings: int
    discarded_ratings: int
    binarized_users: int
    filtered_users: int
    train_users: int
    test_users: int
    rating_histogram: Dict[float, int] = field(default_factory=dict)


# ==========================================
# CONFIGURATION
# ==========================================

class DatasetConfig(BaseModel):
    """Binarization, filtering and sampling parameters of the protocol."""

    model_config = ConfigDict(frozen=True)

    pos_threshold: float = 4.0
    neg_threshold: float = 2.5
    min_pos: int = Field(default=21, ge=1)
    min_neg: int = Field(default=4, ge=0)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    context_size: int = Field(default=5, ge=0)
    num_neg_candidates: int = Field(default=4, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    foreign_articles: bool = False

    @model_validator(mode="after")
    def _check_invariants(self) -> "DatasetConfig":
        if self.pos_threshold <= self.neg_threshold:
            raise ValueError("pos_threshold must be greater than neg_threshold")
        if self.min_pos < self.context_size + 1:
            raise ValueError("min_pos must be at least context_size + 1")
        return self


# ==========================================
# EVALUATION INSTANCE
# ==========================================

class Candidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    item_id: int = Field(ge=1)
    label: int = Field(ge=0, le=1)


class EvalInstance(BaseModel):
    """One test user: n liked context items and the candidates to rank."""

    model_config = ConfigDict(frozen=True)

    user_id: int = Field(ge=1)
    context_items: Tuple[int, ...]
    candidates: Tuple[Candidate, ...]

    @model_validator(mode="after")
    def _check_candidates(self) -> "EvalInstance":
        positives = sum(c.label for c in self.candidates)
        if positives != 1:
            raise ValueError(f"user {self.user_id}: expected exactly 1 positive candidate, got {positives}")
        candidate_ids = {c.item_id for c in self.candidates}
        if len(candidate_ids) != len(self.candidates):
            raise ValueError(f"user {self.user_id}: duplicate candidate items")
        if candidate_ids & set(self.context_items):
            raise ValueError(f"user {self.user_id}: context overlaps candidates")
        return self

    @property
    def positive_item(self) -> int:
        return next(c.item_id for c in self.candidates if c.label == 1)

    @property
    def candidate_ids(self) -> List[int]:
        return [c.item_id for c in self.candidates]

    def truncated(self, n: int) -> "EvalInstance":
        """Same user and candidates, first `n` context items."""
        if n > len(self.context_items):
            raise ValueError(
                f"user {self.user_id}: cannot truncate {len(self.context_items)} context items to {n}"
            )
        return self.model_copy(update={"context_items": self.context_items[:n]})
