"""
Evaluation Models - MAP@1 reports and sweep rows
"""

from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_CONTEXT_SIZES: Tuple[int, ...] = (0, 1, 2, 3, 5, 10, 15, 20)
# None stands for "all available training users"
DEFAULT_USER_COUNTS: Tuple[Optional[int], ...] = (10, 25, 50, 100, 250, 500, 1000, None)


class RankedCandidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    item_id: int
    score: float
    label: int


class UserResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    user_id: int
    top_item: int
    correct: bool
    tie: bool


class EvalReport(BaseModel):
    map_at_1: float = Field(ge=0.0, le=1.0)
    n_users: int = Field(ge=0)
    ties: int = Field(ge=0)
    bootstrap_ci: Tuple[float, float]
    per_user: List[UserResult] = Field(default_factory=list)
    excluded: List[Tuple[int, str]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_counts(self) -> "EvalReport":
        if self.ties > self.n_users:
            raise ValueError("ties cannot exceed n_users")
        if len(self.per_user) != self.n_users:
            raise ValueError("one per-user row per evaluated user")
        return self

    @property
    def correct(self) -> int:
        return sum(r.correct for r in self.per_user)

    @property
    def ci_width(self) -> float:
        return self.bootstrap_ci[1] - self.bootstrap_ci[0]


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    param: Union[int, str]
    map_at_1: float
    ci_lo: float
    ci_hi: float
    ties: int
    n_users: int
    scorer: str
    seed: int

    @classmethod
    def from_report(cls, param: Union[int, str], report: EvalReport, scorer: str, seed: int) -> "SweepRow":
        return cls(
            param=param,
            map_at_1=report.map_at_1,
            ci_lo=report.bootstrap_ci[0],
            ci_hi=report.bootstrap_ci[1],
            ties=report.ties,
            n_users=report.n_users,
            scorer=scorer,
            seed=seed,
        )


class SweepSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    context_sizes: Tuple[int, ...] = DEFAULT_CONTEXT_SIZES
    user_counts: Tuple[Optional[int], ...] = DEFAULT_USER_COUNTS
    templates: Tuple[str, ...] = ("ENUM", "MOVIES_LIKE", "SIMILAR_TO", "IF_YOU_LIKE")
    bootstrap_samples: int = Field(default=1000, ge=0)
    max_workers: int = Field(default=1, ge=1)
    per_token: bool = False
    lenient: bool = False

    @field_validator("context_sizes", "templates", mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return value

    @field_validator("user_counts", mode="before")
    @classmethod
    def _split_counts(cls, value):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(None if v is None or str(v).lower() == "all" else int(v) for v in value)


class Ranking(BaseModel):
    """Candidates by descending score, ties by ascending item_id."""

    model_config = ConfigDict(frozen=True)

    candidates: Tuple[RankedCandidate, ...]
    tie: bool

    @property
    def top(self) -> RankedCandidate:
        return self.candidates[0]
