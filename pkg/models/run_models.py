"""
Run Models - the resolved configuration of one command
"""

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .bpr_models import BprConfig
from .dataset_models import DatasetConfig
from .eval_models import SweepSettings
from .mining_models import MiningSettings
from .scoring_models import NgramSettings, RemoteScorerConfig


class ScorerKind(str, Enum):
    NGRAM = "ngram"
    REMOTE = "remote"
    RANDOM = "random"
    POPULARITY = "popularity"


class SweepKind(str, Enum):
    TEMPLATES = "templates"
    CONTEXT = "context"
    USERS = "users"
    MODELS = "models"


class RunConfig(BaseModel):
    """
    Flat config file keys map onto this tree with dots:

        ratings_path = ml-1m/ratings.dat
        dataset.min_pos = 21
        bpr.d = 10
        remote.endpoint = http://127.0.0.1:8000
    """

    model_config = ConfigDict(extra="forbid")

    ratings_path: Optional[Path] = None
    movies_path: Optional[Path] = None
    corpus_path: Optional[Path] = None
    model_path: Optional[Path] = None
    templates_path: Optional[Path] = None
    out_dir: Path = Path("out")

    seed: int = Field(default=0, ge=0, lt=2**64)
    scorer: ScorerKind = ScorerKind.NGRAM
    template: str = "ENUM"
    models: str = Field(default="", description="comma-separated remote model ids for the models sweep")

    dataset: DatasetConfig = DatasetConfig()
    bpr: BprConfig = BprConfig()
    ngram: NgramSettings = NgramSettings()
    remote: RemoteScorerConfig = RemoteScorerConfig()
    mining: MiningSettings = MiningSettings()
    sweep: SweepSettings = SweepSettings()
