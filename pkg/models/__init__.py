"""
Models package for lmrec
"""

from .bpr_models import BprConfig, GradientCase
from .dataset_models import (
    Candidate,
    DatasetConfig,
    DatasetStats,
    EvalInstance,
    Item,
    Rating,
    UserProfile,
)
from .eval_models import EvalReport, RankedCandidate, Ranking, SweepRow, SweepSettings, UserResult
from .mining_models import MiningSettings, PatternCount
from .prompt_models import Prompt, PromptTemplate
from .run_models import RunConfig, ScorerKind, SweepKind
from .scoring_models import NgramSettings, RemoteScorerConfig, SequenceScore

__all__ = [
    'BprConfig',
    'GradientCase',
    'Candidate',
    'DatasetConfig',
    'DatasetStats',
    'EvalInstance',
    'Item',
    'Rating',
    'UserProfile',
    'EvalReport',
    'RankedCandidate',
    'Ranking',
    'SweepRow',
    'SweepSettings',
    'UserResult',
    'MiningSettings',
    'PatternCount',
    'Prompt',
    'PromptTemplate',
    'RunConfig',
    'ScorerKind',
    'SweepKind',
    'NgramSettings',
    'RemoteScorerConfig',
    'SequenceScore',
]
