"""
BPR Models - matrix-factorization config and gradient-check cases
"""

from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class BprConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int = Field(default=10, ge=1, description="latent dimension")
    learning_rate: float = Field(default=0.001, gt=0.0)
    epochs: int = Field(default=100, ge=1)
    reg_lambda: float = Field(default=0.01, ge=0.0)
    init_scale: float = Field(default=0.01, ge=0.0, description="sd of the Gaussian initialisation")
    seed: int = Field(default=0, ge=0, lt=2**64)
    objective_sample_size: int = Field(default=1000, ge=1, description="fixed triples used for the per-epoch objective")


class GradientCase(NamedTuple):
    """One (u, i, j) triple on explicit factor matrices."""

    user_factors: np.ndarray
    item_factors: np.ndarray
    u: int
    i: int
    j: int
