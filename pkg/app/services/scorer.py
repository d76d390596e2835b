"""
Relevance scorers
=================
R(u, i) = P(prompt_{u,i}): language-model backends score the candidate's
continuation after the shared per-user prefix. Because the prefix term is the
same for all 5 candidates of a user, ranking by the continuation score equals
ranking by the full-sequence score.

Backends:
    NgramScorer       exact likelihoods from the interpolated n-gram model
    RemoteScorer      HTTP language-model endpoint (app.services.remote_client)
    RandomScorer      seeded uniform scores (chance level)
    PopularityScorer  ln(1 + #training users who liked the candidate)
"""

import hashlib
import logging
import math
import threading
from abc import ABC, abstractmethod
from collections import Counter
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from app.errors import UnsupportedOperationError
from app.services.ngram import NgramModel
from app.services.tokenizer import tokenize
from models.dataset_models import UserProfile
from models.prompt_models import Prompt
from models.scoring_models import SequenceScore

logger = logging.getLogger(__name__)


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ScoreCache:
    """Per-run cache keyed by (backend id, sha256(text)); safe across threads."""

    def __init__(self):
        self._scores: Dict[Tuple[str, str], SequenceScore] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, backend_id: str, text: str) -> Optional[SequenceScore]:
        with self._lock:
            score = self._scores.get((backend_id, text_digest(text)))
            if score is None:
                self.misses += 1
            else:
                self.hits += 1
            return score

    def put(self, backend_id: str, text: str, score: SequenceScore) -> None:
        with self._lock:
            self._scores[(backend_id, text_digest(text))] = score

    def __len__(self) -> int:
        return len(self._scores)


# ── Backend base classes ─────────────────────────────────────────────────────

class Scorer(ABC):
    backend_id: str = "scorer"

    @abstractmethod
    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        ...

    def prefetch(self, texts: Iterable[str]) -> None:
        """Score ahead in bulk; backends without a round-trip cost ignore this."""

    def generate(self, prompt: str, max_tokens: int, greedy: bool = True) -> str:
        raise UnsupportedOperationError(f"backend {self.backend_id!r} does not support generation")


class LanguageModelScorer(Scorer):
    """A backend that returns natural-log sequence likelihoods."""

    def __init__(self, backend_id: str, cache: Optional[ScoreCache] = None):
        self.backend_id = backend_id
        self.cache = cache if cache is not None else ScoreCache()

    @abstractmethod
    def _score_text(self, text: str) -> SequenceScore:
        ...

    def score_full(self, text: str) -> SequenceScore:
        if not text:
            return SequenceScore()
        cached = self.cache.get(self.backend_id, text)
        if cached is not None:
            return cached
        score = self._score_text(text)
        self.cache.put(self.backend_id, text, score)
        return score

    def score_continuation(self, prefix: str, continuation: str) -> SequenceScore:
        if not continuation:
            return SequenceScore()
        full = self.score_full(prefix + continuation)
        head = self.score_full(prefix)
        return continuation_score(full.total_logprob - head.total_logprob, full.token_count - head.token_count)

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        score = self.score_continuation(prompt.prefix_text, prompt.continuation_text)
        return score.per_token if per_token else score.total_logprob


def continuation_score(total_logprob: float, token_count: int) -> SequenceScore:
    """Difference of two sequence scores; a non-zero difference counts >= 1 token."""
    if total_logprob == 0.0:
        return SequenceScore(total_logprob=0.0, token_count=max(token_count, 0))
    return SequenceScore(total_logprob=total_logprob, token_count=max(token_count, 1))


# ── n-gram backend ───────────────────────────────────────────────────────────

class NgramScorer(LanguageModelScorer):
    def __init__(self, model: NgramModel, backend_id: Optional[str] = None, cache: Optional[ScoreCache] = None):
        super().__init__(backend_id or f"ngram-k{model.order}", cache)
        self.model = model

    def _score_text(self, text: str) -> SequenceScore:
        tokens = tokenize(text)
        if not tokens:
            return SequenceScore()
        return SequenceScore(total_logprob=self.model.logprob(tokens), token_count=len(tokens))

    def score_continuation(self, prefix: str, continuation: str) -> SequenceScore:
        if not continuation:
            return SequenceScore()
        full_tokens = tokenize(prefix + continuation)
        head_tokens = tokenize(prefix)
        if full_tokens[:len(head_tokens)] != head_tokens:
            # the boundary merged two tokens: fall back to the difference of full scores
            return super().score_continuation(prefix, continuation)
        # the prefix itself is never rescored, only its last order-1 tokens are read
        logprobs = self.model.continuation_logprobs(head_tokens, full_tokens[len(head_tokens):])
        return SequenceScore(total_logprob=math.fsum(logprobs), token_count=len(logprobs))


# ── Baselines ────────────────────────────────────────────────────────────────

class RandomScorer(Scorer):
    """Uniform [0, 1) score, a pure function of (seed, full_text)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.backend_id = f"random-{seed}"

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        digest = int(text_digest(prompt.full_text)[:16], 16)
        return float(np.random.default_rng([self.seed, digest]).random())


class PopularityScorer(Scorer):
    """ln(1 + number of training users with the candidate among their positives)."""

    backend_id = "popularity"

    def __init__(self, profiles: Iterable[UserProfile]):
        self.counts: Counter = Counter()
        for profile in profiles:
            self.counts.update(set(profile.positives))

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        return math.log1p(self.counts.get(prompt.candidate_item, 0))


# ── Functional API ───────────────────────────────────────────────────────────

def _require_lm(backend: Scorer) -> LanguageModelScorer:
    if not isinstance(backend, LanguageModelScorer):
        raise UnsupportedOperationError(f"backend {backend.backend_id!r} does not return sequence likelihoods")
    return backend


def score_full(backend: Scorer, text: str) -> SequenceScore:
    return _require_lm(backend).score_full(text)


def score_continuation(backend: Scorer, prefix: str, continuation: str) -> SequenceScore:
    return _require_lm(backend).score_continuation(prefix, continuation)


def relevance(backend: Scorer, prompt: Prompt, per_token: bool = False) -> float:
    return backend.relevance(prompt, per_token=per_token)


def generate(backend: Scorer, prompt: str, max_tokens: int, greedy: bool = True) -> str:
    if type(backend).generate is Scorer.generate:
        raise UnsupportedOperationError(f"backend {backend.backend_id!r} does not support generation")
    if max_tokens == 0:
        return ""
    return backend.generate(prompt, max_tokens, greedy)
