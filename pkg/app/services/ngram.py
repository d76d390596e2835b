"""
Interpolated n-gram language model
==================================
Jelinek-Mercer interpolation of orders 1..K with fixed weights:

    P(w | h) = sum_k  lambda_k * P_k(w | last k-1 tokens of h)

P_1 is add-one style for the unknown token only: c(w) / (N + u) for seen
words and u / (N + u) for <unk>. For k >= 2, P_k is the maximum-likelihood
estimate on contexts seen in training; on an unseen context it reuses
P_{k-1}, so every interpolated distribution sums to 1 and stays > 0.

Sentences are left-padded with K-1 <s> tokens. No end token is predicted, so
log P(a + b) = log P(a) + log P(b | a) holds exactly for token sequences.
"""

import json
import logging
import math
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from app.errors import ConfigError, DatasetError
from app.services.tokenizer import tokenize
from models.scoring_models import DEFAULT_NGRAM_WEIGHTS

logger = logging.getLogger(__name__)

BOS = "<s>"
UNK = "<unk>"

WEIGHT_TOLERANCE = 1e-9

Context = Tuple[str, ...]


def check_weights(order: int, weights: Sequence[float]) -> Tuple[float, ...]:
    if order < 1:
        raise ConfigError(f"n-gram order must be >= 1, got {order}")
    weights = tuple(float(w) for w in weights)
    if len(weights) != order:
        raise ConfigError(f"expected {order} interpolation weights, got {len(weights)}")
    if any(w < 0 for w in weights) or weights[0] <= 0:
        raise ConfigError(f"weights must be >= 0 with a positive unigram weight: {weights}")
    if abs(math.fsum(weights) - 1.0) > WEIGHT_TOLERANCE:
        raise ConfigError(f"weights must sum to 1, got {math.fsum(weights)!r}")
    return weights


class NgramModel:
    """Immutable after construction; build with fit_ngram()."""

    def __init__(
        self,
        order: int,
        weights: Sequence[float],
        unigrams: Counter,
        followers: Dict[Context, Counter],
        unk_count: float = 1.0,
    ):
        self.order = order
        self.weights = check_weights(order, weights)
        self.unk_count = float(unk_count)
        self._unigrams = unigrams
        self._followers = followers
        self._context_totals = {ctx: sum(nxt.values()) for ctx, nxt in followers.items()}
        self._total = sum(unigrams.values())
        self.vocabulary = frozenset(unigrams)

    # ── Probabilities ────────────────────────────────────────────────────

    @property
    def total_tokens(self) -> int:
        return self._total

    def count(self, context: Sequence[str], word: str) -> int:
        if not context:
            return self._unigrams.get(word, 0)
        return self._followers.get(tuple(context), Counter()).get(word, 0)

    def map_token(self, token: str) -> str:
        return token if token in self.vocabulary or token == BOS else UNK

    def padded(self, tokens: Sequence[str]) -> List[str]:
        return [BOS] * (self.order - 1) + [self.map_token(t) for t in tokens]

    def prob(self, word: str, history: Sequence[str]) -> float:
        """P(word | history); history is already padded/mapped or raw tokens."""
        word = self.map_token(word)
        history = list(history)
        if len(history) < self.order - 1:
            history = [BOS] * (self.order - 1 - len(history)) + history

        if word == UNK:
            lower = self.unk_count / (self._total + self.unk_count)
        else:
            lower = self._unigrams.get(word, 0) / (self._total + self.unk_count)
        total = self.weights[0] * lower
        for k in range(2, self.order + 1):
            context = tuple(self.map_token(t) for t in history[len(history) - (k - 1):])
            followers = self._followers.get(context)
            if followers:
                lower = followers.get(word, 0) / self._context_totals[context]
            total += self.weights[k - 1] * lower
        return total

    def next_token_distribution(self, history: Sequence[str]) -> Dict[str, float]:
        dist = {word: self.prob(word, history) for word in sorted(self.vocabulary)}
        dist[UNK] = self.prob(UNK, history)
        return dist

    def continuation_logprobs(self, history: Sequence[str], tokens: Sequence[str]) -> List[float]:
        """Log-probs of `tokens` after `history`; only the last order-1 history tokens are read."""
        width = self.order - 1
        history = list(history)
        window = self.padded(history[max(len(history) - width, 0):])[-width:] if width else []
        padded = window + [self.map_token(t) for t in tokens]
        return [math.log(self.prob(padded[i + width], padded[i:i + width])) for i in range(len(tokens))]

    def token_logprobs(self, tokens: Sequence[str]) -> List[float]:
        return self.continuation_logprobs([], tokens)

    def logprob(self, tokens: Sequence[str]) -> float:
        return math.fsum(self.token_logprobs(tokens))

    def perplexity(self, sentences: Iterable[Sequence[str]]) -> float:
        logprobs: List[float] = []
        for sentence in sentences:
            logprobs.extend(self.token_logprobs(sentence))
        if not logprobs:
            return float("inf")
        return math.exp(-math.fsum(logprobs) / len(logprobs))

    # ── Derived models ───────────────────────────────────────────────────

    def with_occurrence(self, context: Sequence[str], word: str) -> "NgramModel":
        """A copy with one more observation of `word` after `context`."""
        unigrams = Counter(self._unigrams)
        followers = {ctx: Counter(nxt) for ctx, nxt in self._followers.items()}
        history = self.padded(context)[len(context):]
        unigrams[word] += 1
        for k in range(2, self.order + 1):
            ctx = tuple(history[len(history) - (k - 1):])
            followers.setdefault(ctx, Counter())[word] += 1
        return NgramModel(self.order, self.weights, unigrams, followers, self.unk_count)

    def greedy_generate(self, tokens: Sequence[str], max_tokens: int) -> List[str]:
        """Most probable next token, repeatedly; ties go to the smaller token."""
        history = self.padded(tokens)
        generated: List[str] = []
        for _ in range(max_tokens):
            context = history[len(history) - (self.order - 1):] if self.order > 1 else []
            dist = self.next_token_distribution(context)
            dist.pop(UNK, None)
            if not dist:
                break
            best = min(dist, key=lambda w: (-dist[w], w))
            generated.append(best)
            history.append(best)
        return generated

    # ── Persistence ──────────────────────────────────────────────────────

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "weights": list(self.weights),
            "unk_count": self.unk_count,
            "unigrams": dict(sorted(self._unigrams.items())),
            "followers": [
                [list(ctx), dict(sorted(nxt.items()))]
                for ctx, nxt in sorted(self._followers.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NgramModel":
        followers = {tuple(ctx): Counter(nxt) for ctx, nxt in data["followers"]}
        return cls(data["order"], data["weights"], Counter(data["unigrams"]), followers, data["unk_count"])


def _as_tokens(sentence: Union[str, Sequence[str]]) -> List[str]:
    return tokenize(sentence) if isinstance(sentence, str) else list(sentence)


def fit_ngram(
    corpus: Iterable[Union[str, Sequence[str]]],
    order: int = 3,
    weights: Optional[Sequence[float]] = None,
    unk_count: float = 1.0,
) -> NgramModel:
    """Count n-grams over sentences (raw strings are tokenized first)."""
    if weights is None:
        weights = DEFAULT_NGRAM_WEIGHTS if order == len(DEFAULT_NGRAM_WEIGHTS) else [1.0 / order] * order
    weights = check_weights(order, weights)
    unigrams: Counter = Counter()
    followers: Dict[Context, Counter] = {}
    sentences = 0
    for sentence in corpus:
        tokens = _as_tokens(sentence)
        if not tokens:
            continue
        sentences += 1
        padded = [BOS] * (order - 1) + tokens
        for i, word in enumerate(tokens):
            unigrams[word] += 1
            end = i + order - 1
            for k in range(2, order + 1):
                ctx = tuple(padded[end - (k - 1):end])
                followers.setdefault(ctx, Counter())[word] += 1
    if not unigrams:
        raise DatasetError("cannot fit an n-gram model on an empty corpus")
    logger.info(f"[ngram] order={order} sentences={sentences} tokens={sum(unigrams.values())} vocab={len(unigrams)}")
    return NgramModel(order, weights, unigrams, followers, unk_count)


def save_ngram(model: NgramModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), ensure_ascii=False), encoding="utf-8")


def load_ngram(path: Union[str, Path]) -> NgramModel:
    return NgramModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
