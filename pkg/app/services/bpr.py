"""
Bayesian Personalized Ranking
=============================
Matrix factorisation trained with pairwise SGD on implicit positives.
Relevance of item i for user u is the plain dot product p_u . q_i.

Per-triple objective (minimised):

    L = ln(1 + exp(-x_uij)) + (lambda / 2) * (|p_u|^2 + |q_i|^2 + |q_j|^2)
    x_uij = p_u . q_i - p_u . q_j

Only UserProfile.positives enter training; every other item of the universe
(including explicit negatives) is sampleable as j.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import DatasetError, UnknownEntityError
from models.bpr_models import BprConfig, GradientCase
from models.dataset_models import UserProfile

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
# Sampling stream of the fixed objective sample (training uses the config seed alone)
OBJECTIVE_STREAM = 1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class FactorModel:
    """Trained factors; treat as read-only once built."""

    user_ids: Tuple[int, ...]
    item_ids: Tuple[int, ...]
    user_factors: np.ndarray
    item_factors: np.ndarray
    history: Tuple[Tuple[int, float], ...] = ()
    user_index: Dict[int, int] = field(init=False, repr=False)
    item_index: Dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.user_factors.shape != (len(self.user_ids), self.d):
            raise ValueError(f"user factors shape {self.user_factors.shape} does not match {len(self.user_ids)} users")
        if self.item_factors.shape != (len(self.item_ids), self.d):
            raise ValueError(f"item factors shape {self.item_factors.shape} does not match {len(self.item_ids)} items")
        self.user_index = {uid: row for row, uid in enumerate(self.user_ids)}
        self.item_index = {iid: row for row, iid in enumerate(self.item_ids)}

    @property
    def d(self) -> int:
        return int(self.user_factors.shape[1])

    def _user_row(self, user_id: int) -> int:
        try:
            return self.user_index[user_id]
        except KeyError:
            raise UnknownEntityError("user", user_id) from None

    def _item_row(self, item_id: int) -> int:
        try:
            return self.item_index[item_id]
        except KeyError:
            raise UnknownEntityError("item", item_id) from None

    def predict(self, user_id: int, item_id: int) -> float:
        return float(self.user_factors[self._user_row(user_id)] @ self.item_factors[self._item_row(item_id)])

    def score_items(self, user_id: int, item_ids: Sequence[int]) -> List[float]:
        rows = [self._item_row(i) for i in item_ids]
        return [float(s) for s in self.item_factors[rows] @ self.user_factors[self._user_row(user_id)]]


def predict(model: FactorModel, user_id: int, item_id: int) -> float:
    return model.predict(user_id, item_id)


# ── Objective ────────────────────────────────────────────────────────────────

def bpr_loss_and_gradients(
    user_factors: np.ndarray,
    item_factors: np.ndarray,
    u: int,
    i: int,
    j: int,
    reg_lambda: float,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Loss of one triple and its gradients w.r.t. both full factor matrices."""
    pu, qi, qj = user_factors[u], item_factors[i], item_factors[j]
    x = float(pu @ (qi - qj))
    e = float(_sigmoid(-x))
    loss = float(np.logaddexp(0.0, -x)) + 0.5 * reg_lambda * float(pu @ pu + qi @ qi + qj @ qj)

    grad_users = np.zeros_like(user_factors)
    grad_items = np.zeros_like(item_factors)
    grad_users[u] = -e * (qi - qj) + reg_lambda * pu
    # accumulate: i == j touches the same row twice
    grad_items[i] += -e * pu + reg_lambda * qi
    grad_items[j] += e * pu + reg_lambda * qj
    return loss, grad_users, grad_items


def gradient_check(
    cfg: BprConfig,
    case: Optional[GradientCase] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if case is None:
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        i, j = rng.choice(5, size=2, replace=False)
        case = GradientCase(
            user_factors=rng.normal(size=(3, 4)),
            item_factors=rng.normal(size=(5, 4)),
            u=int(rng.integers(3)),
            i=int(i),
            j=int(j),
        )
    users = np.array(case.user_factors, dtype=float)
    items = np.array(case.item_factors, dtype=float)
    _, grad_users, grad_items = bpr_loss_and_gradients(users, items, case.u, case.i, case.j, cfg.reg_lambda)

    def loss_at() -> float:
        return bpr_loss_and_gradients(users, items, case.u, case.i, case.j, cfg.reg_lambda)[0]

    touched = [(users, grad_users, case.u), (items, grad_items, case.i), (items, grad_items, case.j)]
    worst = 0.0
    for params, grads, row in touched:
        for k in range(params.shape[1]):
            original = params[row, k]
            params[row, k] = original + FD_STEP
            up = loss_at()
            params[row, k] = original - FD_STEP
            down = loss_at()
            params[row, k] = original
            numeric = (up - down) / (2 * FD_STEP)
            analytic = grads[row, k]
            worst = max(worst, abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric)))
    return worst


# ── Training ─────────────────────────────────────────────────────────────────

def _sample_negatives(rng: np.random.Generator, positive_mask: np.ndarray, users: np.ndarray) -> np.ndarray:
    n_items = positive_mask.shape[1]
    negatives = rng.integers(0, n_items, size=len(users))
    clash = positive_mask[users, negatives]
    while clash.any():
        negatives[clash] = rng.integers(0, n_items, size=int(clash.sum()))
        clash = positive_mask[users, negatives]
    return negatives


def _sample_objective(model_u: np.ndarray, model_v: np.ndarray, triples: Tuple[np.ndarray, np.ndarray, np.ndarray]) -> float:
    u, i, j = triples
    x = np.einsum("nd,nd->n", model_u[u], model_v[i] - model_v[j])
    return float(np.mean(-np.logaddexp(0.0, -x)))


def train(
    profiles: Sequence[UserProfile],
    cfg: BprConfig,
    extra_items: Iterable[int] = (),
) -> FactorModel:
    """SGD over |positive interactions| sampled triples per epoch."""
    user_ids = tuple(sorted({p.user_id for p in profiles if p.positives}))
    if not user_ids:
        raise DatasetError("BPR needs at least one user with a positive item")
    universe = set(extra_items)
    for profile in profiles:
        universe.update(profile.positives)
        universe.update(profile.negatives)
    item_ids = tuple(sorted(universe))
    user_index = {uid: row for row, uid in enumerate(user_ids)}
    item_index = {iid: row for row, iid in enumerate(item_ids)}

    positive_mask = np.zeros((len(user_ids), len(item_ids)), dtype=bool)
    for profile in profiles:
        if profile.user_id in user_index:
            positive_mask[user_index[profile.user_id], [item_index[i] for i in profile.positives]] = True
    saturated = np.flatnonzero(positive_mask.all(axis=1))
    if saturated.size:
        raise DatasetError(f"user {user_ids[saturated[0]]} likes every item; no negative can be sampled")

    # (u, i) pairs: uniform over pairs == u weighted by positive count, i uniform in u's positives
    pair_users, pair_items = np.nonzero(positive_mask)
    n_pairs = len(pair_users)

    rng = np.random.default_rng(cfg.seed)
    users = rng.normal(0.0, cfg.init_scale, size=(len(user_ids), cfg.d))
    items = rng.normal(0.0, cfg.init_scale, size=(len(item_ids), cfg.d))

    sample_rng = np.random.default_rng([cfg.seed, OBJECTIVE_STREAM])
    sample_pick = sample_rng.integers(0, n_pairs, size=min(cfg.objective_sample_size, n_pairs))
    sample_users = pair_users[sample_pick]
    objective_sample = (sample_users, pair_items[sample_pick], _sample_negatives(sample_rng, positive_mask, sample_users))

    logger.info(
        f"[bpr] training d={cfg.d} lr={cfg.learning_rate} reg={cfg.reg_lambda} epochs={cfg.epochs} "
        f"users={len(user_ids)} items={len(item_ids)} positives={n_pairs}"
    )
    lr, reg = cfg.learning_rate, cfg.reg_lambda
    history: List[Tuple[int, float]] = []
    for epoch in range(1, cfg.epochs + 1):
        pick = rng.integers(0, n_pairs, size=n_pairs)
        batch_users = pair_users[pick]
        batch_pos = pair_items[pick]
        batch_neg = _sample_negatives(rng, positive_mask, batch_users)
        for u, i, j in zip(batch_users, batch_pos, batch_neg):
            pu = users[u].copy()
            qi = items[i].copy()
            qj = items[j].copy()
            e = _sigmoid(-(pu @ (qi - qj)))
            users[u] += lr * (e * (qi - qj) - reg * pu)
            items[i] += lr * (e * pu - reg * qi)
            items[j] += lr * (-e * pu - reg * qj)

        objective = _sample_objective(users, items, objective_sample)
        history.append((epoch, objective))
        if epoch % 10 == 0 or epoch == cfg.epochs:
            logger.info(f"[bpr] epoch {epoch}/{cfg.epochs} mean ln sigma(x) = {objective:.6f}")
        else:
            logger.debug(f"[bpr] epoch {epoch}/{cfg.epochs} mean ln sigma(x) = {objective:.6f}")

    if not (np.isfinite(users).all() and np.isfinite(items).all()):
        raise DatasetError("BPR diverged: non-finite factors (lower the learning rate)")
    return FactorModel(user_ids, item_ids, users, items, tuple(history))


# ── Persistence ──────────────────────────────────────────────────────────────

def save_model(model: FactorModel, path: Union[str, Path]) -> None:
    with open(path, "wb") as fh:
        np.savez(
            fh,
            user_ids=np.asarray(model.user_ids, dtype=np.int64),
            item_ids=np.asarray(model.item_ids, dtype=np.int64),
            user_factors=model.user_factors,
            item_factors=model.item_factors,
            history=np.asarray(model.history, dtype=float).reshape(-1, 2),
        )
    logger.info(f"[bpr] model saved to {path}")


def load_model(path: Union[str, Path]) -> FactorModel:
    with np.load(path, allow_pickle=False) as data:
        history = tuple((int(epoch), float(value)) for epoch, value in data["history"])
        return FactorModel(
            user_ids=tuple(int(u) for u in data["user_ids"]),
            item_ids=tuple(int(i) for i in data["item_ids"]),
            user_factors=data["user_factors"].copy(),
            item_factors=data["item_factors"].copy(),
            history=history,
        )
