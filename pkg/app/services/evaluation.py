"""
MAP@1 evaluation harness
========================
Each test user has one held-out positive among its candidates; MAP@1 is the
share of users whose top-ranked candidate is that positive. Ties are broken
by ascending item_id and counted, so a constant scorer shows up in the report.

Experiment runners:
    compare_templates     same instances under several prompt templates
    sweep_context_size    same users and candidates, nested contexts of size n
    sweep_train_users     BPR trained on growing user samples vs zero-shot rows
    sweep_models          same instances under several scorer backends
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.errors import DatasetError, EvaluationError, LmrecError
from app.services import bpr
from app.services.dataset import PreparedDataset, build_eval_instances
from app.services.prompt import ENUM, render, shuffle_context
from app.services.scorer import Scorer
from models.bpr_models import BprConfig
from models.dataset_models import DatasetConfig, EvalInstance, UserProfile
from models.eval_models import (
    DEFAULT_CONTEXT_SIZES,
    DEFAULT_USER_COUNTS,
    EvalReport,
    RankedCandidate,
    Ranking,
    SweepRow,
    SweepSettings,
    UserResult,
)
from models.prompt_models import Prompt, PromptTemplate

logger = logging.getLogger(__name__)

RelevanceFn = Callable[[EvalInstance, int], float]

CI_LEVEL = 0.95
# Stream of the nested training-user sample in sweep_train_users
USER_SAMPLE_STREAM = 2


# ==========================================
# RELEVANCE FUNCTIONS
# ==========================================

class PromptRelevance:
    """Prompt relevance; the context order is fixed per user, shared by its candidates."""

    def __init__(
        self,
        backend: Scorer,
        template: PromptTemplate,
        titles: Mapping[int, str],
        seed: int,
        per_token: bool = False,
    ):
        self.backend = backend
        self.template = template
        self.titles = titles
        self.seed = seed
        self.per_token = per_token

    def prompt(self, instance: EvalInstance, item_id: int) -> Prompt:
        context = shuffle_context(list(instance.context_items), self.seed, instance.user_id)
        return render(self.template, [self.titles[i] for i in context], self.titles[item_id], item_id)

    def __call__(self, instance: EvalInstance, item_id: int) -> float:
        return self.backend.relevance(self.prompt(instance, item_id), per_token=self.per_token)

    def prefetch(self, instances: Sequence[EvalInstance]) -> None:
        texts = []
        for instance in instances:
            for item_id in instance.candidate_ids:
                prompt = self.prompt(instance, item_id)
                texts.extend((prompt.prefix_text, prompt.full_text))
        self.backend.prefetch(texts)


def lm_relevance(
    backend: Scorer,
    template: PromptTemplate,
    titles: Mapping[int, str],
    seed: int,
    per_token: bool = False,
) -> PromptRelevance:
    return PromptRelevance(backend, template, titles, seed, per_token)


def bpr_relevance(model: bpr.FactorModel) -> RelevanceFn:
    return lambda instance, item_id: model.predict(instance.user_id, item_id)


def oracle_relevance(instance: EvalInstance, item_id: int) -> float:
    return 1.0 if item_id == instance.positive_item else 0.0


def catalog_titles(dataset: PreparedDataset) -> dict:
    return {item_id: item.display_title for item_id, item in dataset.catalog.items()}


# ==========================================
# RANKING & MAP@1
# ==========================================

def rank_candidates(relevance_fn: RelevanceFn, instance: EvalInstance) -> Ranking:
    scored = []
    for candidate in instance.candidates:
        score = float(relevance_fn(instance, candidate.item_id))
        if math.isnan(score):
            raise EvaluationError(f"user {instance.user_id}: NaN score for item {candidate.item_id}")
        scored.append(RankedCandidate(item_id=candidate.item_id, score=score, label=candidate.label))
    scored.sort(key=lambda r: (-r.score, r.item_id))
    tie = len(scored) > 1 and scored[0].score == scored[1].score
    return Ranking(candidates=tuple(scored), tie=tie)


def bootstrap_ci(correct: np.ndarray, samples: int, seed: int) -> Tuple[float, float]:
    """Percentile interval of the mean over `samples` seeded resamples."""
    mean = float(correct.mean())
    if samples == 0 or len(correct) == 0:
        return mean, mean
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(correct), size=(samples, len(correct)))
    means = correct[picks].mean(axis=1)
    alpha = (1.0 - CI_LEVEL) / 2
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def evaluate(
    relevance_fn: RelevanceFn,
    instances: Sequence[EvalInstance],
    lenient: bool = False,
    bootstrap_samples: int = 1000,
    seed: int = 0,
    max_workers: int = 1,
) -> EvalReport:
    if not instances:
        raise EvaluationError("no instances to evaluate")

    prefetch = getattr(relevance_fn, "prefetch", None)
    if prefetch is not None:
        try:
            prefetch(instances)
        except LmrecError as exc:
            if not lenient:
                raise
            # per-instance scoring below attributes the failure to users
            logger.warning(f"[eval] bulk scoring failed, scoring instance by instance: {exc}")

    def run(instance: EvalInstance):
        try:
            return rank_candidates(relevance_fn, instance)
        except LmrecError as exc:
            if not lenient:
                raise
            return exc

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run, instances))
    else:
        outcomes = [run(instance) for instance in instances]

    rows: List[UserResult] = []
    excluded: List[Tuple[int, str]] = []
    for instance, outcome in zip(instances, outcomes):
        if isinstance(outcome, Exception):
            logger.warning(f"[eval] excluding user {instance.user_id}: {outcome}")
            excluded.append((instance.user_id, str(outcome)))
            continue
        rows.append(UserResult(
            user_id=instance.user_id,
            top_item=outcome.top.item_id,
            correct=outcome.top.label == 1,
            tie=outcome.tie,
        ))
    if not rows:
        raise EvaluationError(f"all {len(instances)} instances failed; first error: {excluded[0][1]}")

    # aggregate in user order so the bootstrap does not depend on input order
    rows.sort(key=lambda r: r.user_id)
    excluded.sort()
    correct = np.array([r.correct for r in rows], dtype=float)
    return EvalReport(
        map_at_1=float(correct.sum()) / len(rows),
        n_users=len(rows),
        ties=sum(r.tie for r in rows),
        bootstrap_ci=bootstrap_ci(correct, bootstrap_samples, seed),
        per_user=rows,
        excluded=excluded,
    )


def _evaluate_with(relevance_fn: RelevanceFn, instances: Sequence[EvalInstance], settings: SweepSettings, seed: int) -> EvalReport:
    return evaluate(
        relevance_fn,
        instances,
        lenient=settings.lenient,
        bootstrap_samples=settings.bootstrap_samples,
        seed=seed,
        max_workers=settings.max_workers,
    )


def _log_row(kind: str, row: SweepRow) -> None:
    logger.info(
        f"[eval] {kind} param={row.param} scorer={row.scorer} map@1={row.map_at_1:.4f} "
        f"ci=[{row.ci_lo:.4f}, {row.ci_hi:.4f}] ties={row.ties} users={row.n_users}"
    )


# ==========================================
# EXPERIMENT RUNNERS
# ==========================================

def compare_templates(
    backend: Scorer,
    dataset: PreparedDataset,
    templates: Sequence[PromptTemplate],
    seed: int,
    settings: SweepSettings = SweepSettings(),
) -> List[SweepRow]:
    """Only the rendered text differs between rows."""
    titles = catalog_titles(dataset)
    rows = []
    for template in templates:
        relevance_fn = lm_relevance(backend, template, titles, seed, settings.per_token)
        report = _evaluate_with(relevance_fn, dataset.instances, settings, seed)
        row = SweepRow.from_report(template.name, report, backend.backend_id, seed)
        _log_row("template", row)
        rows.append(row)
    return rows


def context_sweep_instances(dataset: PreparedDataset, cfg: DatasetConfig, max_size: int) -> List[EvalInstance]:
    """Instances with `max_size` contexts; same candidates as dataset.instances."""
    return build_eval_instances(dataset.test_profiles, dataset.catalog, cfg, context_size=max_size)


def sweep_context_size(
    backend: Scorer,
    dataset: PreparedDataset,
    cfg: DatasetConfig,
    sizes: Sequence[int] = DEFAULT_CONTEXT_SIZES,
    template: PromptTemplate = ENUM,
    seed: Optional[int] = None,
    settings: SweepSettings = SweepSettings(),
) -> List[SweepRow]:
    if not sizes:
        raise DatasetError("no context sizes to sweep")
    if min(sizes) < 0:
        raise DatasetError(f"context sizes must be >= 0: {list(sizes)}")
    seed = cfg.seed if seed is None else seed
    largest = context_sweep_instances(dataset, cfg, max(sizes))
    titles = catalog_titles(dataset)
    relevance_fn = lm_relevance(backend, template, titles, seed, settings.per_token)
    rows = []
    for size in sizes:
        instances = [instance.truncated(size) for instance in largest]
        report = _evaluate_with(relevance_fn, instances, settings, seed)
        row = SweepRow.from_report(size, report, backend.backend_id, seed)
        _log_row("context", row)
        rows.append(row)
    return rows


def nested_user_sample(profiles: Sequence[UserProfile], seed: int) -> List[UserProfile]:
    """Seeded order of the training users; the sample for count c is its first c entries."""
    ordered = sorted(profiles, key=lambda p: p.user_id)
    permutation = np.random.default_rng([seed, USER_SAMPLE_STREAM]).permutation(len(ordered))
    return [ordered[k] for k in permutation]


def context_profiles(instances: Sequence[EvalInstance]) -> List[UserProfile]:
    """Test users as seen by BPR: their context items only."""
    return [UserProfile(user_id=i.user_id, positives=tuple(i.context_items)) for i in instances]


def sweep_train_users(
    dataset: PreparedDataset,
    user_counts: Sequence[Optional[int]] = DEFAULT_USER_COUNTS,
    bpr_config: BprConfig = BprConfig(),
    baselines: Sequence[Tuple[str, RelevanceFn]] = (),
    seed: int = 0,
    settings: SweepSettings = SweepSettings(),
) -> List[SweepRow]:
    """Zero-shot rows (param 0) first, then one BPR row per user count (None = all)."""
    available = len(dataset.train_profiles)
    counts = [available if c is None else c for c in user_counts]
    for count in counts:
        if count < 1:
            raise DatasetError("BPR needs at least one training user; zero-shot rows come from baselines")
        if count > available:
            raise DatasetError(f"user count {count} exceeds the {available} available training users")

    rows = []
    for name, relevance_fn in baselines:
        report = _evaluate_with(relevance_fn, dataset.instances, settings, seed)
        row = SweepRow.from_report(0, report, name, seed)
        _log_row("users", row)
        rows.append(row)

    sample = nested_user_sample(dataset.train_profiles, seed)
    test_contexts = context_profiles(dataset.instances)
    candidate_items = sorted({c for instance in dataset.instances for c in instance.candidate_ids})
    for count in counts:
        model = bpr.train(sample[:count] + test_contexts, bpr_config, extra_items=candidate_items)
        report = _evaluate_with(bpr_relevance(model), dataset.instances, settings, seed)
        row = SweepRow.from_report(count, report, "bpr", seed)
        _log_row("users", row)
        rows.append(row)
    return rows


def sweep_models(
    backends: Sequence[Scorer],
    dataset: PreparedDataset,
    template: PromptTemplate = ENUM,
    seed: int = 0,
    settings: SweepSettings = SweepSettings(),
) -> List[SweepRow]:
    titles = catalog_titles(dataset)
    rows = []
    for backend in backends:
        relevance_fn = lm_relevance(backend, template, titles, seed, settings.per_token)
        report = _evaluate_with(relevance_fn, dataset.instances, settings, seed)
        row = SweepRow.from_report(backend.backend_id, report, backend.backend_id, seed)
        _log_row("model", row)
        rows.append(row)
    return rows
