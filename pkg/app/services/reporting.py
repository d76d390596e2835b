"""
Report writers
==============
Sweep tables and per-user rows are tab-separated with a header; the summary
is flat `key = value` text, one metric per line.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Union

import pandas as pd

from models.dataset_models import DatasetStats
from models.eval_models import EvalReport, SweepRow

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["param", "map_at_1", "ci_lo", "ci_hi", "ties", "n_users", "scorer", "seed"]
PER_USER_COLUMNS = ["user_id", "top_item", "correct", "tie"]
FLOAT_FORMAT = "%.6f"

FIGURE_FILES = {
    "templates": "fig1_templates.tsv",
    "context": "fig2_context.tsv",
    "users": "fig3_users.tsv",
}


def _write_tsv(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    frame.to_csv(path, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_sweep_rows(rows: Sequence[SweepRow], path: Union[str, Path]) -> None:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=SWEEP_COLUMNS)
    _write_tsv(frame, path)
    logger.info(f"[eval] wrote {len(rows)} rows to {path}")


def read_sweep_rows(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, sep="\t", dtype={"param": str, "scorer": str})


def write_per_user(report: EvalReport, path: Union[str, Path]) -> None:
    frame = pd.DataFrame(
        [[r.user_id, r.top_item, int(r.correct), int(r.tie)] for r in report.per_user],
        columns=PER_USER_COLUMNS,
    )
    _write_tsv(frame, path)


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def format_summary(values: Mapping[str, object]) -> str:
    return "".join(f"{key} = {format_value(value)}\n" for key, value in values.items())


def report_summary(report: EvalReport, extra: Optional[Mapping[str, object]] = None) -> dict:
    summary = {
        "map_at_1": report.map_at_1,
        "ci_lo": report.bootstrap_ci[0],
        "ci_hi": report.bootstrap_ci[1],
        "correct": report.correct,
        "n_users": report.n_users,
        "ties": report.ties,
        "excluded": len(report.excluded),
    }
    summary.update(extra or {})
    return summary


def stats_summary(stats: DatasetStats) -> dict:
    summary = {
        "total_ratings": stats.total_ratings,
        "distinct_users": stats.distinct_users,
        "distinct_items": stats.distinct_items,
        "catalog_items": stats.catalog_items,
        "positive_ratings": stats.positive_ratings,
        "negative_ratings": stats.negative_ratings,
        "discarded_ratings": stats.discarded_ratings,
        "binarized_users": stats.binarized_users,
        "filtered_users": stats.filtered_users,
        "train_users": stats.train_users,
        "test_users": stats.test_users,
    }
    for value, count in sorted(stats.rating_histogram.items()):
        summary[f"ratings.{value:g}"] = count
    return summary


def write_summary(values: Mapping[str, object], path: Union[str, Path]) -> None:
    Path(path).write_text(format_summary(values), encoding="utf-8")


def rows_table(rows: Iterable[SweepRow]) -> List[List[str]]:
    """String cells for console tables."""
    return [
        [str(r.param), f"{r.map_at_1:.4f}", f"[{r.ci_lo:.3f}, {r.ci_hi:.3f}]", str(r.ties), str(r.n_users), r.scorer]
        for r in rows
    ]
