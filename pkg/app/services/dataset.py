"""
MovieLens dataset pipeline
==========================
Parse ratings/movies files, normalize titles, binarize ratings, filter and
split users, and build the evaluation instances (1 held-out positive plus
held-out negatives per test user, n liked context items).

Every random draw goes through numpy generators seeded with
(global seed, user_id), so per-user draws do not depend on iteration order.

Usage:
    from app.services.dataset import load_ratings, load_items, prepare_dataset

    prepared = prepare_dataset(load_ratings(path), load_items(path), DatasetConfig())
"""

import io
import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import DatasetError, ParseError
from models.dataset_models import (
    MAX_RATING,
    MIN_RATING,
    Candidate,
    DatasetConfig,
    DatasetStats,
    EvalInstance,
    Item,
    Rating,
    UserProfile,
)

logger = logging.getLogger(__name__)

FileSource = Union[str, Path, BinaryIO, bytes]

# MovieLens .dat files are Latin-1, not UTF-8
DAT_ENCODING = "latin-1"
DAT_SEPARATOR = "::"

ENGLISH_ARTICLES = ("The", "A", "An")
FOREIGN_ARTICLES = (
    "Les", "Le", "La", "L'", "Il", "Lo", "Gli", "Das", "Der", "Die", "Den", "Det",
    "El", "Los", "Las", "Un", "Une", "Des",
)

_YEAR_RE = re.compile(r"\s*\((\d{4})\)\s*$")
_ALT_RE = re.compile(r"\s*\(([^()]*)\)\s*$")
_AKA_RE = re.compile(r"^a\.k\.a\.?\s+", re.IGNORECASE)
_PANDAS_LINE_RE = re.compile(r"line (\d+)")


# ── Title normalization ──────────────────────────────────────────────────────

def _articles(foreign_articles: bool) -> Tuple[str, ...]:
    return ENGLISH_ARTICLES + FOREIGN_ARTICLES if foreign_articles else ENGLISH_ARTICLES


def _reorder_article(text: str, articles: Sequence[str]) -> str:
    for article in articles:
        suffix = f", {article}"
        if text.endswith(suffix) and len(text) > len(suffix):
            head = text[: -len(suffix)].rstrip()
            joiner = "" if article.endswith("'") else " "
            return f"{article}{joiner}{head}"
    return text


def _strip_trailing_groups(text: str) -> Tuple[str, List[str]]:
    """Remove trailing parenthesized groups; returns (rest, groups in order)."""
    groups: List[str] = []
    while True:
        match = _YEAR_RE.search(text)
        if match and match.start() > 0:
            text = text[: match.start()]
            continue
        match = _ALT_RE.search(text)
        if match and match.start() > 0:
            groups.insert(0, match.group(1).strip())
            text = text[: match.start()]
            continue
        return text.strip(), groups


def _normalize_once(text: str, articles: Sequence[str]) -> str:
    text, _ = _strip_trailing_groups(text.strip())
    return _reorder_article(text, articles).strip()


def normalize_title(raw_title: str, foreign_articles: bool = False) -> str:
    """
    "Matrix, The (1999)" -> "The Matrix".

    Drops the trailing year and any trailing alternate-title parentheticals,
    then moves a trailing article to the front. Applied until nothing changes,
    so normalize_title(normalize_title(t)) == normalize_title(t).
    """
    articles = _articles(foreign_articles)
    original = raw_title.strip()
    previous, current = None, original
    while current != previous:
        previous, current = current, _normalize_once(current, articles)
    return current or original


def split_title(raw_title: str, foreign_articles: bool = False) -> Tuple[str, Optional[int], Tuple[str, ...]]:
    """Returns (display_title, year, alternate titles)."""
    year_match = _YEAR_RE.search(raw_title.strip())
    year = int(year_match.group(1)) if year_match else None

    _, groups = _strip_trailing_groups(raw_title.strip())
    alternates: List[str] = []
    for group in groups:
        alt = normalize_title(_AKA_RE.sub("", group), foreign_articles)
        if alt and alt not in alternates:
            alternates.append(alt)
    return normalize_title(raw_title, foreign_articles), year, tuple(alternates)


# ── Parsing ──────────────────────────────────────────────────────────────────

def _read_dat(source: FileSource, n_fields: int, name: str) -> Iterator[Tuple[int, List[str]]]:
    """(file line number, fields) for every non-blank line of a `::` file."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(bytes(source))
    try:
        frame = pd.read_csv(
            source,
            sep=DAT_SEPARATOR,
            engine="python",
            header=None,
            dtype=str,
            encoding=DAT_ENCODING,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        return
    except pd.errors.ParserError as exc:
        # pandas rejects rows longer than the first one
        found = _PANDAS_LINE_RE.search(str(exc))
        raise ParseError(int(found.group(1)) if found else 0, f"expected {n_fields} fields ({exc})", name) from exc

    # skip_blank_lines=False keeps one row per file line, so row k is line k + 1
    for line_no, row in enumerate(frame.itertuples(index=False, name=None), start=1):
        fields = [value for value in row if not pd.isna(value)]
        if not any(field.strip() for field in fields):
            continue
        if len(fields) != n_fields:
            raise ParseError(line_no, f"expected {n_fields} fields, got {len(fields)}", name)
        yield line_no, fields


def _parse_rating_fields(user: str, item: str, value: str, ts: str, line_no: int, source: str) -> Rating:
    try:
        rating = Rating(int(user), int(item), float(value), int(float(ts)))
    except ValueError as exc:
        raise ParseError(line_no, f"malformed field ({exc})", source) from exc
    if rating.user_id < 1 or rating.item_id < 1:
        raise ParseError(line_no, "user_id and item_id must be positive", source)
    if not (MIN_RATING <= rating.value <= MAX_RATING) or math.isnan(rating.value):
        raise ParseError(line_no, f"rating {rating.value} outside [{MIN_RATING}, {MAX_RATING}]", source)
    return rating


def parse_ratings(source: FileSource) -> List[Rating]:
    """Parse `UserID::MovieID::Rating::Timestamp` lines (Latin-1), in file order."""
    return [
        _parse_rating_fields(*fields, line_no=line_no, source="ratings")
        for line_no, fields in _read_dat(source, 4, "ratings")
    ]


def parse_items(source: FileSource, foreign_articles: bool = False) -> List[Item]:
    """Parse `MovieID::Title::Genres` lines (Latin-1)."""
    return [
        _build_item(raw_id, raw_title, raw_genres, line_no, foreign_articles)
        for line_no, (raw_id, raw_title, raw_genres) in _read_dat(source, 3, "movies")
    ]


def _build_item(raw_id: str, raw_title: str, raw_genres: str, line_no: int, foreign_articles: bool) -> Item:
    try:
        item_id = int(raw_id)
    except ValueError as exc:
        raise ParseError(line_no, f"malformed movie id {raw_id!r}", "movies") from exc
    if item_id < 1:
        raise ParseError(line_no, "movie id must be positive", "movies")
    if not raw_title.strip():
        raise ParseError(line_no, "empty title", "movies")
    display, year, alternates = split_title(raw_title, foreign_articles)
    genres = tuple(g for g in raw_genres.split("|") if g)
    return Item(item_id, raw_title, display, year, genres, alternates)


def _read_csv(source: FileSource, required: Sequence[str], name: str) -> pd.DataFrame:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(bytes(source))
    try:
        df = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(required))
    except pd.errors.ParserError as exc:
        raise ParseError(0, f"unreadable CSV ({exc})", name) from exc
    missing = [col for col in required if col not in df.columns]
    if missing:
        raise ParseError(1, f"missing columns {missing}", name)
    return df


def parse_ratings_csv(source: FileSource) -> List[Rating]:
    """Comma-separated half-star format with header `userId,movieId,rating,timestamp`."""
    df = _read_csv(source, ("userId", "movieId", "rating", "timestamp"), "ratings")
    ratings = []
    # header is line 1
    for line_no, row in enumerate(zip(df["userId"], df["movieId"], df["rating"], df["timestamp"]), start=2):
        ratings.append(_parse_rating_fields(*row, line_no=line_no, source="ratings"))
    return ratings


def parse_items_csv(source: FileSource, foreign_articles: bool = False) -> List[Item]:
    """Comma-separated catalog with header `movieId,title,genres` (quoted titles)."""
    df = _read_csv(source, ("movieId", "title", "genres"), "movies")
    return [
        _build_item(raw_id, title, genres, line_no, foreign_articles)
        for line_no, (raw_id, title, genres) in enumerate(zip(df["movieId"], df["title"], df["genres"]), start=2)
    ]


def load_ratings(path: Union[str, Path]) -> List[Rating]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return parse_ratings_csv(path)
    return parse_ratings(path)


def load_items(path: Union[str, Path], foreign_articles: bool = False) -> List[Item]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return parse_items_csv(path, foreign_articles)
    return parse_items(path, foreign_articles)


# ── Binarization, filtering, split ───────────────────────────────────────────

def rating_histogram(ratings: Iterable[Rating]) -> Dict[float, int]:
    counts = Counter(r.value for r in ratings)
    return dict(sorted(counts.items()))


def binarize(ratings: Sequence[Rating], cfg: DatasetConfig) -> List[UserProfile]:
    """
    r >= pos_threshold -> positive, r <= neg_threshold -> negative, the rest is
    discarded. A re-rated item keeps its latest rating. Profiles come out in
    ascending user_id order.
    """
    latest: Dict[Tuple[int, int], Rating] = {}
    for rating in ratings:
        key = (rating.user_id, rating.item_id)
        previous = latest.get(key)
        if previous is None or rating.timestamp >= previous.timestamp:
            latest[key] = rating

    by_user: Dict[int, List[Rating]] = defaultdict(list)
    for rating in latest.values():
        if rating.value >= cfg.pos_threshold or rating.value <= cfg.neg_threshold:
            by_user[rating.user_id].append(rating)

    profiles = []
    for user_id in sorted(by_user):
        ordered = sorted(by_user[user_id], key=lambda r: (r.timestamp, r.item_id))
        positives = tuple(r.item_id for r in ordered if r.value >= cfg.pos_threshold)
        negatives = tuple(r.item_id for r in ordered if r.value <= cfg.neg_threshold)
        profiles.append(UserProfile(user_id, positives, negatives))
    return profiles


def filter_users(profiles: Sequence[UserProfile], cfg: DatasetConfig) -> List[UserProfile]:
    return [
        p for p in profiles
        if len(p.positives) >= cfg.min_pos and len(p.negatives) >= cfg.min_neg
    ]


def holdout_size(n_profiles: int, test_fraction: float) -> int:
    # half-up rounding, then both sides kept non-empty
    size = int(math.floor(test_fraction * n_profiles + 0.5))
    return min(max(size, 1), n_profiles - 1)


def split_users(profiles: Sequence[UserProfile], cfg: DatasetConfig) -> Tuple[List[int], List[int]]:
    """Seeded random train/test partition of user ids, each side sorted."""
    if len(profiles) < 2:
        raise DatasetError(f"need at least 2 profiles to split, got {len(profiles)}")
    user_ids = sorted(p.user_id for p in profiles)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(user_ids))
    n_test = holdout_size(len(user_ids), cfg.test_fraction)
    test_ids = sorted(user_ids[k] for k in order[:n_test])
    train_ids = sorted(user_ids[k] for k in order[n_test:])
    return train_ids, test_ids


# ── Evaluation instances ─────────────────────────────────────────────────────

def user_rng(seed: int, user_id: int, stream: int = 0) -> np.random.Generator:
    """Generator keyed by (seed, user_id, stream)."""
    return np.random.default_rng([seed, user_id, stream])


def build_eval_instance(profile: UserProfile, cfg: DatasetConfig, context_size: Optional[int] = None) -> EvalInstance:
    n = cfg.context_size if context_size is None else context_size
    positives, negatives = profile.positives, profile.negatives
    if n > len(positives) - 1:
        raise DatasetError(
            f"user {profile.user_id}: context_size {n} needs {n + 1} positives, has {len(positives)}"
        )
    if len(negatives) < cfg.num_neg_candidates:
        raise DatasetError(
            f"user {profile.user_id}: needs {cfg.num_neg_candidates} negatives, has {len(negatives)}"
        )

    # fixed order: eval positive, eval negatives, then context
    rng = user_rng(cfg.seed, profile.user_id)
    pos_index = int(rng.integers(len(positives)))
    neg_indices = rng.choice(len(negatives), size=cfg.num_neg_candidates, replace=False)
    remaining = positives[:pos_index] + positives[pos_index + 1:]
    order = rng.permutation(len(remaining))

    context = tuple(remaining[k] for k in order[:n])
    candidates = [Candidate(item_id=positives[pos_index], label=1)]
    candidates += [Candidate(item_id=negatives[k], label=0) for k in neg_indices]
    candidates.sort(key=lambda c: c.item_id)
    return EvalInstance(user_id=profile.user_id, context_items=context, candidates=tuple(candidates))


def build_eval_instances(
    test_profiles: Sequence[UserProfile],
    items: Union[Mapping[int, Item], Sequence[Item]],
    cfg: DatasetConfig,
    context_size: Optional[int] = None,
) -> List[EvalInstance]:
    """One instance per test profile, in input order."""
    if cfg.min_neg < cfg.num_neg_candidates:
        raise DatasetError(
            f"min_neg ({cfg.min_neg}) must be >= num_neg_candidates ({cfg.num_neg_candidates})"
        )
    catalog = items if isinstance(items, Mapping) else {item.item_id: item for item in items}
    instances = []
    for profile in test_profiles:
        instance = build_eval_instance(profile, cfg, context_size)
        missing = [i for i in (*instance.context_items, *instance.candidate_ids) if i not in catalog]
        if missing:
            raise DatasetError(f"user {profile.user_id}: items {missing} not in catalog")
        instances.append(instance)
    return instances


def write_instances(instances: Iterable[EvalInstance], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        for instance in instances:
            handle.write(instance.model_dump_json() + "\n")


def read_instances(path: Union[str, Path]) -> List[EvalInstance]:
    instances = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                instances.append(EvalInstance.model_validate(json.loads(line)))
            except ValueError as exc:
                raise ParseError(line_no, str(exc), "instances") from exc
    return instances


# ── Full pipeline ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PreparedDataset:
    catalog: Dict[int, Item]
    profiles: List[UserProfile]
    filtered: List[UserProfile]
    train_profiles: List[UserProfile]
    test_profiles: List[UserProfile]
    instances: List[EvalInstance]
    stats: DatasetStats

    def titles(self, item_ids: Iterable[int]) -> List[str]:
        return [self.catalog[i].display_title for i in item_ids]


def prepare_dataset(
    ratings: Sequence[Rating],
    items: Sequence[Item],
    cfg: DatasetConfig,
    context_size: Optional[int] = None,
) -> PreparedDataset:
    """Pure function of (ratings, items, cfg)."""
    catalog = {item.item_id: item for item in items}
    profiles = binarize(ratings, cfg)
    filtered = filter_users(profiles, cfg)
    logger.info(f"[dataset] {len(ratings)} ratings, {len(profiles)} binarized users, {len(filtered)} after filtering")
    train_ids, test_ids = split_users(filtered, cfg)
    by_id = {p.user_id: p for p in filtered}
    train_profiles = [by_id[u] for u in train_ids]
    test_profiles = [by_id[u] for u in test_ids]
    instances = build_eval_instances(test_profiles, catalog, cfg, context_size)

    positives = sum(len(p.positives) for p in profiles)
    negatives = sum(len(p.negatives) for p in profiles)
    stats = DatasetStats(
        total_ratings=len(ratings),
        distinct_users=len({r.user_id for r in ratings}),
        distinct_items=len({r.item_id for r in ratings}),
        catalog_items=len(catalog),
        positive_ratings=positives,
        negative_ratings=negatives,
        discarded_ratings=len(ratings) - positives - negatives,
        binarized_users=len(profiles),
        filtered_users=len(filtered),
        train_users=len(train_profiles),
        test_users=len(test_profiles),
        rating_histogram=rating_histogram(ratings),
    )
    return PreparedDataset(catalog, profiles, filtered, train_profiles, test_profiles, instances, stats)
