"""
Shared fixtures: a planted two-cluster catalog.

Items 1-24 are "Alpha Axx" titles, items 25-48 "Beta Bxx". Odd users like
every Alpha title and dislike eight Beta ones, even users the reverse. The
companion corpus lists title pairs from the same cluster, Beta pairs twice,
so an n-gram model learns "Alpha follows Alpha" while preferring Beta when
there is no context at all.
"""

from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import pytest

from app.services.dataset import prepare_dataset, split_title
from models.dataset_models import DatasetConfig, Item, Rating

CLUSTER_SIZE = 24
N_USERS = 50
DISLIKED_PER_USER = 8


def alpha_ids():
    return list(range(1, CLUSTER_SIZE + 1))


def beta_ids():
    return list(range(CLUSTER_SIZE + 1, 2 * CLUSTER_SIZE + 1))


def planted_title(item_id: int) -> str:
    if item_id <= CLUSTER_SIZE:
        return f"Alpha A{item_id:02d}"
    return f"Beta B{item_id - CLUSTER_SIZE:02d}"


def is_alpha(item_id: int) -> bool:
    return item_id <= CLUSTER_SIZE


def build_items():
    items = []
    for item_id in alpha_ids() + beta_ids():
        raw = f"{planted_title(item_id)} (1999)"
        display, year, alternates = split_title(raw)
        items.append(Item(item_id, raw, display, year, ("Drama",), alternates))
    return items


def build_ratings():
    ratings = []
    ts = 978300000
    for user_id in range(1, N_USERS + 1):
        liked, other = (alpha_ids(), beta_ids()) if user_id % 2 else (beta_ids(), alpha_ids())
        for item_id in liked:
            ts += 1
            ratings.append(Rating(user_id, item_id, 5.0, ts))
        for item_id in other[:DISLIKED_PER_USER]:
            ts += 1
            ratings.append(Rating(user_id, item_id, 1.0, ts))
    return ratings


def build_corpus_lines():
    lines = []
    for cluster, copies in ((alpha_ids(), 1), (beta_ids(), 2)):
        for first in cluster:
            for second in cluster:
                if first != second:
                    lines.extend([f"{planted_title(first)}, {planted_title(second)}"] * copies)
    return lines


@pytest.fixture(scope="session")
def planted_items():
    return build_items()


@pytest.fixture(scope="session")
def planted_ratings():
    return build_ratings()


@pytest.fixture(scope="session")
def planted_corpus():
    return build_corpus_lines()


@pytest.fixture(scope="session")
def planted_dataset(planted_ratings, planted_items):
    return prepare_dataset(planted_ratings, planted_items, DatasetConfig())


@pytest.fixture
def planted_files(tmp_path, planted_ratings, planted_items, planted_corpus):
    """MovieLens-format .dat files plus the corpus, written under tmp_path/data."""
    data = tmp_path / "data"
    data.mkdir()
    ratings = data / "ratings.dat"
    ratings.write_bytes("".join(
        f"{r.user_id}::{r.item_id}::{int(r.value)}::{r.timestamp}\n" for r in planted_ratings
    ).encode("latin-1"))
    movies = data / "movies.dat"
    movies.write_bytes("".join(
        f"{item.item_id}::{item.raw_title}::{'|'.join(item.genres)}\n" for item in planted_items
    ).encode("latin-1"))
    corpus = data / "corpus.txt"
    corpus.write_text("\n".join(planted_corpus) + "\n", encoding="utf-8")
    return {"ratings": ratings, "movies": movies, "corpus": corpus}
