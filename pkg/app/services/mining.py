"""
Prompt mining
=============
Find catalog titles in a free-text corpus, replace each mention with a
single <m> token, and count the 3-6 token windows around the mentions.
The same matcher post-processes free-text completions back into item ids.

Matching rules:
    - titles and text go through the scorer's tokenizer (lowercase, punctuation split)
    - titles shorter than `min_tokens` tokens, and stop titles, are not indexed
    - overlapping matches: longest wins, then earliest start
"""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import pandas as pd

from app.errors import ConfigError, DatasetError
from app.services.tokenizer import tokenize
from models.dataset_models import Item
from models.mining_models import ITEM_TAG, MAX_PATTERN_TOKENS, MIN_PATTERN_TOKENS, PatternCount

logger = logging.getLogger(__name__)

DEFAULT_MIN_TOKENS = 2

# Titles that are also everyday phrases
DEFAULT_STOP_TITLES = frozenset({
    "the game",
    "the net",
    "the fan",
    "the kid",
    "the rock",
    "the end",
    "the one",
    "the thing",
    "the others",
    "the story",
    "the movie",
    "the film",
    "the first",
    "the mask",
    "the client",
})

_END = object()

Span = Tuple[int, int, int]  # start, end (exclusive), item_id


class TitleMatcher:
    """Token trie over normalized titles."""

    def __init__(self, min_tokens: int = DEFAULT_MIN_TOKENS, stop_titles: Iterable[str] = DEFAULT_STOP_TITLES):
        self.min_tokens = min_tokens
        self.stop_titles = frozenset(" ".join(tokenize(t)) for t in stop_titles)
        self.excluded: List[str] = []
        self._root: Dict = {}
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, title: str, item_id: int) -> bool:
        tokens = tokenize(title)
        key = " ".join(tokens)
        if len(tokens) < self.min_tokens or key in self.stop_titles:
            self.excluded.append(key)
            return False
        node = self._root
        for token in tokens:
            node = node.setdefault(token, {})
        current = node.get(_END)
        if current is None:
            self._size += 1
            node[_END] = item_id
        else:
            # the same title under two ids resolves to the smaller id
            node[_END] = min(current, item_id)
        return True

    def find_all(self, tokens: Sequence[str]) -> List[Span]:
        """Every indexed title occurrence, overlapping ones included."""
        spans: List[Span] = []
        for start in range(len(tokens)):
            node = self._root
            for end in range(start, len(tokens)):
                node = node.get(tokens[end])
                if node is None:
                    break
                if _END in node:
                    spans.append((start, end + 1, node[_END]))
        return spans

    def match(self, tokens: Sequence[str]) -> List[Span]:
        """Non-overlapping matches in text order."""
        chosen: List[Span] = []
        taken = [False] * len(tokens)
        for start, end, item_id in sorted(self.find_all(tokens), key=lambda s: (s[0] - s[1], s[0])):
            if any(taken[start:end]):
                continue
            taken[start:end] = [True] * (end - start)
            chosen.append((start, end, item_id))
        chosen.sort()
        return chosen


def build_matcher(
    items: Iterable[Item],
    min_tokens: int = DEFAULT_MIN_TOKENS,
    stop_titles: Iterable[str] = DEFAULT_STOP_TITLES,
) -> TitleMatcher:
    items = list(items)
    if not items:
        raise DatasetError("cannot build a title matcher from an empty catalog")
    if min_tokens < 1:
        raise ConfigError(f"min_tokens must be >= 1, got {min_tokens}")
    matcher = TitleMatcher(min_tokens, stop_titles)
    for item in items:
        for title in (item.display_title, *item.alt_titles):
            matcher.add(title, item.item_id)
    logger.info(
        f"[mining] matcher indexes {len(matcher)} titles; excluded {len(matcher.excluded)} "
        f"(min_tokens={min_tokens}, {len(matcher.stop_titles)} stop titles)"
    )
    if matcher.excluded:
        logger.debug(f"[mining] excluded titles: {sorted(set(matcher.excluded))[:50]}")
    return matcher


# ── Tagging ──────────────────────────────────────────────────────────────────

def tag_line(line: str, matcher: TitleMatcher) -> Optional[List[str]]:
    """Tokens of `line` with each title replaced by <m>; None when nothing matched."""
    tokens = tokenize(line)
    spans = matcher.match(tokens)
    if not spans:
        return None
    tagged: List[str] = []
    cursor = 0
    for start, end, _ in spans:
        tagged.extend(tokens[cursor:start])
        tagged.append(ITEM_TAG)
        cursor = end
    tagged.extend(tokens[cursor:])
    return tagged


def tag_corpus(lines: Iterable[str], matcher: TitleMatcher) -> Iterator[str]:
    """Tagged lines (tokens joined by single spaces); lines without a title are dropped."""
    for line in lines:
        tagged = tag_line(line, matcher)
        if tagged is not None:
            yield " ".join(tagged)


def extract_items(text: str, matcher: TitleMatcher) -> List[int]:
    seen: Dict[int, None] = {}
    for _, _, item_id in matcher.match(tokenize(text)):
        seen.setdefault(item_id, None)
    return list(seen)


# ── Counting ─────────────────────────────────────────────────────────────────

def _check_window(n_min: int, n_max: int) -> None:
    if not MIN_PATTERN_TOKENS <= n_min <= n_max <= MAX_PATTERN_TOKENS:
        raise ConfigError(
            f"pattern sizes must satisfy {MIN_PATTERN_TOKENS} <= n_min <= n_max <= {MAX_PATTERN_TOKENS}, "
            f"got {n_min}..{n_max}"
        )


def count_pattern_table(
    tagged_lines: Iterable[Union[str, Sequence[str]]],
    n_min: int = MIN_PATTERN_TOKENS,
    n_max: int = MAX_PATTERN_TOKENS,
) -> Counter:
    """Unranked window counts; windows never cross a line boundary."""
    _check_window(n_min, n_max)
    table: Counter = Counter()
    for line in tagged_lines:
        tokens = line.split() if isinstance(line, str) else list(line)
        for n in range(n_min, n_max + 1):
            for start in range(len(tokens) - n + 1):
                window = tuple(tokens[start:start + n])
                if ITEM_TAG in window:
                    table[window] += 1
    return table


def merge_tables(tables: Iterable[Counter]) -> Counter:
    merged: Counter = Counter()
    for table in tables:
        merged.update(table)
    return merged


def rank_patterns(table: Counter, top_k: Optional[int] = None) -> List[PatternCount]:
    ranked = sorted(table.items(), key=lambda kv: (-kv[1], " ".join(kv[0])))
    if top_k is not None:
        ranked = ranked[:top_k]
    return [PatternCount(pattern=pattern, count=count) for pattern, count in ranked]


def count_patterns(
    tagged_lines: Iterable[Union[str, Sequence[str]]],
    n_min: int = MIN_PATTERN_TOKENS,
    n_max: int = MAX_PATTERN_TOKENS,
) -> List[PatternCount]:
    """Count-descending, ties by pattern text."""
    return rank_patterns(count_pattern_table(tagged_lines, n_min, n_max))


def count_patterns_chunked(
    chunks: Iterable[Sequence[str]],
    n_min: int = MIN_PATTERN_TOKENS,
    n_max: int = MAX_PATTERN_TOKENS,
    max_workers: int = 4,
) -> List[PatternCount]:
    """Count line-partitioned chunks concurrently, merge, then rank."""
    _check_window(n_min, n_max)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        tables = list(pool.map(lambda chunk: count_pattern_table(chunk, n_min, n_max), chunks))
    return rank_patterns(merge_tables(tables))


def chunk_lines(lines: Iterable[str], chunk_size: int) -> Iterator[List[str]]:
    chunk: List[str] = []
    for line in lines:
        chunk.append(line)
        if len(chunk) >= chunk_size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


# ── Corpus I/O ───────────────────────────────────────────────────────────────

def read_corpus_lines(
    path: Union[str, Path],
    column: Optional[int] = None,
    delimiter: str = "\t",
    chunk_size: int = 50_000,
) -> Iterator[str]:
    """One comment per line, or one field per row of a delimited dump."""
    path = Path(path)
    if column is None:
        with path.open("r", encoding="utf-8", errors="replace") as fh:
            for line in fh:
                yield line.rstrip("\r\n")
        return

    reader = pd.read_csv(
        path,
        sep=delimiter,
        header=None,
        usecols=[column],
        dtype=str,
        keep_default_na=False,
        chunksize=chunk_size,
        encoding="utf-8",
        encoding_errors="replace",
        on_bad_lines="warn",
    )
    for frame in reader:
        yield from frame[column].tolist()


def format_pattern(pattern: PatternCount) -> str:
    return f"{pattern.text}\t{pattern.count}"


def write_pattern_table(patterns: Iterable[PatternCount], path: Union[str, Path]) -> int:
    rows = [format_pattern(p) for p in patterns]
    Path(path).write_text("".join(row + "\n" for row in rows), encoding="utf-8")
    logger.info(f"[mining] wrote {len(rows)} patterns to {path}")
    return len(rows)
