"""
Word tokenizer shared by the n-gram scorer and the prompt miner.

Lowercase, whitespace split, punctuation detached as separate tokens, so a
pattern mined from a corpus tokenizes the same way the scorer sees a prompt.
"""

import re
from typing import List, Sequence

_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]", re.UNICODE)
_PUNCT_RE = re.compile(r"^[^\w\s]$", re.UNICODE)


def tokenize(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


def is_punctuation(token: str) -> bool:
    return bool(_PUNCT_RE.match(token))


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens back into readable text; punctuation hugs the previous word."""
    parts: List[str] = []
    for token in tokens:
        if parts and not is_punctuation(token):
            parts.append(" ")
        parts.append(token)
    return "".join(parts)
