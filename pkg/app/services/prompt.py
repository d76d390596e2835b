"""
Prompt templates
================
Builtin templates compared in the template experiment, a parser for custom
template files, and rendering into (prefix, full text) pairs. The prefix is
the template rendered over the user's context only; every candidate shares it,
so a scorer can reuse its score across the 5 candidates of a user.

Custom template file (flat key-value, parsed with python-dotenv):

    reddit_style = "Films like <m1..mn>, and <mi>"
    reddit_style.item_separator = " and "
"""

import io
import logging
from typing import Dict, Iterable, List, Optional, Sequence

from dotenv import dotenv_values

from app.errors import PromptError
from app.services.dataset import user_rng
from models.prompt_models import CANDIDATE_PLACEHOLDER, CONTEXT_PLACEHOLDER, Prompt, PromptTemplate

logger = logging.getLogger(__name__)

# Stream id of the context-shuffle generator (sampling uses stream 0)
SHUFFLE_STREAM = 1

ENUM = PromptTemplate(name="ENUM")
MOVIES_LIKE = PromptTemplate(name="MOVIES_LIKE", prefix_literal="Movies like ")
SIMILAR_TO = PromptTemplate(name="SIMILAR_TO", prefix_literal="Movies similar to ")
IF_YOU_LIKE = PromptTemplate(
    name="IF_YOU_LIKE",
    prefix_literal="if you like ",
    candidate_separator=", you will like ",
)

_SEPARATOR_KEYS = ("item_separator", "candidate_separator")


def builtin_templates() -> List[PromptTemplate]:
    return [ENUM, MOVIES_LIKE, SIMILAR_TO, IF_YOU_LIKE]


def parse_template_pattern(name: str, pattern: str) -> PromptTemplate:
    """`"literal <m1..mn> literal <mi> literal"` -> PromptTemplate."""
    ctx_at = pattern.find(CONTEXT_PLACEHOLDER)
    cand_at = pattern.find(CANDIDATE_PLACEHOLDER)
    if ctx_at < 0 or cand_at < 0:
        raise PromptError(f"template {name}: needs both {CONTEXT_PLACEHOLDER} and {CANDIDATE_PLACEHOLDER}")
    if cand_at < ctx_at:
        raise PromptError(f"template {name}: {CANDIDATE_PLACEHOLDER} must follow {CONTEXT_PLACEHOLDER}")
    separator = pattern[ctx_at + len(CONTEXT_PLACEHOLDER):cand_at]
    if not separator:
        raise PromptError(f"template {name}: empty separator before {CANDIDATE_PLACEHOLDER}")
    return PromptTemplate(
        name=name,
        prefix_literal=pattern[:ctx_at],
        candidate_separator=separator,
        suffix_literal=pattern[cand_at + len(CANDIDATE_PLACEHOLDER):],
    )


def load_templates(text: str) -> List[PromptTemplate]:
    """Parse a custom template file; separator keys override the pattern's."""
    values = dotenv_values(stream=io.StringIO(text), interpolate=False)
    patterns: Dict[str, str] = {}
    overrides: Dict[str, Dict[str, str]] = {}
    for key, value in values.items():
        if value is None:
            raise PromptError(f"template key {key!r} has no value")
        name, _, option = key.partition(".")
        if not option:
            patterns[name] = value
        elif option in _SEPARATOR_KEYS:
            overrides.setdefault(name, {})[option] = value
        else:
            raise PromptError(f"unknown template option {key!r}")

    templates = []
    for name, pattern in patterns.items():
        template = parse_template_pattern(name, pattern)
        if name in overrides:
            template = PromptTemplate(**{**template.model_dump(), **overrides[name]})
        templates.append(template)
    orphans = set(overrides) - set(patterns)
    if orphans:
        raise PromptError(f"separator overrides without a pattern: {sorted(orphans)}")
    return templates


def get_template(name: str, custom: Iterable[PromptTemplate] = ()) -> PromptTemplate:
    for template in [*custom, *builtin_templates()]:
        if template.name.lower() == name.lower():
            return template
    raise PromptError(f"unknown template {name!r}")


def shuffle_context(context_items: Sequence[int], seed: int, user_id: int) -> List[int]:
    """Seeded permutation, fixed per user so all candidates see the same order."""
    if not context_items:
        return []
    order = user_rng(seed, user_id, SHUFFLE_STREAM).permutation(len(context_items))
    return [context_items[k] for k in order]


def render(
    template: PromptTemplate,
    context_titles: Sequence[str],
    candidate_title: str,
    candidate_item: int = 0,
) -> Prompt:
    if not candidate_title.strip():
        raise PromptError("empty candidate title")

    if context_titles:
        prefix = template.prefix_literal + template.item_separator.join(context_titles)
        continuation = template.candidate_separator + candidate_title + template.suffix_literal
    else:
        # empty prompt: the literal stays, its trailing space moves to the continuation
        prefix = template.prefix_literal.rstrip()
        continuation = template.prefix_literal[len(prefix):] + candidate_title + template.suffix_literal

    full_text = (prefix + continuation).rstrip()
    return Prompt(prefix_text=prefix, full_text=full_text, candidate_item=candidate_item)


def render_generation_prompt(template: PromptTemplate, context_titles: Sequence[str], suffix: Optional[str] = ":") -> str:
    """Context-only prompt for completions, e.g. "Forrest Gump, Amelie:"."""
    text = template.prefix_literal + template.item_separator.join(context_titles)
    return (text.rstrip() + (suffix or "")).strip()
