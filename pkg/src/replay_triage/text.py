"""Text preparation: attribute concatenation modes and tokenization."""

from __future__ import annotations

import re
from enum import Enum

from .events import ReplayEvent

_SPLIT_RE = re.compile(r"[^a-z0-9]+")


class FeatureMode(str, Enum):
    """Which textual attributes feed the text block of a feature vector."""

    EM = "em"
    EM_SS = "em_ss"
    EM_SS_SUMMARY = "em_ss_summary"
    EM_SUMMARY = "em_summary"

    @property
    def uses_summary(self) -> bool:
        return self in (FeatureMode.EM_SS_SUMMARY, FeatureMode.EM_SUMMARY)

    @property
    def uses_statement(self) -> bool:
        return self in (FeatureMode.EM_SS, FeatureMode.EM_SS_SUMMARY)


def compose_text(event: ReplayEvent, summary: str | None, mode: FeatureMode | str) -> str:
    """Concatenate the selected textual attributes in fixed order.

    Order is always error message, then statement string, then summary;
    absent parts contribute nothing. The result is raw text, tokenization
    happens in :func:`preprocess`.
    """
    mode = FeatureMode(mode)
    parts: list[str] = []
    if event.error_message:
        parts.append(event.error_message)
    if mode.uses_statement and event.statement_string:
        parts.append(event.statement_string)
    if mode.uses_summary and summary:
        parts.append(summary)
    return " ".join(parts)


def preprocess(text: str) -> list[str]:
    """Tokenize for vectorization.

    Lowercase, split on non-alphanumeric runs, drop pure-numeric tokens and
    tokens shorter than two characters. Numbers tend to be transaction ids,
    thread ids and timestamps, which carry no root-cause signal.
    """
    tokens = []
    for tok in _SPLIT_RE.split(text.lower()):
        if len(tok) < 2:
            continue
        if tok.isdigit():
            continue
        tokens.append(tok)
    return tokens
