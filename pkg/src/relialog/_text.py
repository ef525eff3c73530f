"""Shared text normalization helpers (case and diacritic folding, tokenizing)."""

from __future__ import annotations

import re
import unicodedata

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def strip_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def fold(text: str) -> str:
    """Casefold and strip diacritics; the comparison form used across the pipeline."""
    return strip_diacritics(text).casefold()


def tokens(text: str) -> list[str]:
    """Word-ish tokens of the folded text ("[FMQ8]" yields "fmq8")."""
    return _WORD_RE.findall(fold(text))
