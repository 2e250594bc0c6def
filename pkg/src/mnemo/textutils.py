"""Tokenization and sentence splitting shared by annotation, retrieval, and summarization."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")

# Minimal stopword list used only to decide which tokens count as "content"
# when checking that a summary still carries a trace of an original turn.
STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have i in is it its me my
    of on or our so that the their them they this to was we were will with you
    your""".split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; empty text gives no tokens."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text: str) -> list[str]:
    """Split on sentence-ending punctuation followed by whitespace."""
    parts = [p.strip() for p in _SENTENCE_RE.split(text.strip())]
    return [p for p in parts if p]


def content_tokens(text: str) -> set[str]:
    return {t for t in tokenize(text) if len(t) >= 3 and t not in STOPWORDS}
