"""Hybrid keyword + vector search over one user's live entries.

The "semantic" space is a seeded hashed bag-of-words: each token is hashed
to one of 256 dimensions, counts accumulate, and the vector is L2
normalized. That keeps the whole retrieval path deterministic and
dependency-free; a real embedding model can stand in behind the same
vector interface. Scan is exhaustive by design, which is exact and plenty
fast at desk scale.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from math import log

import numpy as np

from .model import MemoryEntry
from .textutils import tokenize

VECTOR_DIM = 256


def _token_dim(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    ).digest()
    return int.from_bytes(digest, "little") % VECTOR_DIM


def embed(text: str, seed: int) -> np.ndarray:
    """Hashed bag-of-words vector: unit norm, or exactly zero for token-free text."""
    vec = np.zeros(VECTOR_DIM, dtype=np.float64)
    for token in tokenize(text):
        vec[_token_dim(token, seed)] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


class RetrievalIndex:
    """Term index plus vector store for one user; mutated only via the engine."""

    def __init__(self, seed: int):
        self.seed = seed
        self._doc_tokens: dict[int, Counter] = {}
        self._doc_len: dict[int, int] = {}
        self._postings: dict[str, set[int]] = {}
        self._vectors: dict[int, np.ndarray] = {}
        self._meta: dict[int, float] = {}  # id -> t_start, for rank tie-breaks
        self._matrix: np.ndarray | None = None
        self._matrix_ids: list[int] = []

    def __len__(self) -> int:
        return len(self._doc_tokens)

    def add(self, entry: MemoryEntry) -> None:
        tokens = Counter(tokenize(entry.text))
        self._doc_tokens[entry.id] = tokens
        self._doc_len[entry.id] = sum(tokens.values())
        for token in tokens:
            self._postings.setdefault(token, set()).add(entry.id)
        self._vectors[entry.id] = embed(entry.text, self.seed)
        self._meta[entry.id] = entry.t_start
        self._matrix = None

    def remove(self, entry_id: int) -> None:
        tokens = self._doc_tokens.pop(entry_id)
        del self._doc_len[entry_id]
        for token in tokens:
            ids = self._postings[token]
            ids.discard(entry_id)
            if not ids:
                del self._postings[token]
        del self._vectors[entry_id]
        del self._meta[entry_id]
        self._matrix = None

    def replace(self, entry: MemoryEntry) -> None:
        self.remove(entry.id)
        self.add(entry)

    def vector(self, entry_id: int) -> np.ndarray:
        return self._vectors[entry_id]

    def matrix(self) -> np.ndarray:
        """Stacked vectors of all live entries (row order: ascending id)."""
        if self._matrix is None:
            self._matrix_ids = sorted(self._vectors)
            if self._matrix_ids:
                self._matrix = np.vstack([self._vectors[i] for i in self._matrix_ids])
            else:
                self._matrix = np.zeros((0, VECTOR_DIM), dtype=np.float64)
        return self._matrix

    def keyword_score(self, query_tokens: list[str], entry_id: int) -> float:
        """Length-normalized tf-idf overlap; 0 when vocabularies are disjoint."""
        doc = self._doc_tokens[entry_id]
        doc_len = self._doc_len[entry_id]
        if doc_len == 0:
            return 0.0
        n_docs = len(self._doc_tokens)
        total = 0.0
        for token in set(query_tokens):
            tf = doc.get(token)
            if not tf:
                continue
            df = len(self._postings[token])
            total += tf * log(1.0 + n_docs / df)
        return total / doc_len

    def search(self, query: str, k: int, alpha: float) -> list[tuple[int, float]]:
        """Top-k by blended score; ties break to newer t_start, then smaller id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._doc_tokens:
            return []
        query_tokens = tokenize(query)
        query_vec = embed(query, self.seed)
        matrix = self.matrix()
        cosines = matrix @ query_vec
        scored = []
        for row, entry_id in enumerate(self._matrix_ids):
            s = alpha * self.keyword_score(query_tokens, entry_id) + (1.0 - alpha) * float(cosines[row])
            scored.append((entry_id, s))
        scored.sort(key=lambda pair: (-pair[1], -self._meta[pair[0]], pair[0]))
        return scored[:k]
