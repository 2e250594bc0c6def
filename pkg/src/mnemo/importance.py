"""Importance scoring: emotional intensity, feedback bonus, contextual uniqueness."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import EmotionState


@dataclass(frozen=True)
class ImportanceComponents:
    intensity: float
    feedback_bonus: float
    uniqueness: float

    def validate(self) -> None:
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity out of range")
        if self.feedback_bonus not in (0.0, 1.0):
            raise ValueError("feedback_bonus must be 0 or 1")
        if not 0.0 <= self.uniqueness <= 1.0:
            raise ValueError("uniqueness out of range")


def intensity(emotion: EmotionState) -> float:
    """Affect magnitude on the circumplex, capped at 1."""
    return min(1.0, math.hypot(emotion.valence, emotion.arousal))


def uniqueness(vector: np.ndarray, neighbor_vectors: np.ndarray | None) -> float:
    """1 minus the max cosine similarity to any existing live entry vector.

    Vectors are unit-norm or exactly zero (the embedder's contract), so
    cosine is a plain dot product; similarity against a zero vector is 0.
    An empty store gives 1.
    """
    if neighbor_vectors is None or len(neighbor_vectors) == 0:
        return 1.0
    best = float(np.max(neighbor_vectors @ vector))
    return max(0.0, 1.0 - best)


def score(components: ImportanceComponents, weights: tuple[float, float, float]) -> float:
    """Convex blend of the three components; rejects weights not summing to 1."""
    w_e, w_f, w_u = weights
    if w_e < 0 or w_f < 0 or w_u < 0 or abs(w_e + w_f + w_u - 1.0) > 1e-9:
        raise ValueError(f"weights must be non-negative and sum to 1: {weights}")
    components.validate()
    raw = w_e * components.intensity + w_f * components.feedback_bonus + w_u * components.uniqueness
    return max(0.0, min(1.0, raw))
