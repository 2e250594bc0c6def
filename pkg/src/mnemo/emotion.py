"""Pluggable emotion annotation with a deterministic lexicon default.

The default annotator averages per-word (valence, arousal) from the bundled
lexicon, subtracts the user's running neutral baseline, clamps, and labels
the result with a fixed quadrant rule. Anything smarter (learned text or
voice models) plugs in behind AnnotatorPlugin; plugins used in tests must be
pure.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from typing import Protocol

from .model import EmotionLabel, EmotionState
from .textutils import tokenize

# Quadrant rule thresholds. The label set is fixed; these cutoffs are the
# artifact's own choice of partition and are deliberately not configurable
# per entry (retrieval and replay determinism depend on them).
NEUTRAL_BAND = 0.2
ANGER_AROUSAL = 0.6


@dataclass(frozen=True)
class UserBaseline:
    """Running mean of a user's raw (pre-calibration) affect."""

    user_id: str
    mean_valence: float = 0.0
    mean_arousal: float = 0.0
    sample_count: int = 0


def update_baseline(baseline: UserBaseline, state: EmotionState) -> UserBaseline:
    """Fold one raw observation into the running means."""
    n = baseline.sample_count + 1
    return UserBaseline(
        user_id=baseline.user_id,
        mean_valence=baseline.mean_valence + (state.valence - baseline.mean_valence) / n,
        mean_arousal=baseline.mean_arousal + (state.arousal - baseline.mean_arousal) / n,
        sample_count=n,
    )


def classify_quadrant(valence: float, arousal: float) -> EmotionLabel:
    """Total, deterministic label assignment on [-1, 1]^2."""
    if abs(valence) < NEUTRAL_BAND and abs(arousal) < NEUTRAL_BAND:
        return EmotionLabel.NEUTRAL
    if valence >= NEUTRAL_BAND:
        return EmotionLabel.HAPPY
    if arousal <= -NEUTRAL_BAND:
        return EmotionLabel.SAD
    if valence <= -NEUTRAL_BAND and arousal > ANGER_AROUSAL:
        return EmotionLabel.ANGRY
    return EmotionLabel.ANXIOUS


def load_lexicon(path=None) -> dict[str, tuple[float, float]]:
    """Load a `word valence arousal` lexicon file (bundled one by default)."""
    if path is None:
        text = importlib.resources.files("mnemo.data").joinpath("lexicon.txt").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    lexicon: dict[str, tuple[float, float]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, valence, arousal = line.split()
        lexicon[word] = (float(valence), float(arousal))
    return lexicon


def _clamp(x: float) -> float:
    return max(-1.0, min(1.0, x))


class AnnotatorPlugin(Protocol):
    name: str

    def annotate(self, text: str, baseline: UserBaseline) -> EmotionState: ...

    def raw_affect(self, text: str) -> tuple[float, float, float]:
        """Pre-calibration (valence, arousal, confidence); feeds baseline updates."""
        ...


class LexiconAnnotator:
    """Deterministic lexicon-average annotator with neutral-baseline calibration."""

    name = "lexicon"

    def __init__(self, lexicon: dict[str, tuple[float, float]] | None = None):
        self.lexicon = lexicon if lexicon is not None else load_lexicon()

    def raw_affect(self, text: str) -> tuple[float, float, float]:
        tokens = tokenize(text)
        if not tokens:
            return 0.0, 0.0, 0.0
        hits = [self.lexicon[t] for t in tokens if t in self.lexicon]
        if not hits:
            return 0.0, 0.0, 0.0
        valence = sum(h[0] for h in hits) / len(hits)
        arousal = sum(h[1] for h in hits) / len(hits)
        return valence, arousal, len(hits) / len(tokens)

    def annotate(self, text: str, baseline: UserBaseline) -> EmotionState:
        raw_v, raw_a, confidence = self.raw_affect(text)
        valence = _clamp(raw_v - baseline.mean_valence)
        arousal = _clamp(raw_a - baseline.mean_arousal)
        return EmotionState(valence, arousal, classify_quadrant(valence, arousal), confidence)


def annotate_lexicon(text: str, baseline: UserBaseline) -> EmotionState:
    """Module-level convenience wrapper over a shared default annotator."""
    return _default_annotator().annotate(text, baseline)


_DEFAULT: LexiconAnnotator | None = None


def _default_annotator() -> LexiconAnnotator:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = LexiconAnnotator()
    return _DEFAULT
