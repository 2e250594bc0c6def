"""Shared domain types, canonical serialization, and byte accounting.

Every other module builds on the types here. The canonical record format is
the single source of truth for "how big is this memory": store size is the
sum of canonical serialized bytes over live entries, independent of any
index or backing file. The encoding is byte-exact and documented in the
README so snapshots compare equal across runs and languages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

FORMAT_VERSION = 1

# Day length used for the default epoch schedule, in seconds.
DAY = 86400.0


class ClockError(ValueError):
    """Ingest timestamp moved backwards for a user."""


class NotFoundError(KeyError):
    """Referenced entry id is not live."""


class InvariantViolation(RuntimeError):
    """A structural invariant failed; the store must not be trusted further."""


class JournalCorruption(RuntimeError):
    """Journal damaged before its last complete record."""


def q6(x: float) -> float:
    """Quantize a real to the 6 decimal digits the canonical format keeps."""
    return round(float(x), 6)


def f6(x: float) -> str:
    """Render a real with exactly 6 decimal digits (canonical form)."""
    return f"{float(x):.6f}"


class EntryKind(Enum):
    RAW = "raw"
    SUMMARY = "summary"
    META = "meta"


class UtteranceType(Enum):
    USER = "user"
    COMPANION = "companion"
    SYSTEM = "system"


class EmotionLabel(Enum):
    HAPPY = "happy"
    SAD = "sad"
    ANGRY = "angry"
    ANXIOUS = "anxious"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class EmotionState:
    """Valence/arousal pair plus categorical label and confidence."""

    valence: float
    arousal: float
    label: EmotionLabel
    confidence: float

    def validate(self) -> None:
        if not -1.0 <= self.valence <= 1.0:
            raise ValueError(f"valence out of range: {self.valence}")
        if not -1.0 <= self.arousal <= 1.0:
            raise ValueError(f"arousal out of range: {self.arousal}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


NEUTRAL_EMOTION = EmotionState(0.0, 0.0, EmotionLabel.NEUTRAL, 0.0)


@dataclass(frozen=True)
class MemoryEntry:
    """One unit of stored memory: a raw turn, a merge summary, or a prune meta-entry."""

    id: int
    user_id: str
    kind: EntryKind
    utterance_type: UtteranceType
    t_start: float
    t_end: float
    text: str
    emotion: EmotionState
    importance: float
    level: int
    pinned: bool
    source_ids: frozenset[int] = field(default_factory=frozenset)
    covered_count: int = 1

    def validate(self) -> None:
        self.emotion.validate()
        if self.t_start > self.t_end:
            raise ValueError(f"entry {self.id}: t_start > t_end")
        if not 0.0 <= self.importance <= 1.0:
            raise ValueError(f"entry {self.id}: importance out of range")
        if self.level < 0:
            raise ValueError(f"entry {self.id}: negative level")
        if self.covered_count < 1:
            raise ValueError(f"entry {self.id}: covered_count < 1")
        if self.kind is EntryKind.RAW:
            if self.t_start != self.t_end:
                raise ValueError(f"raw entry {self.id}: t_start != t_end")
            if self.level != 0:
                raise ValueError(f"raw entry {self.id}: level != 0")
            if self.source_ids:
                raise ValueError(f"raw entry {self.id}: source_ids not empty")
            if self.covered_count != 1:
                raise ValueError(f"raw entry {self.id}: covered_count != 1")
        else:
            if not self.source_ids:
                raise ValueError(f"{self.kind.value} entry {self.id}: no source_ids")

    def with_pin(self, pinned: bool, importance: float) -> "MemoryEntry":
        return replace(self, pinned=pinned, importance=q6(importance))

    def with_text(self, text: str) -> "MemoryEntry":
        return replace(self, text=text)


def entry_to_record(entry: MemoryEntry) -> dict:
    """The flat key/value form behind the canonical encoding (and journal payloads)."""
    return {
        "covered_count": entry.covered_count,
        "emotion_arousal": f6(entry.emotion.arousal),
        "emotion_confidence": f6(entry.emotion.confidence),
        "emotion_label": entry.emotion.label.value,
        "emotion_valence": f6(entry.emotion.valence),
        "id": entry.id,
        "importance": f6(entry.importance),
        "kind": entry.kind.value,
        "level": entry.level,
        "pinned": entry.pinned,
        "source_ids": sorted(entry.source_ids),
        "t_end": f6(entry.t_end),
        "t_start": f6(entry.t_start),
        "text": entry.text,
        "user_id": entry.user_id,
        "utterance_type": entry.utterance_type.value,
    }


def canonical_serialize(entry: MemoryEntry) -> bytes:
    """Encode an entry as its canonical byte record.

    Flat JSON object, keys in lexicographic order, compact separators, no
    insignificant whitespace, UTF-8. Reals are rendered as strings with
    exactly 6 decimal digits; enums as their lowercase names; source_ids as
    a sorted integer array. decode(encode(e)) == e for any valid entry whose
    reals are 6-decimal quantized (all construction paths quantize).
    """
    record = entry_to_record(entry)
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def entry_from_record(rec: dict) -> MemoryEntry:
    entry = MemoryEntry(
        id=int(rec["id"]),
        user_id=rec["user_id"],
        kind=EntryKind(rec["kind"]),
        utterance_type=UtteranceType(rec["utterance_type"]),
        t_start=float(rec["t_start"]),
        t_end=float(rec["t_end"]),
        text=rec["text"],
        emotion=EmotionState(
            valence=float(rec["emotion_valence"]),
            arousal=float(rec["emotion_arousal"]),
            label=EmotionLabel(rec["emotion_label"]),
            confidence=float(rec["emotion_confidence"]),
        ),
        importance=float(rec["importance"]),
        level=int(rec["level"]),
        pinned=bool(rec["pinned"]),
        source_ids=frozenset(int(i) for i in rec["source_ids"]),
        covered_count=int(rec["covered_count"]),
    )
    entry.validate()
    return entry


def canonical_deserialize(data: bytes | str) -> MemoryEntry:
    """Decode a canonical record back into a MemoryEntry."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return entry_from_record(json.loads(data))


def entry_bytes(entry: MemoryEntry) -> int:
    """Canonical serialized size of one entry, the unit of all byte accounting."""
    return len(canonical_serialize(entry))


@dataclass(frozen=True)
class EpochConfig:
    """Geometric time-level schedule: level-L boundary age is base_duration * growth_factor**L."""

    base_duration: float = DAY
    growth_factor: float = 2.0
    max_level: int = 8

    def validate(self) -> None:
        if self.base_duration <= 0:
            raise ValueError("epoch base_duration must be positive")
        if self.growth_factor <= 1.0:
            raise ValueError("epoch growth_factor must be > 1")
        if self.max_level < 1:
            raise ValueError("epoch max_level must be >= 1")


@dataclass(frozen=True)
class EngineConfig:
    """All engine tunables; the single source of configuration.

    Durations are in seconds. Weights are (emotion, feedback, uniqueness)
    and must sum to 1. Watermarks are per-user canonical bytes: the high
    mark activates pruning, the low mark is its target (hysteresis).
    """

    epoch: EpochConfig = field(default_factory=EpochConfig)
    importance_weights: tuple[float, float, float] = (0.5, 0.2, 0.3)
    high_watermark_bytes: int = 64 * 1024
    low_watermark_bytes: int = 16 * 1024
    summary_cap_chars: int = 350
    retrieval_alpha: float = 0.5
    compaction_period: float = DAY
    ema_halflife: float = 6 * 3600.0
    checkin_valence_threshold: float = -0.3
    checkin_window: float = 12 * 3600.0
    checkin_reminder_lead: float = DAY
    rng_seed: int = 42

    def validate(self) -> None:
        self.epoch.validate()
        w = self.importance_weights
        if len(w) != 3 or any(x < 0 for x in w):
            raise ValueError("importance_weights must be three non-negative reals")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"importance_weights must sum to 1, got {sum(w)}")
        if self.high_watermark_bytes <= 0 or self.low_watermark_bytes <= 0:
            raise ValueError("watermarks must be positive")
        if self.low_watermark_bytes >= self.high_watermark_bytes:
            raise ValueError("low watermark must be below high watermark")
        if self.summary_cap_chars <= 0:
            raise ValueError("summary_cap_chars must be positive")
        if not 0.0 <= self.retrieval_alpha <= 1.0:
            raise ValueError("retrieval_alpha must be in [0, 1]")
        if self.compaction_period <= 0:
            raise ValueError("compaction_period must be positive")
        if self.ema_halflife <= 0:
            raise ValueError("ema_halflife must be positive")
        if self.checkin_window <= 0:
            raise ValueError("checkin_window must be positive")
        if self.checkin_reminder_lead < 0:
            raise ValueError("checkin_reminder_lead must be non-negative")

    def config_hash(self) -> str:
        import hashlib

        blob = repr(self).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, items: dict[str, str]) -> "EngineConfig":
        """Build a config from flat key=value strings, rejecting unknown keys."""
        base = cls()
        epoch = {
            "base_duration": base.epoch.base_duration,
            "growth_factor": base.epoch.growth_factor,
            "max_level": base.epoch.max_level,
        }
        kwargs: dict = {}
        weights = list(base.importance_weights)
        for key, value in items.items():
            if key == "epoch_base_duration":
                epoch["base_duration"] = float(value)
            elif key == "epoch_growth_factor":
                epoch["growth_factor"] = float(value)
            elif key == "epoch_max_level":
                epoch["max_level"] = int(value)
            elif key == "importance_weight_emotion":
                weights[0] = float(value)
            elif key == "importance_weight_feedback":
                weights[1] = float(value)
            elif key == "importance_weight_uniqueness":
                weights[2] = float(value)
            elif key in ("high_watermark_bytes", "low_watermark_bytes", "summary_cap_chars", "rng_seed"):
                kwargs[key] = int(value)
            elif key in (
                "retrieval_alpha",
                "compaction_period",
                "ema_halflife",
                "checkin_valence_threshold",
                "checkin_window",
                "checkin_reminder_lead",
            ):
                kwargs[key] = float(value)
            else:
                raise ValueError(f"unknown config key: {key}")
        cfg = cls(
            epoch=EpochConfig(epoch["base_duration"], epoch["growth_factor"], epoch["max_level"]),
            importance_weights=(weights[0], weights[1], weights[2]),
            **kwargs,
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "EngineConfig":
        """Parse a flat key=value config file; blank lines and # comments ignored."""
        items: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                items[key.strip()] = value.strip()
        return cls.from_mapping(items)
