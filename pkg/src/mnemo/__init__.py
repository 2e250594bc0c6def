"""mnemo: progressive-compression long-term memory for conversational agents."""

from .compaction import CompactionReport, compact_pass, level_for_age, summarize_extractive
from .emotion import LexiconAnnotator, UserBaseline, annotate_lexicon, classify_quadrant, update_baseline
from .engagement import (
    CheckInEvent,
    EmotionTrend,
    PropensityWeight,
    Response,
    apply_engagement_feedback,
    decide_checkin,
    update_trend,
)
from .importance import ImportanceComponents, intensity, score, uniqueness
from .model import (
    ClockError,
    EmotionLabel,
    EmotionState,
    EngineConfig,
    EntryKind,
    EpochConfig,
    InvariantViolation,
    JournalCorruption,
    MemoryEntry,
    NotFoundError,
    UtteranceType,
    canonical_deserialize,
    canonical_serialize,
    entry_bytes,
)
from .pruning import PruneReport, plan_prune, select_threshold, should_activate
from .retrieval import RetrievalIndex, embed
from .store import Feedback, MemoryEngine

__version__ = "0.1.0"

__all__ = [
    "CheckInEvent",
    "ClockError",
    "CompactionReport",
    "EmotionLabel",
    "EmotionState",
    "EmotionTrend",
    "EngineConfig",
    "EntryKind",
    "EpochConfig",
    "Feedback",
    "ImportanceComponents",
    "InvariantViolation",
    "JournalCorruption",
    "LexiconAnnotator",
    "MemoryEngine",
    "MemoryEntry",
    "NotFoundError",
    "PropensityWeight",
    "PruneReport",
    "Response",
    "RetrievalIndex",
    "UserBaseline",
    "UtteranceType",
    "annotate_lexicon",
    "apply_engagement_feedback",
    "canonical_deserialize",
    "canonical_serialize",
    "classify_quadrant",
    "compact_pass",
    "decide_checkin",
    "embed",
    "entry_bytes",
    "intensity",
    "level_for_age",
    "plan_prune",
    "score",
    "select_threshold",
    "should_activate",
    "summarize_extractive",
    "uniqueness",
    "update_baseline",
    "update_trend",
]
