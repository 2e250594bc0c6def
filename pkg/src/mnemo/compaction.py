"""Temporal binary compression: pairwise merging across exponential age levels.

Entries live at discrete levels. Level L holds material whose age is below
the level-(L+1) boundary base_duration * growth_factor**(L+1); once an
entry's age crosses into a higher band it becomes eligible and is merged
pairwise (chronological neighbours) into a level-(L+1) summary. Summaries
created by a pass join their new level's pool immediately, so a single pass
cascades until every level holds at most one eligible unpinned entry. That
makes a repeated pass at the same clock a no-op, which the engine relies on.

Pinned entries never merge. A pass is computed without touching the caller's
state, so a failing summarizer aborts it atomically.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .emotion import classify_quadrant
from .model import (
    EmotionState,
    EntryKind,
    EpochConfig,
    InvariantViolation,
    MemoryEntry,
    UtteranceType,
    entry_bytes,
    q6,
)
from .textutils import split_sentences, tokenize

# A summarizer turns constituent texts into one condensed text within a
# character cap. Must be pure; failures abort the pass with no state change.
SummarizerPlugin = Callable[[Sequence[str], int], str]


@dataclass
class CompactionReport:
    pass_time: float
    merges: list[tuple[int, tuple[int, int]]]
    entries_before: int
    entries_after: int
    bytes_before: int
    bytes_after: int


def level_for_age(age: float, epoch: EpochConfig) -> int:
    """Eligible level for an entry of the given age, clamped to [0, max_level].

    Equals floor(log_b(age / d0)), but the geometric boundaries are built by
    sequential multiplication so results are exact at boundary ages instead
    of depending on float log/pow rounding.
    """
    if age < 0:
        raise ValueError(f"negative age: {age}")
    level = 0
    bound = epoch.base_duration * epoch.growth_factor
    while level < epoch.max_level and age >= bound:
        bound *= epoch.growth_factor
        level += 1
    return level


def summarize_extractive(texts: Sequence[str], cap: int) -> str:
    """Default summarizer: keep the rarest-token sentences, in original order.

    Sentences are scored by the sum of inverse token frequency over the whole
    constituent set, duplicates collapse to their first occurrence, and the
    highest-scoring sentences are kept (original order) while they fit in
    `cap` characters. If nothing fits, the shortest sentence is kept alone.
    """
    if not texts:
        raise ValueError("summarize_extractive needs at least one text")
    if len(texts) == 1 and len(texts[0]) <= cap:
        return texts[0]

    freq: Counter = Counter()
    for text in texts:
        freq.update(tokenize(text))

    sentences: list[str] = []
    seen: set[str] = set()
    for text in texts:
        for sentence in split_sentences(text):
            if sentence not in seen:
                seen.add(sentence)
                sentences.append(sentence)
    if not sentences:
        return ""

    scores = [sum(1.0 / freq[t] for t in tokenize(s)) for s in sentences]
    by_score = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))

    chosen: list[int] = []
    used = 0
    for i in by_score:
        extra = len(sentences[i]) + (1 if chosen else 0)
        if used + extra <= cap:
            chosen.append(i)
            used += extra
    if not chosen:
        chosen = [min(range(len(sentences)), key=lambda i: (len(sentences[i]), -scores[i], i))]
    return " ".join(sentences[i] for i in sorted(chosen))


def blend_emotion(constituents: Sequence[MemoryEntry]) -> EmotionState:
    """Importance-weighted mean affect, relabeled by the quadrant rule."""
    weights = [e.importance for e in constituents]
    if sum(weights) == 0:
        weights = [1.0] * len(constituents)
    total = sum(weights)
    valence = q6(sum(w * e.emotion.valence for w, e in zip(weights, constituents)) / total)
    arousal = q6(sum(w * e.emotion.arousal for w, e in zip(weights, constituents)) / total)
    confidence = q6(sum(w * e.emotion.confidence for w, e in zip(weights, constituents)) / total)
    return EmotionState(valence, arousal, classify_quadrant(valence, arousal), confidence)


def aggregate_entry(
    constituents: Sequence[MemoryEntry],
    *,
    kind: EntryKind,
    level: int,
    entry_id: int,
    cap: int,
    summarizer: SummarizerPlugin,
) -> MemoryEntry:
    """Build a Summary/Meta entry covering the constituents (span, lineage, salience)."""
    users = {e.user_id for e in constituents}
    if len(users) != 1:
        raise ValueError("constituents must belong to one user")
    text = summarizer([e.text for e in constituents], cap)[:cap]
    return MemoryEntry(
        id=entry_id,
        user_id=constituents[0].user_id,
        kind=kind,
        utterance_type=UtteranceType.SYSTEM,
        t_start=min(e.t_start for e in constituents),
        t_end=max(e.t_end for e in constituents),
        text=text,
        emotion=blend_emotion(constituents),
        importance=q6(max(e.importance for e in constituents)),
        level=level,
        pinned=False,
        source_ids=frozenset(e.id for e in constituents),
        covered_count=sum(e.covered_count for e in constituents),
    )


def compact_pass(
    entries: Iterable[MemoryEntry],
    now: float,
    epoch: EpochConfig,
    cap: int,
    summarizer: SummarizerPlugin,
    next_id: int,
) -> tuple[CompactionReport, list[MemoryEntry], list[int], int]:
    """Plan one full compaction pass over a user's live set.

    Returns (report, summaries in creation order, removed ids in merge order,
    next free id). The caller's entries are not mutated; applying the merge
    list in order reproduces the transition.
    """
    live: dict[int, MemoryEntry] = {e.id: e for e in entries}
    entries_before = len(live)
    bytes_before = sum(entry_bytes(e) for e in live.values())

    by_level: dict[int, list[MemoryEntry]] = defaultdict(list)
    for entry in live.values():
        by_level[entry.level].append(entry)

    merges: list[tuple[int, tuple[int, int]]] = []
    new_entries: list[MemoryEntry] = []
    removed: list[int] = []
    for level in range(epoch.max_level):
        pool = [
            e
            for e in by_level.get(level, [])
            if not e.pinned and level_for_age(max(0.0, now - e.t_end), epoch) > level
        ]
        pool.sort(key=lambda e: (e.t_start, e.id))
        for first, second in zip(pool[0::2], pool[1::2]):
            summary = aggregate_entry(
                (first, second),
                kind=EntryKind.SUMMARY,
                level=level + 1,
                entry_id=next_id,
                cap=cap,
                summarizer=summarizer,
            )
            next_id += 1
            merges.append((summary.id, (first.id, second.id)))
            removed.extend((first.id, second.id))
            new_entries.append(summary)
            del live[first.id]
            del live[second.id]
            live[summary.id] = summary
            by_level[level + 1].append(summary)

    bytes_after = sum(entry_bytes(e) for e in live.values())
    if bytes_after > bytes_before:
        raise InvariantViolation(
            f"compaction grew the store: {bytes_before} -> {bytes_after} bytes"
        )
    report = CompactionReport(
        pass_time=now,
        merges=merges,
        entries_before=entries_before,
        entries_after=len(live),
        bytes_before=bytes_before,
        bytes_after=bytes_after,
    )
    return report, new_entries, removed, next_id
