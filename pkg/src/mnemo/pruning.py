"""Dynamic importance filtering: watermark-triggered pruning with meta-entries.

Activation is a byte-count check against the high watermark. A prune pass
picks the smallest importance threshold tau (scanned over the distinct live
values, ascending) such that dropping every unpinned entry scoring below tau
and replacing each calendar-week group of drops with one meta-entry lands
the store at or under the low watermark. Ties at tau survive. Pinned
entries are untouchable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .compaction import SummarizerPlugin, aggregate_entry
from .model import EngineConfig, EntryKind, MemoryEntry, entry_bytes


@dataclass
class PruneReport:
    user_id: str
    trigger_bytes: int
    threshold_tau: float
    pruned_ids: list[int]
    meta_ids_created: list[int]
    bytes_after: int
    warning: bool = False


@dataclass
class PrunePlan:
    tau: float
    pruned_ids: list[int]  # ascending (importance, t_start, id)
    metas: list[MemoryEntry]  # ascending week
    bytes_after: int
    warning: bool
    next_id: int


def should_activate(store_bytes: int, config: EngineConfig) -> bool:
    return store_bytes >= config.high_watermark_bytes


def week_key(t: float) -> tuple[int, int]:
    """ISO (year, week) of a UTC timestamp; groups pruned entries."""
    iso = datetime.fromtimestamp(t, tz=timezone.utc).isocalendar()
    return iso[0], iso[1]


def _simulate(
    live: Sequence[MemoryEntry],
    tau: float,
    config: EngineConfig,
    summarizer: SummarizerPlugin,
    next_id: int,
) -> tuple[list[MemoryEntry], list[MemoryEntry], int, int]:
    """Prune set, meta entries, resulting bytes, and next id for a candidate tau."""
    pruned = [e for e in live if not e.pinned and e.importance < tau]
    pruned.sort(key=lambda e: (e.importance, e.t_start, e.id))
    groups: dict[tuple[int, int], list[MemoryEntry]] = {}
    for entry in pruned:
        groups.setdefault(week_key(entry.t_start), []).append(entry)

    metas: list[MemoryEntry] = []
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda e: (e.t_start, e.id))
        metas.append(
            aggregate_entry(
                group,
                kind=EntryKind.META,
                level=config.epoch.max_level,
                entry_id=next_id,
                cap=config.summary_cap_chars,
                summarizer=summarizer,
            )
        )
        next_id += 1

    pruned_ids = {e.id for e in pruned}
    bytes_after = sum(entry_bytes(e) for e in live if e.id not in pruned_ids)
    bytes_after += sum(entry_bytes(m) for m in metas)
    return pruned, metas, bytes_after, next_id


def plan_prune(
    entries: Iterable[MemoryEntry],
    config: EngineConfig,
    summarizer: SummarizerPlugin,
    next_id: int,
) -> PrunePlan:
    """Choose tau and precompute the full prune transition (pure)."""
    live = list(entries)
    candidates = sorted({e.importance for e in live if not e.pinned})
    candidates.append(math.inf)
    pruned: list[MemoryEntry] = []
    metas: list[MemoryEntry] = []
    bytes_after = sum(entry_bytes(e) for e in live)
    nid = next_id
    tau = math.inf
    for tau in candidates:
        pruned, metas, bytes_after, nid = _simulate(live, tau, config, summarizer, next_id)
        if bytes_after <= config.low_watermark_bytes:
            return PrunePlan(tau, [e.id for e in pruned], metas, bytes_after, False, nid)
    # Even pruning every unpinned entry leaves the store above the low
    # watermark (pins or meta overhead); complete with a warning.
    return PrunePlan(tau, [e.id for e in pruned], metas, bytes_after, True, nid)


def select_threshold(
    entries: Iterable[MemoryEntry],
    config: EngineConfig,
    summarizer: SummarizerPlugin,
    next_id: int,
) -> float:
    """The tau a prune pass over these entries would use."""
    return plan_prune(entries, config, summarizer, next_id).tau
