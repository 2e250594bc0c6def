"""The memory engine: live entry set, journal, snapshots, single-writer mutations.

Durability is an append-only journal of applied effects (one canonical JSON
record per line) plus snapshots that capture the full engine state. Replaying
a journal from empty reproduces the exact state; loading a snapshot and
replaying the records past its last_seq is equivalent to a full replay. A
partial trailing journal record (torn write) is silently truncated; damage
before the last complete record is unrecoverable and reported by seq.

All mutations go through one lock; reads hand out immutable values.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Callable

from . import compaction, importance, pruning, retrieval
from .compaction import CompactionReport, SummarizerPlugin, summarize_extractive
from .emotion import AnnotatorPlugin, LexiconAnnotator, UserBaseline, classify_quadrant, update_baseline
from .engagement import (
    EmotionTrend,
    PropensityWeight,
    Reminder,
    Response,
    apply_engagement_feedback,
    parse_calendar_event,
    update_trend,
)
from .model import (
    ClockError,
    EmotionState,
    EngineConfig,
    EntryKind,
    InvariantViolation,
    JournalCorruption,
    MemoryEntry,
    NotFoundError,
    UtteranceType,
    entry_bytes,
    entry_from_record,
    entry_to_record,
    f6,
    q6,
)
from .pruning import PruneReport
from .retrieval import RetrievalIndex

JOURNAL_FORMAT = "mnemo-journal"
SNAPSHOT_FORMAT = "mnemo-snapshot"

# Raw entries take the ingest ordinal (1, 2, ...) so replay logs can address
# future entries; summaries and meta-entries allocate from a disjoint range.
DERIVED_ID_BASE = 2**40


class Op(Enum):
    INGEST = "ingest"
    MERGE = "merge"
    PRUNE = "prune"
    PIN = "pin"
    UNPIN = "unpin"
    CORRECT = "correct"
    BASELINE_UPDATE = "baseline_update"
    FEEDBACK_WEIGHT = "feedback_weight"


class Feedback(Enum):
    PIN = "pin"
    UNPIN = "unpin"
    CORRECT = "correct"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Journal:
    """Append-only op log; in-memory when no path is given (tests, recovery)."""

    def __init__(self, path=None, *, config_hash: str = "", start_seq: int = 0, resume: bool = False):
        self.path = Path(path) if path is not None else None
        self.seq = start_seq
        self.records: list[dict] = []
        self.after_append: Callable[[dict], None] | None = None
        self._fh = None
        if self.path is not None:
            if resume:
                self._fh = open(self.path, "a", encoding="utf-8")
            else:
                self._fh = open(self.path, "w", encoding="utf-8")
                header = {"config_hash": config_hash, "format": JOURNAL_FORMAT, "version": 1}
                self._fh.write(_dump(header) + "\n")
                self._fh.flush()

    def append(self, op: Op, payload: dict, t: float) -> int:
        self.seq += 1
        record = {"op": op.value, "payload": payload, "seq": self.seq, "t": f6(t)}
        if self._fh is not None:
            self._fh.write(_dump(record) + "\n")
            self._fh.flush()
        else:
            self.records.append(record)
        if self.after_append is not None:
            self.after_append(record)
        return self.seq

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __del__(self):  # pragma: no cover - best effort
        try:
            self.close()
        except Exception:
            pass


def read_journal(path) -> tuple[dict, list[dict]]:
    """Read (header, records); a partial trailing line is dropped.

    Raises JournalCorruption for unparseable complete lines or sequence gaps,
    naming the expected seq.
    """
    raw = Path(path).read_text(encoding="utf-8")
    if not raw:
        return {}, []
    lines = raw.split("\n")
    if raw.endswith("\n"):
        lines = lines[:-1]
    else:
        lines = lines[:-1]  # non-terminated tail is a torn write; truncate
    header: dict = {}
    records: list[dict] = []
    expected = 1
    for lineno, line in enumerate(lines, 1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise JournalCorruption(f"journal damaged at seq {expected} (line {lineno}): {exc}") from None
        if lineno == 1:
            if obj.get("format") != JOURNAL_FORMAT:
                raise JournalCorruption("not a journal file (bad header)")
            header = obj
            continue
        if obj.get("seq") != expected:
            raise JournalCorruption(f"journal sequence gap: expected seq {expected}, found {obj.get('seq')}")
        records.append(obj)
        expected += 1
    return header, records


class MemoryEngine:
    """Owns all per-user memory state; every mutation is journaled."""

    def __init__(
        self,
        config: EngineConfig | None = None,
        *,
        annotator: AnnotatorPlugin | None = None,
        summarizer: SummarizerPlugin | None = None,
        journal_path=None,
    ):
        self.config = config if config is not None else EngineConfig()
        self.config.validate()
        self.annotator = annotator if annotator is not None else LexiconAnnotator()
        self.summarizer = summarizer if summarizer is not None else summarize_extractive
        self.journal = Journal(journal_path, config_hash=self.config.config_hash())
        self._lock = threading.RLock()
        self._entries: dict[str, dict[int, MemoryEntry]] = {}
        self._owner: dict[int, str] = {}
        self._bytes: dict[str, int] = {}
        self._ebytes: dict[int, int] = {}
        self._covered: dict[int, frozenset[int]] = {}
        self._indexes: dict[str, RetrievalIndex] = {}
        self._baselines: dict[str, UserBaseline] = {}
        self._trends: dict[str, EmotionTrend] = {}
        self._weights: dict[str, PropensityWeight] = {}
        self._last_t: dict[str, float] = {}
        self._reminders: dict[str, list[Reminder]] = {}
        self._next_raw_id = 1
        self._next_derived_id = DERIVED_ID_BASE

    # ------------------------------------------------------------------ state

    def _index(self, user_id: str) -> RetrievalIndex:
        index = self._indexes.get(user_id)
        if index is None:
            index = RetrievalIndex(self.config.rng_seed)
            self._indexes[user_id] = index
        return index

    def _insert(self, entry: MemoryEntry, covered: frozenset[int]) -> None:
        size = entry_bytes(entry)
        user = entry.user_id
        self._entries.setdefault(user, {})[entry.id] = entry
        self._owner[entry.id] = user
        self._ebytes[entry.id] = size
        self._bytes[user] = self._bytes.get(user, 0) + size
        if len(covered) != entry.covered_count:
            raise InvariantViolation(
                f"entry {entry.id}: covered_count {entry.covered_count} != |raw set| {len(covered)}"
            )
        self._covered[entry.id] = covered
        self._index(user).add(entry)
        if entry.id >= DERIVED_ID_BASE:
            self._next_derived_id = max(self._next_derived_id, entry.id + 1)
        else:
            self._next_raw_id = max(self._next_raw_id, entry.id + 1)

    def _remove(self, entry_id: int) -> tuple[MemoryEntry, frozenset[int]]:
        user = self._owner.pop(entry_id)
        entry = self._entries[user].pop(entry_id)
        self._bytes[user] -= self._ebytes.pop(entry_id)
        covered = self._covered.pop(entry_id)
        self._indexes[user].remove(entry_id)
        return entry, covered

    def _replace_entry(self, entry: MemoryEntry, reindex: bool) -> None:
        old_size = self._ebytes[entry.id]
        new_size = entry_bytes(entry)
        self._entries[entry.user_id][entry.id] = entry
        self._ebytes[entry.id] = new_size
        self._bytes[entry.user_id] += new_size - old_size
        if reindex:
            self._indexes[entry.user_id].replace(entry)

    def _post_ingest(self, entry: MemoryEntry) -> None:
        """State derived deterministically from an ingested entry (live + replay)."""
        user = entry.user_id
        if entry.utterance_type is UtteranceType.USER:
            trend = self._trends.get(user, EmotionTrend(user))
            self._trends[user] = update_trend(trend, entry.emotion, entry.t_start, self.config)
        elif entry.utterance_type is UtteranceType.SYSTEM:
            event_t = parse_calendar_event(entry.text)
            if event_t is not None and event_t > entry.t_start:
                remind_at = event_t - self.config.checkin_reminder_lead
                self._reminders.setdefault(user, []).append(Reminder(remind_at, event_t, entry.text))
        previous = self._last_t.get(user)
        self._last_t[user] = entry.t_start if previous is None else max(previous, entry.t_start)

    # -------------------------------------------------------------- mutations

    def ingest(self, user_id: str, utterance_type: UtteranceType, text: str, t: float) -> MemoryEntry:
        with self._lock:
            t = float(t)
            last = self._last_t.get(user_id)
            if last is not None and t < last:
                raise ClockError(f"non-monotone timestamp for {user_id}: {t} < {last}")
            baseline = self._baselines.get(user_id, UserBaseline(user_id))
            state = self.annotator.annotate(text, baseline)
            valence, arousal = q6(state.valence), q6(state.arousal)
            emotion = EmotionState(valence, arousal, classify_quadrant(valence, arousal), q6(state.confidence))
            vec = retrieval.embed(text, self.config.rng_seed)
            components = importance.ImportanceComponents(
                intensity=importance.intensity(emotion),
                feedback_bonus=0.0,
                uniqueness=importance.uniqueness(vec, self._index(user_id).matrix()),
            )
            score = q6(importance.score(components, self.config.importance_weights))
            entry = MemoryEntry(
                id=self._next_raw_id,
                user_id=user_id,
                kind=EntryKind.RAW,
                utterance_type=utterance_type,
                t_start=q6(t),
                t_end=q6(t),
                text=text,
                emotion=emotion,
                importance=score,
                level=0,
                pinned=False,
            )
            self._insert(entry, frozenset({entry.id}))
            self._post_ingest(entry)
            self.journal.append(Op.INGEST, {"entry": entry_to_record(entry)}, t)
            if utterance_type is UtteranceType.USER:
                raw_v, raw_a, raw_conf = self.annotator.raw_affect(text)
                raw_state = EmotionState(raw_v, raw_a, classify_quadrant(raw_v, raw_a), raw_conf)
                self._baselines[user_id] = update_baseline(baseline, raw_state)
                self.journal.append(
                    Op.BASELINE_UPDATE, {"arousal": raw_a, "user_id": user_id, "valence": raw_v}, t
                )
            return entry

    def apply_feedback(self, entry_id: int, action: Feedback, text: str | None = None, t: float | None = None) -> MemoryEntry:
        with self._lock:
            user = self._owner.get(entry_id)
            if user is None:
                raise NotFoundError(f"entry {entry_id} is not live")
            entry = self._entries[user][entry_id]
            w_f = self.config.importance_weights[1]
            when = float(t) if t is not None else self._last_t.get(user, entry.t_end)
            if action is Feedback.PIN:
                if entry.pinned:
                    return entry
                entry = entry.with_pin(True, entry.importance + w_f)
                self._replace_entry(entry, reindex=False)
                self.journal.append(Op.PIN, {"id": entry_id, "importance": f6(entry.importance)}, when)
            elif action is Feedback.UNPIN:
                if not entry.pinned:
                    return entry
                entry = entry.with_pin(False, entry.importance - w_f)
                self._replace_entry(entry, reindex=False)
                self.journal.append(Op.UNPIN, {"id": entry_id, "importance": f6(entry.importance)}, when)
            elif action is Feedback.CORRECT:
                if text is None:
                    raise ValueError("Correct feedback requires replacement text")
                new_importance = entry.importance if entry.pinned else q6(entry.importance + w_f)
                entry = replace(entry, text=text, pinned=True, importance=new_importance)
                self._replace_entry(entry, reindex=True)
                self.journal.append(
                    Op.CORRECT,
                    {"id": entry_id, "importance": f6(entry.importance), "text": text},
                    when,
                )
            else:  # pragma: no cover - enum is closed
                raise ValueError(f"unknown feedback action: {action}")
            return entry

    def apply_engagement_response(self, user_id: str, response: Response, t: float) -> PropensityWeight:
        with self._lock:
            weight = self._weights.get(user_id, PropensityWeight(user_id))
            updated = apply_engagement_feedback(weight, response)
            self._weights[user_id] = updated
            self.journal.append(Op.FEEDBACK_WEIGHT, {"user_id": user_id, "weight": updated.weight}, t)
            return updated

    def run_compaction(self, now: float) -> dict[str, CompactionReport]:
        """One compaction pass per user; atomic per user, serialized here."""
        with self._lock:
            reports: dict[str, CompactionReport] = {}
            for user in sorted(self._entries):
                live = self._entries[user]
                if not live:
                    continue
                report, new_entries, _removed, next_id = compaction.compact_pass(
                    live.values(),
                    now,
                    self.config.epoch,
                    self.config.summary_cap_chars,
                    self.summarizer,
                    self._next_derived_id,
                )
                reports[user] = report
                if not report.merges:
                    continue
                self._next_derived_id = next_id
                summaries = {e.id: e for e in new_entries}
                for summary_id, (first, second) in report.merges:
                    summary = summaries[summary_id]
                    _, cov_a = self._remove(first)
                    _, cov_b = self._remove(second)
                    self._insert(summary, cov_a | cov_b)
                    self.journal.append(Op.MERGE, {"entry": entry_to_record(summary)}, now)
            return reports

    def run_prune_check(self, now: float) -> dict[str, PruneReport]:
        """Prune every user whose live bytes have reached the high watermark."""
        with self._lock:
            reports: dict[str, PruneReport] = {}
            for user in sorted(self._entries):
                trigger = self._bytes.get(user, 0)
                if not pruning.should_activate(trigger, self.config):
                    continue
                plan = pruning.plan_prune(
                    self._entries[user].values(), self.config, self.summarizer, self._next_derived_id
                )
                self._next_derived_id = plan.next_id
                self._apply_prune(plan.pruned_ids, plan.metas)
                payload = {
                    "metas": [entry_to_record(m) for m in plan.metas],
                    "pruned_ids": plan.pruned_ids,
                    "tau": "inf" if math.isinf(plan.tau) else f6(plan.tau),
                    "user_id": user,
                    "warning": plan.warning,
                }
                self.journal.append(Op.PRUNE, payload, now)
                reports[user] = PruneReport(
                    user_id=user,
                    trigger_bytes=trigger,
                    threshold_tau=plan.tau,
                    pruned_ids=plan.pruned_ids,
                    meta_ids_created=[m.id for m in plan.metas],
                    bytes_after=self._bytes.get(user, 0),
                    warning=plan.warning,
                )
            return reports

    def _apply_prune(self, pruned_ids: list[int], metas: list[MemoryEntry]) -> None:
        removed_cover: dict[int, frozenset[int]] = {}
        for entry_id in pruned_ids:
            _, covered = self._remove(entry_id)
            removed_cover[entry_id] = covered
        for meta in metas:
            union: frozenset[int] = frozenset().union(*(removed_cover[s] for s in meta.source_ids))
            self._insert(meta, union)

    # ------------------------------------------------------------------ reads

    def users(self) -> list[str]:
        seen = set(self._entries) | set(self._baselines) | set(self._trends)
        seen |= set(self._weights) | set(self._last_t) | set(self._reminders)
        return sorted(seen)

    def entry(self, entry_id: int) -> MemoryEntry:
        user = self._owner.get(entry_id)
        if user is None:
            raise NotFoundError(f"entry {entry_id} is not live")
        return self._entries[user][entry_id]

    def is_live(self, entry_id: int) -> bool:
        return entry_id in self._owner

    def live_entries(self, user_id: str) -> list[MemoryEntry]:
        return [self._entries[user_id][i] for i in sorted(self._entries.get(user_id, {}))]

    def covered_raw_ids(self, entry_id: int) -> frozenset[int]:
        if entry_id not in self._covered:
            raise NotFoundError(f"entry {entry_id} is not live")
        return self._covered[entry_id]

    def store_bytes(self, user_id: str) -> int:
        return self._bytes.get(user_id, 0)

    def total_bytes(self) -> int:
        return sum(self._bytes.values())

    def total_entries(self) -> int:
        return len(self._owner)

    def search(self, user_id: str, query: str, k: int) -> list[tuple[int, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        index = self._indexes.get(user_id)
        if index is None or len(index) == 0:
            return []
        return index.search(query, k, self.config.retrieval_alpha)

    def baseline(self, user_id: str) -> UserBaseline:
        return self._baselines.get(user_id, UserBaseline(user_id))

    def trend(self, user_id: str) -> EmotionTrend:
        return self._trends.get(user_id, EmotionTrend(user_id))

    def weight(self, user_id: str) -> float:
        return self._weights.get(user_id, PropensityWeight(user_id)).weight

    def reminders(self, user_id: str) -> list[Reminder]:
        return list(self._reminders.get(user_id, []))

    # ------------------------------------------------------- snapshot/recover

    def snapshot_bytes(self) -> bytes:
        """Serialize the full engine state; byte-identical for identical state."""
        with self._lock:
            lines = [
                _dump({"format": SNAPSHOT_FORMAT, "version": 1}),
                _dump(
                    {
                        "config_hash": self.config.config_hash(),
                        "last_seq": self.journal.seq,
                        "next_derived_id": self._next_derived_id,
                        "next_raw_id": self._next_raw_id,
                    }
                ),
            ]
            ids = sorted(self._owner)
            lines.append(_dump({"count": len(ids), "section": "entries"}))
            for entry_id in ids:
                lines.append(_dump(entry_to_record(self._entries[self._owner[entry_id]][entry_id])))
            lines.append(_dump({"count": len(ids), "section": "lineage"}))
            for entry_id in ids:
                lines.append(_dump({"id": entry_id, "raw_ids": sorted(self._covered[entry_id])}))
            lines.append(_dump({"count": len(self._baselines), "section": "baselines"}))
            for user in sorted(self._baselines):
                b = self._baselines[user]
                lines.append(
                    _dump(
                        {
                            "mean_arousal": b.mean_arousal,
                            "mean_valence": b.mean_valence,
                            "sample_count": b.sample_count,
                            "user_id": user,
                        }
                    )
                )
            lines.append(_dump({"count": len(self._trends), "section": "trends"}))
            for user in sorted(self._trends):
                tr = self._trends[user]
                lines.append(
                    _dump(
                        {
                            "below_threshold_since": tr.below_threshold_since,
                            "ema_arousal": tr.ema_arousal,
                            "ema_valence": tr.ema_valence,
                            "last_t": tr.last_t,
                            "sample_count": tr.sample_count,
                            "user_id": user,
                        }
                    )
                )
            lines.append(_dump({"count": len(self._weights), "section": "weights"}))
            for user in sorted(self._weights):
                lines.append(_dump({"user_id": user, "weight": self._weights[user].weight}))
            lines.append(_dump({"count": len(self._last_t), "section": "last_t"}))
            for user in sorted(self._last_t):
                lines.append(_dump({"t": self._last_t[user], "user_id": user}))
            n_reminders = sum(len(v) for v in self._reminders.values())
            lines.append(_dump({"count": n_reminders, "section": "reminders"}))
            for user in sorted(self._reminders):
                for reminder in self._reminders[user]:
                    lines.append(
                        _dump(
                            {
                                "event_t": reminder.event_t,
                                "remind_at": reminder.remind_at,
                                "text": reminder.text,
                                "user_id": user,
                            }
                        )
                    )
            return ("\n".join(lines) + "\n").encode("utf-8")

    def write_snapshot(self, path) -> None:
        Path(path).write_bytes(self.snapshot_bytes())

    def _load_snapshot(self, data: bytes) -> int:
        lines = data.decode("utf-8").splitlines()
        header = json.loads(lines[0])
        if header.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not a snapshot file")
        meta = json.loads(lines[1])
        if meta["config_hash"] != self.config.config_hash():
            raise ValueError("snapshot was written under a different config")
        cursor = 2

        def section(name: str) -> list[dict]:
            nonlocal cursor
            head = json.loads(lines[cursor])
            if head.get("section") != name:
                raise ValueError(f"snapshot missing section {name}")
            cursor += 1
            rows = [json.loads(lines[cursor + i]) for i in range(head["count"])]
            cursor += head["count"]
            return rows

        entry_rows = section("entries")
        lineage_rows = section("lineage")
        covered = {row["id"]: frozenset(row["raw_ids"]) for row in lineage_rows}
        for row in entry_rows:
            entry = entry_from_record(row)
            self._insert(entry, covered[entry.id])
        for row in section("baselines"):
            self._baselines[row["user_id"]] = UserBaseline(
                row["user_id"], row["mean_valence"], row["mean_arousal"], row["sample_count"]
            )
        for row in section("trends"):
            self._trends[row["user_id"]] = EmotionTrend(
                user_id=row["user_id"],
                ema_valence=row["ema_valence"],
                ema_arousal=row["ema_arousal"],
                sample_count=row["sample_count"],
                below_threshold_since=row["below_threshold_since"],
                last_t=row["last_t"],
            )
        for row in section("weights"):
            self._weights[row["user_id"]] = PropensityWeight(row["user_id"], row["weight"])
        for row in section("last_t"):
            self._last_t[row["user_id"]] = row["t"]
        for row in section("reminders"):
            self._reminders.setdefault(row["user_id"], []).append(
                Reminder(row["remind_at"], row["event_t"], row["text"])
            )
        self._next_raw_id = max(self._next_raw_id, meta["next_raw_id"])
        self._next_derived_id = max(self._next_derived_id, meta["next_derived_id"])
        return meta["last_seq"]

    def _apply_record(self, record: dict) -> None:
        op = Op(record["op"])
        payload = record["payload"]
        if op is Op.INGEST:
            entry = entry_from_record(payload["entry"])
            self._insert(entry, frozenset({entry.id}))
            self._post_ingest(entry)
        elif op is Op.BASELINE_UPDATE:
            user = payload["user_id"]
            baseline = self._baselines.get(user, UserBaseline(user))
            v, a = payload["valence"], payload["arousal"]
            state = EmotionState(v, a, classify_quadrant(v, a), 0.0)
            self._baselines[user] = update_baseline(baseline, state)
        elif op is Op.MERGE:
            summary = entry_from_record(payload["entry"])
            covers = [self._remove(source)[1] for source in sorted(summary.source_ids)]
            self._insert(summary, frozenset().union(*covers))
        elif op is Op.PRUNE:
            metas = [entry_from_record(row) for row in payload["metas"]]
            self._apply_prune(payload["pruned_ids"], metas)
        elif op in (Op.PIN, Op.UNPIN):
            entry = self.entry(payload["id"])
            entry = replace(entry, pinned=op is Op.PIN, importance=float(payload["importance"]))
            self._replace_entry(entry, reindex=False)
        elif op is Op.CORRECT:
            entry = self.entry(payload["id"])
            entry = replace(
                entry, text=payload["text"], pinned=True, importance=float(payload["importance"])
            )
            self._replace_entry(entry, reindex=True)
        elif op is Op.FEEDBACK_WEIGHT:
            user = payload["user_id"]
            self._weights[user] = PropensityWeight(user, payload["weight"])

    @classmethod
    def recover(
        cls,
        config: EngineConfig,
        journal_path=None,
        snapshot_path=None,
        *,
        annotator: AnnotatorPlugin | None = None,
        summarizer: SummarizerPlugin | None = None,
        resume_journal: bool = False,
    ) -> "MemoryEngine":
        """Rebuild an engine from snapshot and/or journal.

        With resume_journal=True the recovered engine keeps appending to the
        same journal file; otherwise it journals in memory.
        """
        engine = cls(config, annotator=annotator, summarizer=summarizer)
        last_seq = 0
        if snapshot_path is not None:
            last_seq = engine._load_snapshot(Path(snapshot_path).read_bytes())
        engine.journal.seq = last_seq
        if journal_path is not None and Path(journal_path).exists():
            header, records = read_journal(journal_path)
            if header and header.get("config_hash") != config.config_hash():
                raise ValueError("journal was written under a different config")
            for record in records:
                if record["seq"] <= last_seq:
                    continue
                engine._apply_record(record)
                engine.journal.seq = record["seq"]
            if resume_journal:
                engine.journal = Journal(journal_path, resume=True, start_seq=engine.journal.seq)
        return engine
