"""Deterministic replay: drive the engine from an event log, emit metrics.

The simulated clock is the event timestamps plus tick records; nothing reads
wall time. Compaction runs on its configured period (day boundaries by
default) and pruning is checked right after it. One row per simulated day
records live entries/bytes, the no-compression counterfactual (cumulative
canonical bytes of everything ever ingested), and that day's merge / prune /
check-in counts. Check-in and reminder emission bookkeeping lives here, not
in the engine, so engine state stays exactly journal-reconstructible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .compaction import SummarizerPlugin
from .emotion import AnnotatorPlugin
from .engagement import CheckInEvent, decide_checkin, due_reminder
from .model import DAY, EngineConfig, EntryKind, NotFoundError, entry_bytes
from .store import Feedback, MemoryEngine
from .textutils import tokenize
from .workload import RecallSpec, ReplayEvent, WorkloadError

METRICS_HEADER = ["day", "entries_live", "bytes_live", "bytes_baseline", "merges", "prunes", "checkins"]
TRACE_HEADER = ["t", "day", "kind", "user_id", "detail"]

_FEEDBACK = {"pin": Feedback.PIN, "unpin": Feedback.UNPIN, "correct": Feedback.CORRECT}


@dataclass
class DayRow:
    day: int
    entries_live: int
    bytes_live: int
    bytes_baseline: int
    merges: int
    prunes: int
    checkins: int


@dataclass
class ReplayResult:
    engine: MemoryEngine
    rows: list[DayRow] = field(default_factory=list)
    trace: list[tuple[float, int, str, str, str]] = field(default_factory=list)
    checkins: list[CheckInEvent] = field(default_factory=list)
    bytes_baseline: int = 0

    def write_metrics_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            for row in self.rows:
                writer.writerow(
                    [row.day, row.entries_live, row.bytes_live, row.bytes_baseline, row.merges, row.prunes, row.checkins]
                )

    def write_trace_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for t, day, kind, user, detail in self.trace:
                writer.writerow([f"{t:.6f}", day, kind, user, detail])


def replay(
    events: list[ReplayEvent],
    config: EngineConfig,
    *,
    compression: bool = True,
    journal_path=None,
    annotator: AnnotatorPlugin | None = None,
    summarizer: SummarizerPlugin | None = None,
) -> ReplayResult:
    """Process an event log in order; returns rows, trace, and the engine."""
    engine = MemoryEngine(config, annotator=annotator, summarizer=summarizer, journal_path=journal_path)
    result = ReplayResult(engine=engine)
    if not events:
        return result

    day0 = math.floor(events[0].t / DAY) * DAY
    next_pass = day0 + config.compaction_period
    next_day = day0 + DAY
    day_index = 0
    day_counts = {"merges": 0, "prunes": 0, "checkins": 0}
    last_checkin: dict[str, float] = {}
    fired_reminders: dict[str, set[int]] = {}

    def current_day(t: float) -> int:
        return int((t - day0) // DAY)

    def emit_checkin(event: CheckInEvent) -> None:
        last_checkin[event.user_id] = event.t
        result.checkins.append(event)
        day_counts["checkins"] += 1
        kind = "checkin" if event.reason == "sustained_negative_affect" else "reminder"
        result.trace.append((event.t, current_day(event.t), kind, event.user_id, event.detail or event.reason))

    def decide_for_user(user: str, now: float) -> None:
        event = decide_checkin(engine.trend(user), engine.weight(user), now, config, last_checkin.get(user))
        if event is not None:
            emit_checkin(event)
            return
        fired = fired_reminders.setdefault(user, set())
        reminders = engine.reminders(user)
        # silently expire reminders whose event time has passed
        for idx, reminder in enumerate(reminders):
            if idx not in fired and reminder.event_t <= now:
                fired.add(idx)
        hit = due_reminder(user, reminders, fired, now, config, last_checkin.get(user))
        if hit is not None:
            index, event = hit
            fired.add(index)
            emit_checkin(event)

    def run_maintenance(now: float) -> None:
        if compression:
            for report in engine.run_compaction(now).values():
                day_counts["merges"] += len(report.merges)
            for report in engine.run_prune_check(now).values():
                day_counts["prunes"] += len(report.pruned_ids)
        for user in engine.users():
            decide_for_user(user, now)

    def close_day() -> None:
        nonlocal day_index, next_day
        result.rows.append(
            DayRow(
                day=day_index,
                entries_live=engine.total_entries(),
                bytes_live=engine.total_bytes(),
                bytes_baseline=result.bytes_baseline,
                merges=day_counts["merges"],
                prunes=day_counts["prunes"],
                checkins=day_counts["checkins"],
            )
        )
        day_counts.update(merges=0, prunes=0, checkins=0)
        day_index += 1
        next_day += DAY

    def advance_to(t: float) -> None:
        nonlocal next_pass
        while True:
            boundary = min(next_pass, next_day)
            if boundary > t:
                return
            if next_pass <= next_day:
                run_maintenance(next_pass)
                next_pass += config.compaction_period
            if boundary == next_day and next_pass > next_day:
                close_day()

    for event in events:
        advance_to(event.t)
        if event.kind == "utterance":
            entry = engine.ingest(event.user_id, event.utterance_type, event.text, event.t)
            result.bytes_baseline += entry_bytes(entry)
            decide_for_user(event.user_id, event.t)
        elif event.kind == "feedback":
            action = _FEEDBACK.get(event.action)
            if action is None:
                raise WorkloadError(f"unknown feedback action {event.action!r}", event.line)
            try:
                engine.apply_feedback(event.entry_id, action, text=event.text or None, t=event.t)
            except NotFoundError:
                raise WorkloadError(f"feedback references dead entry {event.entry_id}", event.line) from None
        elif event.kind == "engagement_response":
            engine.apply_engagement_response(event.user_id, event.response, event.t)
        elif event.kind == "query":
            hits = engine.search(event.user_id, event.text, event.k)
            detail = ";".join(str(i) for i, _ in hits)
            result.trace.append((event.t, current_day(event.t), "query", event.user_id, detail))
        elif event.kind == "tick":
            for user in engine.users():
                decide_for_user(user, event.t)
        else:  # pragma: no cover - parse_log rejects unknown kinds
            raise WorkloadError(f"unknown event kind {event.kind!r}", event.line)

    # close out the final day: run the remaining boundaries (a trailing pass
    # may fire just past the last event, ending its day as usual)
    last_t = events[-1].t
    horizon = day0 + DAY * max(1, math.ceil((last_t - day0) / DAY))
    advance_to(horizon)
    return result


@dataclass
class RecallResult:
    recall_important: float
    recall_minor: float
    n_important: int
    n_minor: int


def eval_recall(engine: MemoryEngine, spec: RecallSpec, k: int | None = None) -> RecallResult:
    """Hit fractions for marked events: live in top-k, or covered with a token trace."""
    k = k if k is not None else spec.k
    hits = {"important": 0, "minor": 0}
    totals = {"important": 0, "minor": 0}
    for probe in spec.probes:
        totals[probe.kind] += 1
        for entry_id, _score in engine.search(probe.user_id, probe.query, k):
            if entry_id == probe.entry_id:
                hits[probe.kind] += 1
                break
            entry = engine.entry(entry_id)
            if entry.kind is EntryKind.RAW:
                continue
            if probe.entry_id not in engine.covered_raw_ids(entry_id):
                continue
            tokens = set(tokenize(entry.text))
            if tokens.intersection(probe.content_tokens):
                hits[probe.kind] += 1
                break
    return RecallResult(
        recall_important=hits["important"] / totals["important"] if totals["important"] else math.nan,
        recall_minor=hits["minor"] / totals["minor"] if totals["minor"] else math.nan,
        n_important=totals["important"],
        n_minor=totals["minor"],
    )
