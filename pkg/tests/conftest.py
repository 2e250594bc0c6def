from __future__ import annotations

import random

from mnemo.emotion import classify_quadrant
from mnemo.engagement import Response, decide_checkin
from mnemo.model import DAY, EmotionState, EngineConfig, EntryKind, MemoryEntry, UtteranceType, q6
from mnemo.store import Feedback, MemoryEngine


def make_entry(
    entry_id: int = 1,
    user_id: str = "u1",
    kind: EntryKind = EntryKind.RAW,
    utterance_type: UtteranceType = UtteranceType.USER,
    t: float = 0.0,
    t_end: float | None = None,
    text: str = "hello there",
    valence: float = 0.0,
    arousal: float = 0.0,
    confidence: float = 0.0,
    importance: float = 0.5,
    level: int = 0,
    pinned: bool = False,
    source_ids: tuple[int, ...] = (),
    covered_count: int = 1,
) -> MemoryEntry:
    """Entry builder with consistent defaults; label derived from the quadrant rule."""
    valence, arousal = q6(valence), q6(arousal)
    if kind is EntryKind.RAW:
        t_end = t
    elif t_end is None:
        t_end = t + 60.0
    entry = MemoryEntry(
        id=entry_id,
        user_id=user_id,
        kind=kind,
        utterance_type=utterance_type,
        t_start=q6(t),
        t_end=q6(t_end),
        text=text,
        emotion=EmotionState(valence, arousal, classify_quadrant(valence, arousal), q6(confidence)),
        importance=q6(importance),
        level=level,
        pinned=pinned,
        source_ids=frozenset(source_ids),
        covered_count=covered_count,
    )
    entry.validate()
    return entry


# ---------------------------------------------------------------------------
# Journal-based coverage checker: re-derives raw ownership from the op log
# alone and compares it against the engine's live set.
# ---------------------------------------------------------------------------


def assert_coverage_conserved(records: list[dict], engine: MemoryEngine) -> None:
    holders: dict[int, set[int]] = {}  # live entry id -> raw ids it covers
    ingested: set[int] = set()
    for record in records:
        op, payload = record["op"], record["payload"]
        if op == "ingest":
            rid = payload["entry"]["id"]
            ingested.add(rid)
            holders[rid] = {rid}
        elif op == "merge":
            sid = payload["entry"]["id"]
            raws: set[int] = set()
            for source in payload["entry"]["source_ids"]:
                raws |= holders.pop(source)
            holders[sid] = raws
        elif op == "prune":
            freed = {pid: holders.pop(pid) for pid in payload["pruned_ids"]}
            for meta in payload["metas"]:
                raws = set()
                for source in meta["source_ids"]:
                    raws |= freed[source]
                holders[meta["id"]] = raws

    # partition: every ingested raw id appears in exactly one live holder
    union: set[int] = set()
    total = 0
    for raws in holders.values():
        union |= raws
        total += len(raws)
    assert total == len(union), "a raw id is covered by more than one live entry"
    assert union == ingested, "coverage does not match the ingested raw set"

    # and the engine agrees with the journal-derived view
    live_ids = {e.id for u in engine.users() for e in engine.live_entries(u)}
    assert live_ids == set(holders)
    for entry_id, raws in holders.items():
        assert set(engine.covered_raw_ids(entry_id)) == raws


# ---------------------------------------------------------------------------
# Randomized workload driver shared by store tests and the acceptance suite.
# ---------------------------------------------------------------------------

_WORKLOAD_WORDS = [
    "garden", "train", "letter", "photo", "coffee", "river", "music",
    "dinner", "market", "street", "window", "winter", "summer", "story",
]
_EMOTION_WORDS = ["happy", "sad", "angry", "anxious", "calm", "excited", "lonely", "worried"]


def random_workload_config() -> EngineConfig:
    return EngineConfig(
        high_watermark_bytes=6000,
        low_watermark_bytes=2500,
        summary_cap_chars=160,
    )


def run_random_workload(
    seed: int,
    n_entries: int = 1000,
    n_users: int = 3,
    days: int = 30,
    config: EngineConfig | None = None,
    check_idempotence: bool = False,
):
    """Interleave ingest / compact / prune / pin over simulated days.

    Returns (engine, checkins). Compaction size monotonicity is asserted on
    every pass; with check_idempotence a second pass at the same clock must
    produce zero merges.
    """
    rng = random.Random(seed)
    config = config or random_workload_config()
    engine = MemoryEngine(config)
    t0 = 1_600_000_000.0
    users = [f"u{i}" for i in range(n_users)]
    times = sorted(t0 + rng.uniform(0, days * DAY) for _ in range(n_entries))
    next_pass = t0 + config.compaction_period
    checkins = []
    last_checkin: dict[str, float] = {}
    pinned_ids: list[int] = []

    def maintenance(now: float) -> None:
        reports = engine.run_compaction(now)
        for report in reports.values():
            assert report.bytes_after <= report.bytes_before
        if check_idempotence:
            again = engine.run_compaction(now)
            assert all(not r.merges for r in again.values())
        engine.run_prune_check(now)
        for user in users:
            event = decide_checkin(
                engine.trend(user), engine.weight(user), now, config, last_checkin.get(user)
            )
            if event is not None:
                last_checkin[user] = event.t
                checkins.append(event)

    for t in times:
        while next_pass <= t:
            maintenance(next_pass)
            next_pass += config.compaction_period
        user = rng.choice(users)
        words = [rng.choice(_WORKLOAD_WORDS) for _ in range(rng.randint(3, 9))]
        if rng.random() < 0.4:
            words.insert(rng.randrange(len(words)), rng.choice(_EMOTION_WORDS))
        utype = UtteranceType.USER if rng.random() < 0.7 else UtteranceType.COMPANION
        if rng.random() < 0.01:
            utype = UtteranceType.SYSTEM
            entry = engine.ingest(user, utype, f"calendar: checkup at={t + 3 * DAY:.0f}", t)
        else:
            entry = engine.ingest(user, utype, " ".join(words) + ".", t)
        roll = rng.random()
        if roll < 0.05:
            engine.apply_feedback(entry.id, Feedback.PIN, t=t)
            pinned_ids.append(entry.id)
        elif roll < 0.06:
            engine.apply_feedback(entry.id, Feedback.CORRECT, text=entry.text + " (corrected)", t=t)
            pinned_ids.append(entry.id)
        elif roll < 0.08 and pinned_ids:
            victim = pinned_ids.pop(rng.randrange(len(pinned_ids)))
            if engine.is_live(victim):
                engine.apply_feedback(victim, Feedback.UNPIN, t=t)
        if rng.random() < 0.02:
            engine.apply_engagement_response(user, rng.choice(list(Response)), t)
    maintenance(next_pass)
    return engine, checkins
