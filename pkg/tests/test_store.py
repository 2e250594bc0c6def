import json
import math
import random

import pytest

from mnemo.model import (
    DAY,
    ClockError,
    EngineConfig,
    EmotionLabel,
    EntryKind,
    JournalCorruption,
    NotFoundError,
    UtteranceType,
    entry_bytes,
)
from mnemo.store import Feedback, MemoryEngine, read_journal

from conftest import assert_coverage_conserved, run_random_workload

T0 = 1_600_000_000.0


def _engine(**overrides):
    cfg = EngineConfig(**overrides) if overrides else EngineConfig()
    return MemoryEngine(cfg)


class TestIngest:
    def test_raw_entry_defaults(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "first words", T0)
        assert entry.kind is EntryKind.RAW
        assert entry.level == 0
        assert entry.covered_count == 1
        assert not entry.pinned
        assert entry.t_start == entry.t_end == T0

    def test_read_back_identical(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "remember this", T0)
        assert engine.entry(entry.id) == entry

    def test_emotion_and_baseline_wiring(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "sad sad", T0)
        assert entry.emotion.label is EmotionLabel.SAD
        baseline = engine.baseline("ada")
        assert baseline.sample_count == 1
        assert math.isclose(baseline.mean_valence, -0.7)
        trend = engine.trend("ada")
        assert trend.sample_count == 1 and math.isclose(trend.ema_valence, -0.7)

    def test_companion_turns_do_not_touch_baseline_or_trend(self):
        engine = _engine()
        engine.ingest("ada", UtteranceType.COMPANION, "sad sad", T0)
        assert engine.baseline("ada").sample_count == 0
        assert engine.trend("ada").sample_count == 0

    def test_non_monotone_timestamp_rejected(self):
        engine = _engine()
        engine.ingest("ada", UtteranceType.USER, "one", T0)
        with pytest.raises(ClockError):
            engine.ingest("ada", UtteranceType.USER, "two", T0 - 1)
        engine.ingest("bob", UtteranceType.USER, "other user is fine", T0 - 100)

    def test_ids_sequential_in_ingest_order(self):
        engine = _engine()
        ids = [engine.ingest("ada", UtteranceType.USER, f"turn {i}", T0 + i).id for i in range(5)]
        assert ids == [1, 2, 3, 4, 5]

    def test_store_bytes_matches_brute_force(self):
        engine = _engine()
        rng = random.Random(1)
        for i in range(100):
            user = rng.choice(["ada", "bob"])
            engine.ingest(user, UtteranceType.USER, f"note {i} " + "x" * rng.randint(0, 40), T0 + i)
        for user in ("ada", "bob"):
            brute = sum(entry_bytes(e) for e in engine.live_entries(user))
            assert engine.store_bytes(user) == brute
        assert engine.total_bytes() == engine.store_bytes("ada") + engine.store_bytes("bob")

    def test_empty_store_zero_bytes(self):
        assert _engine().store_bytes("nobody") == 0

    def test_calendar_system_event_schedules_reminder(self):
        engine = _engine()
        engine.ingest("ada", UtteranceType.SYSTEM, f"calendar: dentist at={T0 + 3 * DAY:.0f}", T0)
        reminders = engine.reminders("ada")
        assert len(reminders) == 1
        assert reminders[0].event_t == T0 + 3 * DAY
        assert reminders[0].remind_at == T0 + 3 * DAY - engine.config.checkin_reminder_lead


class TestFeedback:
    def test_pin_then_prune_survives_any_tau(self):
        engine = _engine(high_watermark_bytes=900, low_watermark_bytes=400, summary_cap_chars=100)
        keeper = engine.ingest("ada", UtteranceType.USER, "keep me around", T0)
        for i in range(12):
            engine.ingest("ada", UtteranceType.USER, f"filler chatter {i}", T0 + 1 + i)
        engine.apply_feedback(keeper.id, Feedback.PIN, t=T0 + 20)
        reports = engine.run_prune_check(T0 + 100)
        assert "ada" in reports
        assert math.isinf(reports["ada"].threshold_tau) or reports["ada"].pruned_ids
        assert engine.is_live(keeper.id)
        assert engine.entry(keeper.id).pinned

    def test_pin_unpin_involution(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "something notable", T0)
        before = engine.entry(entry.id)
        engine.apply_feedback(entry.id, Feedback.PIN, t=T0 + 1)
        pinned = engine.entry(entry.id)
        assert pinned.pinned and pinned.importance > before.importance
        engine.apply_feedback(entry.id, Feedback.UNPIN, t=T0 + 2)
        after = engine.entry(entry.id)
        assert after.pinned == before.pinned
        assert after.importance == before.importance

    def test_pin_is_idempotent(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "pin twice", T0)
        engine.apply_feedback(entry.id, Feedback.PIN, t=T0 + 1)
        once = engine.entry(entry.id).importance
        engine.apply_feedback(entry.id, Feedback.PIN, t=T0 + 2)
        assert engine.entry(entry.id).importance == once

    def test_correct_updates_bytes_by_serialization_delta(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "original text", T0)
        before_bytes = engine.store_bytes("ada")
        old_entry = engine.entry(entry.id)
        updated = engine.apply_feedback(entry.id, Feedback.CORRECT, text="a rather longer corrected text", t=T0 + 1)
        delta = entry_bytes(updated) - entry_bytes(old_entry)
        assert engine.store_bytes("ada") == before_bytes + delta
        assert updated.pinned
        assert updated.text == "a rather longer corrected text"

    def test_unknown_id_raises(self):
        with pytest.raises(NotFoundError):
            _engine().apply_feedback(999, Feedback.PIN)

    def test_correct_requires_text(self):
        engine = _engine()
        entry = engine.ingest("ada", UtteranceType.USER, "x", T0)
        with pytest.raises(ValueError):
            engine.apply_feedback(entry.id, Feedback.CORRECT)


class TestCompactionAtEngineLevel:
    def test_failing_summarizer_leaves_state_untouched(self):
        def broken(texts, cap):
            raise RuntimeError("down")

        engine = MemoryEngine(EngineConfig(), summarizer=broken)
        for i in range(4):
            engine.ingest("ada", UtteranceType.USER, f"old turn {i}", T0 + i)
        before = engine.snapshot_bytes()
        before_seq = engine.journal.seq
        with pytest.raises(RuntimeError):
            engine.run_compaction(T0 + 5 * DAY)
        assert engine.snapshot_bytes() == before
        assert engine.journal.seq == before_seq

    def test_compaction_preserves_coverage_and_bytes(self):
        engine = _engine()
        for i in range(10):
            engine.ingest("ada", UtteranceType.USER, f"day zero note {i}", T0 + i * 3600)
        reports = engine.run_compaction(T0 + 5 * DAY)
        report = reports["ada"]
        assert report.merges
        assert report.bytes_after <= report.bytes_before
        assert engine.store_bytes("ada") == sum(entry_bytes(e) for e in engine.live_entries("ada"))
        assert_coverage_conserved(engine.journal.records, engine)


class TestJournalAndRecovery:
    def _scripted_engine(self, path=None, ops=60):
        engine = MemoryEngine(EngineConfig(high_watermark_bytes=2500, low_watermark_bytes=1200, summary_cap_chars=120), journal_path=path)
        rng = random.Random(7)
        pinned = []
        t = T0
        for i in range(ops):
            t += rng.uniform(600, 7200)
            roll = rng.random()
            if roll < 0.7:
                utype = UtteranceType.USER if rng.random() < 0.8 else UtteranceType.COMPANION
                entry = engine.ingest("ada" if rng.random() < 0.6 else "bob", utype, f"note {i} about {rng.choice(['rain', 'sun', 'wind'])}", t)
                if rng.random() < 0.3:
                    pinned.append(entry.id)
            elif roll < 0.78 and pinned:
                target = rng.choice(pinned)
                if engine.is_live(target):
                    engine.apply_feedback(target, Feedback.PIN, t=t)
            elif roll < 0.84 and pinned:
                target = pinned[rng.randrange(len(pinned))]
                if engine.is_live(target):
                    engine.apply_feedback(target, Feedback.CORRECT, text=f"corrected note {i}", t=t)
            elif roll < 0.92:
                engine.run_compaction(t)
                engine.run_prune_check(t)
            else:
                from mnemo.engagement import Response

                engine.apply_engagement_response("ada", rng.choice(list(Response)), t)
        return engine

    def test_same_script_gives_byte_identical_snapshots(self):
        a = self._scripted_engine()
        b = self._scripted_engine()
        assert a.snapshot_bytes() == b.snapshot_bytes()

    def test_empty_journal_empty_state(self, tmp_path):
        path = tmp_path / "journal.log"
        path.write_text("")
        engine = MemoryEngine.recover(EngineConfig(), journal_path=path)
        assert engine.users() == []
        assert engine.total_bytes() == 0

    def test_journal_replay_reproduces_live_state(self, tmp_path):
        path = tmp_path / "journal.log"
        live = self._scripted_engine(path=path)
        live.journal.close()
        recovered = MemoryEngine.recover(live.config, journal_path=path)
        recovered.journal.seq = live.journal.seq
        assert recovered.snapshot_bytes() == live.snapshot_bytes()

    def test_snapshot_plus_tail_equals_full_replay(self, tmp_path):
        journal = tmp_path / "journal.log"
        snap = tmp_path / "mid.snap"
        engine = MemoryEngine(EngineConfig(), journal_path=journal)
        for i in range(10):
            engine.ingest("ada", UtteranceType.USER, f"before snapshot {i}", T0 + i * 600)
        engine.write_snapshot(snap)
        for i in range(10):
            engine.ingest("ada", UtteranceType.USER, f"after snapshot {i}", T0 + 86400 + i * 600)
        engine.run_compaction(T0 + 10 * DAY)
        engine.journal.close()

        via_snapshot = MemoryEngine.recover(engine.config, journal_path=journal, snapshot_path=snap)
        via_journal = MemoryEngine.recover(engine.config, journal_path=journal)
        assert via_snapshot.snapshot_bytes() == engine.snapshot_bytes()
        assert via_journal.snapshot_bytes() == engine.snapshot_bytes()

    def test_snapshot_with_empty_tail_equals_snapshot(self, tmp_path):
        snap = tmp_path / "state.snap"
        engine = self._scripted_engine()
        engine.write_snapshot(snap)
        recovered = MemoryEngine.recover(engine.config, snapshot_path=snap)
        assert recovered.snapshot_bytes() == engine.snapshot_bytes()

    def test_crash_recovery_at_every_record_boundary(self, tmp_path):
        journal = tmp_path / "journal.log"
        engine = MemoryEngine(
            EngineConfig(high_watermark_bytes=2500, low_watermark_bytes=1200, summary_cap_chars=120),
            journal_path=journal,
        )
        expected = [engine.snapshot_bytes()]
        engine.journal.after_append = lambda record: expected.append(engine.snapshot_bytes())

        rng = random.Random(17)
        pinned = []
        t = T0
        while engine.journal.seq < 200:
            t += rng.uniform(600, 7200)
            roll = rng.random()
            if roll < 0.72:
                entry = engine.ingest(
                    "ada" if rng.random() < 0.6 else "bob",
                    UtteranceType.USER if rng.random() < 0.85 else UtteranceType.COMPANION,
                    f"turn at {t:.0f} about {rng.choice(['tea', 'maps', 'snow'])}",
                    t,
                )
                if rng.random() < 0.25:
                    pinned.append(entry.id)
            elif roll < 0.8 and pinned:
                target = rng.choice(pinned)
                if engine.is_live(target):
                    engine.apply_feedback(target, Feedback.PIN, t=t)
            elif roll < 0.86 and pinned:
                target = pinned[rng.randrange(len(pinned))]
                if engine.is_live(target):
                    engine.apply_feedback(target, Feedback.UNPIN, t=t)
            else:
                engine.run_compaction(t)
                engine.run_prune_check(t)
        engine.journal.close()

        raw = journal.read_bytes()
        # record boundaries = byte offsets after the header and each record line
        offsets = []
        position = 0
        for line in raw.split(b"\n")[:-1]:
            position += len(line) + 1
            offsets.append(position)
        n_records = len(offsets) - 1  # first offset is the header boundary
        assert n_records >= 200

        truncated = tmp_path / "truncated.log"
        for i in range(n_records + 1):
            truncated.write_bytes(raw[: offsets[i]])
            recovered = MemoryEngine.recover(engine.config, journal_path=truncated)
            assert recovered.snapshot_bytes() == expected[i], f"mismatch after {i} records"

    def test_partial_trailing_record_is_dropped(self, tmp_path):
        journal = tmp_path / "journal.log"
        engine = MemoryEngine(EngineConfig(), journal_path=journal)
        engine.ingest("ada", UtteranceType.USER, "kept", T0)
        state_after_first_ingest = None
        engine.journal.close()
        raw = journal.read_bytes()
        # chop the last record mid-line
        torn = raw[:-10]
        assert not torn.endswith(b"\n")
        journal.write_bytes(torn)
        recovered = MemoryEngine.recover(engine.config, journal_path=journal)
        # the BASELINE_UPDATE record was torn off: entry present, baseline not
        assert recovered.is_live(1)
        assert recovered.baseline("ada").sample_count == 0

    def test_corruption_in_middle_names_bad_seq(self, tmp_path):
        journal = tmp_path / "journal.log"
        engine = MemoryEngine(EngineConfig(), journal_path=journal)
        for i in range(3):
            engine.ingest("ada", UtteranceType.USER, f"turn {i}", T0 + i)
        engine.journal.close()
        lines = journal.read_text().splitlines()
        lines[2] = lines[2][: len(lines[2]) // 2]  # damage record seq 2
        journal.write_text("\n".join(lines) + "\n")
        with pytest.raises(JournalCorruption, match="seq 2"):
            MemoryEngine.recover(engine.config, journal_path=journal)

    def test_sequence_gap_detected(self, tmp_path):
        journal = tmp_path / "journal.log"
        engine = MemoryEngine(EngineConfig(), journal_path=journal)
        for i in range(3):
            engine.ingest("ada", UtteranceType.USER, f"turn {i}", T0 + i)
        engine.journal.close()
        lines = journal.read_text().splitlines()
        del lines[2]
        journal.write_text("\n".join(lines) + "\n")
        with pytest.raises(JournalCorruption, match="expected seq 2"):
            MemoryEngine.recover(engine.config, journal_path=journal)

    def test_config_mismatch_rejected(self, tmp_path):
        journal = tmp_path / "journal.log"
        engine = MemoryEngine(EngineConfig(), journal_path=journal)
        engine.ingest("ada", UtteranceType.USER, "hello", T0)
        engine.journal.close()
        other = EngineConfig(rng_seed=99)
        with pytest.raises(ValueError, match="different config"):
            MemoryEngine.recover(other, journal_path=journal)

    def test_resume_journal_continues_sequence(self, tmp_path):
        journal = tmp_path / "journal.log"
        engine = MemoryEngine(EngineConfig(), journal_path=journal)
        engine.ingest("ada", UtteranceType.USER, "before crash", T0)
        engine.journal.close()
        recovered = MemoryEngine.recover(EngineConfig(), journal_path=journal, resume_journal=True)
        recovered.ingest("ada", UtteranceType.USER, "after recovery", T0 + 60)
        recovered.journal.close()
        header, records = read_journal(journal)
        assert [r["seq"] for r in records] == list(range(1, len(records) + 1))
        final = MemoryEngine.recover(EngineConfig(), journal_path=journal)
        assert final.is_live(1) and final.is_live(2)


class TestRandomizedWorkloads:
    def test_coverage_conserved_small_workload(self):
        engine, _ = run_random_workload(seed=3, n_entries=300, check_idempotence=True)
        assert_coverage_conserved(engine.journal.records, engine)

    def test_bytes_accounting_survives_workload(self):
        engine, _ = run_random_workload(seed=4, n_entries=200)
        for user in engine.users():
            brute = sum(entry_bytes(e) for e in engine.live_entries(user))
            assert engine.store_bytes(user) == brute

    def test_prune_postconditions_on_randomized_store(self):
        cfg = EngineConfig(high_watermark_bytes=4000, low_watermark_bytes=1800, summary_cap_chars=140)
        engine = MemoryEngine(cfg)
        rng = random.Random(23)
        for i in range(50):
            text = " ".join(rng.choice(["happy", "sad", "walk", "tree", "kite", "storm"]) for _ in range(rng.randint(2, 10)))
            entry = engine.ingest("ada", UtteranceType.USER, text + ".", T0 + i * 3600)
            if rng.random() < 0.1:
                engine.apply_feedback(entry.id, Feedback.PIN, t=T0 + i * 3600)
        assert engine.store_bytes("ada") >= cfg.high_watermark_bytes
        reports = engine.run_prune_check(T0 + 60 * 3600)
        report = reports["ada"]
        tau = report.threshold_tau
        retained_unpinned = [e for e in engine.live_entries("ada") if not e.pinned and e.kind is not EntryKind.META]
        assert all(e.importance >= tau for e in retained_unpinned)
        if not report.warning:
            assert engine.store_bytes("ada") <= cfg.low_watermark_bytes
        assert_coverage_conserved(engine.journal.records, engine)
        # every meta groups one calendar week
        from mnemo.pruning import week_key

        for meta_id in report.meta_ids_created:
            meta = engine.entry(meta_id)
            assert meta.kind is EntryKind.META
