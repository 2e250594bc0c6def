"""mnemo command line: generate workloads, replay them, inspect the results.

Exit codes: 0 success, 2 input error (bad files or references, reported with
line numbers where known), 3 invariant violation detected during replay.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from .figures import render_metrics_figures
from .model import EngineConfig, EntryKind, InvariantViolation, JournalCorruption, NotFoundError
from .replay import eval_recall, replay
from .store import MemoryEngine
from .workload import RecallSpec, WorkloadError, generate_workload, parse_log, write_log


def _config_from(args) -> EngineConfig:
    config = EngineConfig.from_file(args.config) if args.config else EngineConfig()
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, rng_seed=args.seed)
        config.validate()
    return config


def _emit(text: str, out: str | None) -> None:
    print(text)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")


def cmd_generate(args) -> int:
    events, spec = generate_workload(
        seed=args.seed if args.seed is not None else 42,
        users=args.users,
        days=args.days,
        conv_per_day=args.conv_per_day,
        turns_per_conv=args.turns_per_conv,
        target_turns=args.target_turns,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_log(events, out / "workload.log")
    spec.save(out / "recall_spec.json")
    turns = sum(1 for e in events if e.kind == "utterance" and e.utterance_type.value != "system")
    print(f"wrote {out / 'workload.log'} ({len(events)} events, {turns} conversation turns)")
    print(f"wrote {out / 'recall_spec.json'} ({len(spec.probes)} probes)")
    return 0


def cmd_replay(args) -> int:
    config = _config_from(args)
    events = parse_log(args.log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = replay(
        events,
        config,
        compression=not args.no_compression,
        journal_path=out / "journal.log",
    )
    result.engine.journal.close()
    result.write_metrics_csv(out / "metrics.csv")
    result.write_trace_csv(out / "trace.csv")
    result.engine.write_snapshot(out / "snapshot.mem")
    if not args.no_figures:
        for path in render_metrics_figures(out / "metrics.csv", out / "figures"):
            print(f"wrote {path}")
    print(f"wrote {out / 'metrics.csv'} ({len(result.rows)} day rows)")
    print(f"wrote {out / 'snapshot.mem'}")
    if result.rows:
        last = result.rows[-1]
        ratio = last.bytes_live / last.bytes_baseline if last.bytes_baseline else float("nan")
        print(
            f"final: {last.entries_live} live entries, {last.bytes_live} bytes live, "
            f"{last.bytes_baseline} bytes baseline (ratio {ratio:.3f}), "
            f"{sum(r.checkins for r in result.rows)} check-ins"
        )
    return 0


def cmd_query(args) -> int:
    config = _config_from(args)
    engine = MemoryEngine.recover(config, snapshot_path=args.snapshot)
    hits = engine.search(args.user, args.text, args.k)
    lines = []
    for entry_id, score in hits:
        entry = engine.entry(entry_id)
        text = entry.text if len(entry.text) <= 80 else entry.text[:77] + "..."
        lines.append(f"{entry_id}\t{score:.4f}\t{entry.kind.value}\t{text}")
    _emit("\n".join(lines) if lines else "(no results)", args.out)
    return 0


def cmd_recall(args) -> int:
    config = _config_from(args)
    engine = MemoryEngine.recover(config, snapshot_path=args.snapshot)
    spec = RecallSpec.load(args.spec)
    result = eval_recall(engine, spec, args.k)
    text = (
        f"recall_important={result.recall_important:.4f} (n={result.n_important})\n"
        f"recall_minor={result.recall_minor:.4f} (n={result.n_minor})"
    )
    _emit(text, args.out)
    if math.isnan(result.recall_important) or math.isnan(result.recall_minor):
        print("no marked events of one kind; recall undefined", file=sys.stderr)
        return 2
    return 0


def cmd_stats(args) -> int:
    config = _config_from(args)
    engine = MemoryEngine.recover(config, snapshot_path=args.snapshot)
    lines = [f"{'user':<8}{'entries':>8}{'raw':>6}{'summary':>8}{'meta':>6}{'pinned':>7}{'bytes':>10}"]
    totals = [0, 0, 0, 0, 0, 0]
    for user in engine.users():
        entries = engine.live_entries(user)
        kinds = {EntryKind.RAW: 0, EntryKind.SUMMARY: 0, EntryKind.META: 0}
        pinned = 0
        for entry in entries:
            kinds[entry.kind] += 1
            pinned += entry.pinned
        row = [len(entries), kinds[EntryKind.RAW], kinds[EntryKind.SUMMARY], kinds[EntryKind.META], pinned, engine.store_bytes(user)]
        totals = [a + b for a, b in zip(totals, row)]
        lines.append(f"{user:<8}{row[0]:>8}{row[1]:>6}{row[2]:>8}{row[3]:>6}{row[4]:>7}{row[5]:>10}")
    lines.append(f"{'total':<8}{totals[0]:>8}{totals[1]:>6}{totals[2]:>8}{totals[3]:>6}{totals[4]:>7}{totals[5]:>10}")
    _emit("\n".join(lines), args.out)
    return 0


def cmd_compact(args) -> int:
    config = _config_from(args)
    engine = MemoryEngine.recover(config, snapshot_path=args.snapshot)
    reports = engine.run_compaction(args.now)
    merges = sum(len(r.merges) for r in reports.values())
    before = sum(r.bytes_before for r in reports.values())
    after = sum(r.bytes_after for r in reports.values())
    engine.write_snapshot(args.out)
    print(f"{merges} merges, bytes {before} -> {after}; wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnemo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False, out_help="output path"):
        p.add_argument("--config", help="flat key=value engine config file")
        p.add_argument("--seed", type=int, help="override the engine rng seed")
        p.add_argument("--out", required=out_required, help=out_help)

    p = sub.add_parser("generate", help="generate a synthetic workload log and recall spec")
    common(p, out_required=True, out_help="output directory")
    p.add_argument("--users", type=int, default=38)
    p.add_argument("--days", type=int, default=28)
    p.add_argument("--conv-per-day", type=float, default=7.9)
    p.add_argument("--turns-per-conv", type=float, default=2.0)
    p.add_argument("--target-turns", type=int, default=11_504, help="0 disables turn scaling")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("replay", help="replay a workload log; write metrics, trace, snapshot, figures")
    common(p, out_required=True, out_help="output directory")
    p.add_argument("--log", required=True, help="replay event log")
    p.add_argument("--no-compression", action="store_true", help="disable compaction and pruning")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("query", help="search a snapshot")
    common(p)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("recall", help="evaluate recall of marked events against a snapshot")
    common(p)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--spec", required=True, help="recall spec json")
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_recall)

    p = sub.add_parser("stats", help="per-user store statistics from a snapshot")
    common(p)
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("compact", help="run one manual compaction pass on a snapshot")
    common(p, out_required=True, out_help="path of the new snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--now", type=float, required=True, help="pass clock (epoch seconds)")
    p.set_defaults(func=cmd_compact)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WorkloadError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, JournalCorruption, NotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
