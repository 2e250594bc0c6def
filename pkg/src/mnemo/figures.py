"""Render the metrics CSV into figures next to it.

Two charts: cumulative memory growth with and without compression, and the
per-day compaction/prune/check-in activity against the live entry count.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def read_metrics(path) -> list[dict[str, int]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [{key: int(value) for key, value in row.items()} for row in reader]


def render_metrics_figures(metrics_csv, out_dir) -> list[Path]:
    """Write memory_growth.png and compression_activity.png; returns the paths."""
    rows = read_metrics(metrics_csv)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    days = [r["day"] for r in rows]
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(days, [r["bytes_baseline"] / 1024 for r in rows], label="without compression", color="#b23a48", lw=2)
    ax.plot(days, [r["bytes_live"] / 1024 for r in rows], label="with compression", color="#2a6f97", lw=2)
    ax.set_xlabel("simulated day")
    ax.set_ylabel("store size (KiB)")
    ax.set_title("Memory growth with and without compression")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out_dir / "memory_growth.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(days, [r["entries_live"] for r in rows], label="live entries", color="#2a6f97", lw=2)
    ax.set_xlabel("simulated day")
    ax.set_ylabel("live entries")
    ax.grid(alpha=0.3)
    twin = ax.twinx()
    width = 0.4
    twin.bar([d - width / 2 for d in days], [r["merges"] for r in rows], width=width, label="merges", color="#7fb069", alpha=0.8)
    twin.bar([d + width / 2 for d in days], [r["prunes"] for r in rows], width=width, label="prunes", color="#e6aa68", alpha=0.8)
    twin.set_ylabel("merges / pruned entries per day")
    ax.set_title("Compaction and pruning activity")
    lines, labels = ax.get_legend_handles_labels()
    bars, bar_labels = twin.get_legend_handles_labels()
    ax.legend(lines + bars, labels + bar_labels, loc="upper left")
    fig.tight_layout()
    path = out_dir / "compression_activity.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
