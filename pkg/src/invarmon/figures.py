"""Figure rendering for the report paths.

matplotlib is imported lazily with the Agg backend so library users who
never render figures don't pay for it (and headless runs just work).
"""

from __future__ import annotations

from pathlib import Path


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_latency_histogram(hist: dict[int, int], path: str | Path, title: str | None = None):
    """Bar chart of detection latency (in process switches) vs frequency."""
    plt = _plt()
    xs = sorted(hist)
    ys = [hist[x] for x in xs]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.bar(xs, ys, width=1.0, color="#33658a", edgecolor="none")
    ax.set_xlabel("detection latency (process switches)")
    ax.set_ylabel("trials")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_overhead_figure(rows: list[dict], path: str | Path):
    """Grouped bars of computed vs reported values per metric row."""
    plt = _plt()
    labels = [r["metric"] for r in rows]
    computed = [r["computed"] for r in rows]
    reported = [r["reported"] for r in rows]
    xs = range(len(rows))
    fig, ax = plt.subplots(figsize=(9, 4.5))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], computed, width, label="computed", color="#33658a")
    ax.bar([x + width / 2 for x in xs], reported, width, label="reported", color="#f26419")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=25, ha="right", fontsize=8)
    ax.set_ylabel("value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
