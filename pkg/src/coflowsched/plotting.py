"""Matplotlib figures for reports and schedules (written to files, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .instance import CoflowInstance  # noqa: E402
from .oracle import BatchSummary  # noqa: E402
from .simulator import Schedule  # noqa: E402


def ratio_figure(summary: BatchSummary, path) -> Path:
    """Histogram of ALG/LP ratios with the guarantee marked, beside an LP-vs-ALG scatter."""
    rows = [r for r in summary.reports if r.ratio is not None]
    ratios = np.array([r.ratio for r in rows])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    if len(ratios):
        ax1.hist(ratios, bins=min(30, max(5, len(ratios) // 3)), color="tab:blue", alpha=0.8)
    for b in sorted({r.bound for r in summary.reports}):
        ax1.axvline(b, color="tab:red", linestyle="--", label=f"bound {b:g}")
    ax1.set_xlabel("ALG / LP")
    ax1.set_ylabel("instances")
    ax1.legend(loc="upper right")
    ax1.set_title(f"{summary.config.get('objective')} / {summary.config.get('mode')}")

    lp = np.array([r.lp for r in rows])
    alg = np.array([r.alg for r in rows])
    ok = np.array([r.passed for r in rows], dtype=bool)
    if len(lp):
        ax2.scatter(lp[ok], alg[ok], s=12, label="pass")
        if (~ok).any():
            ax2.scatter(lp[~ok], alg[~ok], s=16, color="tab:red", label="fail")
        top = float(max(lp.max(), alg.max())) * 1.05
        ax2.plot([0, top], [0, top], color="gray", linewidth=0.8, label="ALG = LP")
        b = max(r.bound for r in rows)
        ax2.plot([0, top / b], [0, top], color="tab:red", linewidth=0.8, linestyle="--", label=f"ALG = {b:g} LP")
    ax2.set_xlabel("LP value")
    ax2.set_ylabel("algorithm value")
    ax2.legend(loc="upper left")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def gantt_figure(schedule: Schedule, inst: CoflowInstance, path) -> Path:
    """One lane per (core, input port); bars coloured by coflow."""
    lanes = sorted({(s.core, s.flow.src) for s in schedule.segments})
    lane_of = {lane: n for n, lane in enumerate(lanes)}
    cmap = plt.get_cmap("tab10")
    fig, ax = plt.subplots(figsize=(10, 0.45 * len(lanes) + 1.5))
    for s in schedule.segments:
        y = lane_of[(s.core, s.flow.src)]
        start, end = float(s.start), float(s.end)
        ax.broken_barh([(start, end - start)], (y - 0.4, 0.8), color=cmap((s.flow.coflow - 1) % 10), edgecolor="black", linewidth=0.4)
        if end - start > 0.04 * float(schedule.makespan):
            ax.text((start + end) / 2, y, f"{s.flow.dst - inst.N}", ha="center", va="center", fontsize=7)
    ax.set_yticks(range(len(lanes)))
    ax.set_yticklabels([f"core {p} in {i}" for p, i in lanes])
    ax.set_xlabel("time")
    ax.set_title("transmissions (label = output port, colour = coflow)")
    handles = [plt.Rectangle((0, 0), 1, 1, color=cmap((k - 1) % 10)) for k in range(1, inst.n + 1)]
    ax.legend(handles, [f"coflow {k}" for k in range(1, inst.n + 1)], loc="upper right", fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
