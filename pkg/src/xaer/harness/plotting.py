"""Offline figures rendered from curve CSVs and score reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from xaer.harness.scoring import N_REGIONS, MatrixRow, RunCurve  # noqa: E402


def plot_curves(curves: dict[str, Sequence[RunCurve]], path: str | Path, title: str = "",
                total_steps: int | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, (label, group) in enumerate(curves.items()):
        color = f"C{i}"
        for j, c in enumerate(group):
            ax.plot(c.steps, c.values, color=color, alpha=0.8, lw=1, label=label if j == 0 else None)
    if total_steps:
        for k in range(1, N_REGIONS):
            ax.axvline(k * total_steps / N_REGIONS, color="0.9", lw=0.5, zorder=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episode reward")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_matrix(rows: Sequence[MatrixRow], path: str | Path) -> Path:
    tasks = sorted({r.task for r in rows})
    variants = sorted({r.variant for r in rows})
    width = 0.8 / max(len(variants), 1)
    fig, ax = plt.subplots(figsize=(max(5, 1.6 * len(tasks)), 4))
    for vi, v in enumerate(variants):
        xs, meds, lo, hi = [], [], [], []
        for ti, t in enumerate(tasks):
            for r in rows:
                if r.task == t and r.variant == v:
                    xs.append(ti + vi * width)
                    meds.append(r.median)
                    lo.append(r.median - r.q25)
                    hi.append(r.q75 - r.median)
        ax.bar(xs, meds, width, yerr=[lo, hi], capsize=3, label=v, color=f"C{vi}")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(tasks))], tasks)
    ax.set_ylabel("best-region median (IQR bars)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
