"""Best-region scoring of reward curves and the variant comparison matrix."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

N_REGIONS = 20


@dataclass
class RunCurve:
    steps: np.ndarray
    values: np.ndarray
    seed: int | str = 0

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.steps.shape != self.values.shape or self.steps.ndim != 1:
            raise ValueError("steps and values must be 1-D arrays of equal length")
        if len(self.steps) > 1 and np.any(np.diff(self.steps) <= 0):
            raise ValueError("env_step must be strictly increasing")

    def __len__(self):
        return len(self.steps)


def read_curve(path: str | Path, seed=None) -> RunCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if seed is None:
        stem = Path(path).stem
        seed = int(stem.split("_")[-1]) if stem.split("_")[-1].isdigit() else stem
    return RunCurve([int(r["env_step"]) for r in rows], [float(r["mean_episode_reward"]) for r in rows], seed)


@dataclass
class ScoreReport:
    median: float
    q25: float
    q75: float
    region: int
    n_points: int
    task: str = ""
    variant: str = ""
    seed: int | str = "pooled"

    def __post_init__(self):
        if not 0 <= self.region < N_REGIONS:
            raise ValueError(f"region index {self.region} outside [0, {N_REGIONS})")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "ScoreReport":
        return cls(**json.loads(Path(path).read_text()))


def region_index(steps, total_steps: int) -> np.ndarray:
    """Region of each step; region k covers steps in (k*T/20, (k+1)*T/20]."""
    steps = np.asarray(steps, dtype=np.int64)
    # exact integer ceil(20*step/T) - 1
    idx = -((-N_REGIONS * steps) // total_steps) - 1
    return np.clip(idx, 0, N_REGIONS - 1)


def _best_region(region_values: dict[int, np.ndarray]) -> tuple[int, np.ndarray]:
    best, best_med = None, -math.inf
    for k in sorted(region_values):
        med = float(np.median(region_values[k]))
        if med > best_med:
            best, best_med = k, med
    return best, region_values[best]


def _report(region: int, vals: np.ndarray, **labels) -> ScoreReport:
    q25, med, q75 = np.percentile(vals, [25, 50, 75])
    return ScoreReport(float(med), float(q25), float(q75), int(region), len(vals), **labels)


def score_curve(curve: RunCurve, total_steps: int | None = None, **labels) -> ScoreReport:
    """Median and inter-quartile range of the region with the highest median.

    The step axis (0, T] is cut into 20 equal regions, T defaulting to the
    last logged step. Ties go to the earliest region.
    """
    return score_pooled([curve], total_steps, **labels) if len(curve) else _empty()


def score_pooled(curves: Sequence[RunCurve], total_steps: int | None = None, **labels) -> ScoreReport:
    """Like :func:`score_curve`, but pools the points of several seeds per region."""
    curves = [c for c in curves if len(c)]
    if not curves:
        _empty()
    if total_steps is None:
        total_steps = max(int(c.steps[-1]) for c in curves)
    buckets: dict[int, list[np.ndarray]] = {}
    for c in curves:
        idx = region_index(c.steps, total_steps)
        for k in np.unique(idx):
            buckets.setdefault(int(k), []).append(c.values[idx == k])
    region, vals = _best_region({k: np.concatenate(v) for k, v in buckets.items()})
    labels.setdefault("seed", curves[0].seed if len(curves) == 1 else "pooled")
    return _report(region, vals, **labels)


def _empty():
    raise ValueError("cannot score an empty curve")


# --- comparison matrix ----------------------------------------------------------

@dataclass
class MatrixRow:
    task: str
    variant: str
    median: float
    q25: float
    q75: float
    best: bool
    tie: bool


def compare_matrix(reports: Sequence[ScoreReport], tol: float = 1e-12) -> list[MatrixRow]:
    """Group reports by task; mark the highest median per task, flagging ties."""
    by_task: dict[str, list[ScoreReport]] = {}
    for r in reports:
        by_task.setdefault(r.task, []).append(r)
    rows = []
    for task in sorted(by_task):
        group = sorted(by_task[task], key=lambda r: r.variant)
        top = max(r.median for r in group)
        winners = [abs(r.median - top) <= tol for r in group]
        tie = sum(winners) > 1
        rows.extend(MatrixRow(task, r.variant, r.median, r.q25, r.q75, w, tie and w)
                    for r, w in zip(group, winners))
    return rows


def matrix_csv(rows: Sequence[MatrixRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("task", "variant", "median", "q25", "q75", "best", "tie"))
    for r in rows:
        w.writerow((r.task, r.variant, f"{r.median:.4f}", f"{r.q25:.4f}", f"{r.q75:.4f}", int(r.best), int(r.tie)))
    return buf.getvalue()


def matrix_text(rows: Sequence[MatrixRow]) -> str:
    width = max([len(r.variant) for r in rows] + [7])
    lines = [f"{'task':<14} {'variant':<{width}} {'median':>10}  {'IQR':<22}"]
    ties = set()
    for r in rows:
        mark = "*" if r.best else " "
        iqr = f"({r.q25:.2f}, {r.q75:.2f})"
        lines.append(f"{r.task:<14} {r.variant:<{width}} {r.median:>10.2f}{mark} {iqr:<22}")
        if r.tie:
            ties.add(r.task)
    lines.append("* best median per task")
    for task in sorted(ties):
        lines.append(f"note: tie on best median in {task}")
    return "\n".join(lines) + "\n"
