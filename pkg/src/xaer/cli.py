"""Command line entry point: run, score, matrix, ablate-xi."""

from __future__ import annotations

import argparse
import glob
import math
import sys
from pathlib import Path

from xaer.harness.config import XI_GRID, ConfigError, ExperimentConfig, load_config
from xaer.harness.runner import run_experiment
from xaer.harness.scoring import (
    ScoreReport, compare_matrix, matrix_csv, matrix_text, read_curve, score_curve, score_pooled,
)


def _expand(pattern: str) -> list[Path]:
    paths = sorted(Path(p) for p in glob.glob(pattern, recursive=True))
    if not paths:
        raise FileNotFoundError(f"no files match {pattern!r}")
    return paths


def _run_config(path: Path) -> ExperimentConfig | None:
    cfg = path.parent / "config.yaml"
    return load_config(cfg) if cfg.exists() else None


def score_directory(csvs: list[Path], out: Path | None = None) -> list[ScoreReport]:
    """Score every curve plus the pooled curve of one run directory."""
    from xaer.harness.plotting import plot_curves

    d = csvs[0].parent
    out = out or d
    cfg = _run_config(csvs[0])
    labels = {"task": cfg.task, "variant": cfg.variant} if cfg else {"task": d.name, "variant": d.name}
    total = cfg.total_env_steps if cfg else None
    curves = [read_curve(p) for p in csvs]
    curves = [c for c in curves if len(c)]
    if not curves:
        raise ValueError(f"no curve points in {d}")
    reports = []
    for c in curves:
        r = score_curve(c, total, **labels)
        r.save(out / f"score_seed_{c.seed}.json")
        reports.append(r)
    pooled = score_pooled(curves, total, **labels)
    pooled.save(out / "score_pooled.json")
    reports.append(pooled)
    plot_curves({labels["variant"]: curves}, out / "curves.png", title=labels["task"], total_steps=total)
    return reports


def _print_reports(reports: list[ScoreReport]) -> None:
    print("task,variant,seed,region,median,q25,q75,n_points")
    for r in reports:
        print(f"{r.task},{r.variant},{r.seed},{r.region},{r.median:.4f},{r.q25:.4f},{r.q75:.4f},{r.n_points}")


def _write_matrix(reports: list[ScoreReport], prefix: Path) -> str:
    from xaer.harness.plotting import plot_matrix

    rows = compare_matrix(reports)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".csv").write_text(matrix_csv(rows))
    plot_matrix(rows, prefix.with_suffix(".png"))
    return matrix_text(rows)


def cmd_run(args) -> int:
    config = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else config.seeds
    paths = run_experiment(config, args.out, seeds=seeds, reuse=args.reuse,
                           progress=None if args.quiet else _progress)
    for p in paths:
        print(f"curve,{p}")
    _print_reports(score_directory(paths))
    return 0


def _progress(step, mean):
    print(f"step {step} mean_episode_reward {mean:.4f}", file=sys.stderr)


def cmd_score(args) -> int:
    groups: dict[Path, list[Path]] = {}
    for p in _expand(args.curves):
        if p.suffix == ".csv" and not p.name.endswith((".timing.csv", ".greedy.csv")):
            groups.setdefault(p.parent, []).append(p)
    if not groups:
        raise FileNotFoundError(f"no curve CSVs match {args.curves!r}")
    reports = []
    for files in groups.values():
        reports.extend(score_directory(files))
    _print_reports(reports)
    return 0


def cmd_matrix(args) -> int:
    reports = [ScoreReport.load(p) for p in _expand(args.reports)]
    if len(reports) < 2:
        print("warning: a comparison needs at least two reports", file=sys.stderr)
    print(_write_matrix(reports, Path(args.out)), end="")
    print(f"matrix,{Path(args.out).with_suffix('.csv')}")
    return 0


def cmd_ablate_xi(args) -> int:
    base = load_config(args.config)
    reports = []
    for xi in XI_GRID:
        config = base.replace(xi=xi)
        paths = run_experiment(config, args.out, reuse=True, progress=None if args.quiet else _progress)
        pooled = score_directory(paths)[-1]
        pooled.variant = f"xi={'inf' if math.isinf(xi) else int(xi)}"
        reports.append(pooled)
    _print_reports(reports)
    print(_write_matrix(reports, Path(args.out) / f"{base.task}-xi-ablation"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xaer", description="Explanation-aware replay experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every seed of a config and score the curves")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="runs")
    r.add_argument("--reuse", action="store_true", help="skip seeds whose curve already matches the config")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="best-region scores for curve CSVs")
    s.add_argument("--curves", required=True, help="glob of seed_<k>.csv files")
    s.set_defaults(func=cmd_score)

    m = sub.add_parser("matrix", help="comparison table from score reports")
    m.add_argument("--reports", required=True, help="glob of score JSON files")
    m.add_argument("--out", default="matrix", help="output prefix for the .csv and .png")
    m.set_defaults(func=cmd_matrix)

    a = sub.add_parser("ablate-xi", help="rerun a config over xi in {1,2,3,4,5,inf}")
    a.add_argument("--config", required=True)
    a.add_argument("--out", default="runs")
    a.add_argument("--quiet", action="store_true")
    a.set_defaults(func=cmd_ablate_xi)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
