import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xaer.cli import main
from xaer.harness.config import ConfigError, ExperimentConfig, dump_config, load_config
from xaer.harness.runner import CURVE_COLUMNS, cluster_keys, is_cached, run_experiment, run_seed
from xaer.harness.scoring import (
    RunCurve, ScoreReport, compare_matrix, matrix_csv, matrix_text, read_curve, region_index, score_curve,
    score_pooled,
)


def tiny(**kw):
    base = dict(task="GridEasy", algorithm="DQN", total_env_steps=1500, eval_every=100, warmup=300,
                batch_size=16, capacity=2000, seeds=[0], agent={"hidden": [16], "epsilon_decay_steps": 500})
    base.update(kw)
    return ExperimentConfig(**base)


def tiny_graph(**kw):
    base = dict(task="GraphEasy", algorithm="SAC", total_env_steps=900, eval_every=100, warmup=200,
                batch_size=16, capacity=2000, seeds=[0], env={"max_frames": 150},
                agent={"hidden": [16], "random_steps": 300})
    base.update(kw)
    return ExperimentConfig(**base)


# --- configuration ---------------------------------------------------------------------

@pytest.mark.parametrize("task,algo", [("GraphEasy", "DQN"), ("GraphHardSR", "DQN"), ("GridEasy", "TD3"),
                                       ("GridMedium", "SAC")])
def test_pairing_rejected(task, algo):
    with pytest.raises(ConfigError):
        ExperimentConfig(task=task, algorithm=algo)


@pytest.mark.parametrize("kw", [dict(task="GridHuge"), dict(algorithm="PPO"), dict(strategy="WHAT"),
                                dict(xi=0.5), dict(inter_cluster="random"), dict(seeds=[]),
                                dict(agent={"lr": 1e-3, "dropout": 0.1}), dict(total_env_steps=0)])
def test_invalid_values_rejected(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{"task": "GridEasy", "algorithm": "DQN", **kw})


def test_defaults():
    grid = ExperimentConfig(task="GridMedium", algorithm="DQN")
    assert (grid.total_env_steps, grid.xi, grid.seeds, grid.eval_every, grid.eval_window) == (200_000, 1, [0, 1, 2],
                                                                                              1000, 20)
    sac = ExperimentConfig(task="GraphEasy", algorithm="SAC", strategy="HOW_WHY")
    assert (sac.total_env_steps, sac.xi) == (500_000, 3)
    assert ExperimentConfig(task="GraphEasySR", algorithm="TD3").sparse
    assert sac.variant == "XASAC-HOW+WHY"
    assert grid.variant == "DQN-PER"


def test_infinite_xi_parses_and_round_trips(tmp_path):
    cfg = ExperimentConfig(task="GridEasy", algorithm="DQN", strategy="WHY", xi="inf")
    assert math.isinf(cfg.xi)
    assert cfg.variant == "XADQN-WHY-xiinf"
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg and back.digest() == cfg.digest()


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("task: GridEasy\nalgorithm: DQN\nlearning_rate: 3\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("- not a mapping\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_replace_renames_variant():
    cfg = tiny(strategy="HOW_WHY")
    assert cfg.replace(xi=2).name == "GridEasy-XADQN-HOW_WHY-xi2"
    assert cfg.replace(seeds=[4]).name == cfg.name


def test_cluster_keys_cover_strategy():
    keys = cluster_keys(tiny(strategy="HOW_WHY"))
    assert len(keys) == 2 * (5 + 2)
    assert "school_zone_better" in keys and "null_move_worse" in keys
    assert cluster_keys(tiny()) == ()


# --- scoring ---------------------------------------------------------------------------

def test_region_boundaries_are_right_closed():
    T = 2000
    idx = region_index([1, 100, 101, 200, 1900, 1901, 2000], T)
    assert idx.tolist() == [0, 0, 1, 1, 18, 19, 19]
    assert region_index([0], T).tolist() == [0]


@settings(max_examples=60, deadline=None)
@given(total=st.integers(20, 10**6), data=st.data())
def test_regions_partition_the_axis(total, data):
    steps = np.array(sorted(data.draw(st.sets(st.integers(1, total), min_size=1, max_size=50))))
    idx = region_index(steps, total)
    assert np.all((idx >= 0) & (idx < 20))
    assert np.all(np.diff(idx) >= 0)
    # each step sits in (k T/20, (k+1) T/20]
    assert np.all(idx * total < 20 * steps) and np.all(20 * steps <= (idx + 1) * total)


@pytest.mark.parametrize("v", [0.0, -1.5, 7.25])
def test_constant_curve(v):
    rep = score_curve(RunCurve(np.arange(1000, 40_001, 1000), np.full(40, v)))
    assert (rep.median, rep.q25, rep.q75) == (v, v, v)
    assert 0 <= rep.region < 20


def test_linear_curve_peaks_in_last_region():
    steps = np.arange(1, 201) * 1000
    rep = score_curve(RunCurve(steps, steps / 100_000))
    assert rep.region == 19
    # last region holds steps 191k..200k, values 1.91..2.00
    assert rep.median == pytest.approx(1.955)


def test_forty_point_hand_example():
    # T = 2000, regions are 100 steps wide.
    steps, values = [], []
    # region 7 = (700, 800]: five points 3, 9, 4, 8, 6 -> sorted 3 4 6 8 9
    steps += [720, 740, 760, 780, 800]
    values += [3, 9, 4, 8, 6]
    # step 700 belongs to region 6 together with 650: median 7.5 would win, so keep it low
    steps += [650, 700]
    values += [10, 0]  # region 6 median 5
    # region 12 = (1200, 1300]: 5, 7, 1 -> median 5
    steps += [1210, 1250, 1300]
    values += [5, 7, 1]
    # remaining 30 points: regions 0-5 and 13-19, all values 2
    rest = [s for s in range(50, 2001, 50) if s // 100 not in (6, 7, 12) and not (600 < s <= 800)]
    rest = [s for s in rest if not (1200 < s <= 1300)][:30]
    steps += rest
    values += [2] * len(rest)
    order = np.argsort(steps)
    curve = RunCurve(np.array(steps)[order], np.array(values, dtype=float)[order])
    assert len(curve) == 40
    rep = score_curve(curve, total_steps=2000)
    # sorted region-7 values 3 4 6 8 9: median 6, 25th pct at position 1 -> 4, 75th at position 3 -> 8
    assert (rep.region, rep.median, rep.q25, rep.q75, rep.n_points) == (7, 6.0, 4.0, 8.0, 5)


def test_ties_pick_the_earliest_region():
    rep = score_curve(RunCurve([100, 200, 300, 400], [1.0, 5.0, 2.0, 5.0]), total_steps=400)
    assert rep.region == 9 and rep.median == 5.0  # regions 9 and 19 tie


def test_scoring_is_pure():
    curve = RunCurve(np.arange(1, 41) * 50, np.random.default_rng(0).normal(size=40))
    assert score_curve(curve) == score_curve(curve)


def test_empty_curve_rejected():
    with pytest.raises(ValueError):
        score_curve(RunCurve([], []))
    with pytest.raises(ValueError):
        RunCurve([2, 1], [0.0, 0.0])


def test_pooled_score_merges_seed_points():
    a = RunCurve([100, 200], [1.0, 3.0], seed=0)
    b = RunCurve([100, 200], [2.0, 5.0], seed=1)
    rep = score_pooled([a, b], total_steps=200)
    # region 19 holds {3, 5}: median 4
    assert (rep.region, rep.median, rep.q25, rep.q75, rep.seed) == (19, 4.0, 3.5, 4.5, "pooled")


def test_report_json_round_trip(tmp_path):
    rep = ScoreReport(3.14, 2.0, 4.0, 5, 10, task="GridHard", variant="XADQN-HOW+WHY", seed=1)
    rep.save(tmp_path / "r.json")
    assert ScoreReport.load(tmp_path / "r.json") == rep
    with pytest.raises(ValueError):
        ScoreReport(1.0, 1.0, 1.0, 20, 1)


# --- comparison matrix -----------------------------------------------------------------

def _rep(task, variant, median):
    return ScoreReport(median, median - 1, median + 1, 3, 9, task=task, variant=variant)


def test_matrix_marks_higher_median():
    rows = compare_matrix([_rep("GridHard", "XADQN-HOW+WHY", 3.14), _rep("GridHard", "DQN-PER", 1.99)])
    best = {r.variant: r.best for r in rows}
    assert best == {"XADQN-HOW+WHY": True, "DQN-PER": False}
    assert not any(r.tie for r in rows)


def test_single_variant_is_best():
    (row,) = compare_matrix([_rep("GraphEasy", "SAC-PER", -0.3)])
    assert row.best and not row.tie


def test_tie_marks_both_and_is_noted():
    rows = compare_matrix([_rep("GridEasy", "A", 2.0), _rep("GridEasy", "B", 2.0), _rep("GridEasy", "C", 1.0)])
    assert [(r.variant, r.best, r.tie) for r in rows] == [("A", True, True), ("B", True, True), ("C", False, False)]
    text = matrix_text(rows)
    assert "note: tie on best median in GridEasy" in text
    csv_text = matrix_csv(rows)
    assert csv_text.splitlines()[0] == "task,variant,median,q25,q75,best,tie"
    assert "GridEasy,A,2.0000,1.0000,3.0000,1,1" in csv_text


def test_matrix_groups_by_task():
    rows = compare_matrix([_rep("GridEasy", "A", 1.0), _rep("GridHard", "A", 0.5), _rep("GridHard", "B", 0.7)])
    assert [(r.task, r.variant, r.best) for r in rows] == [
        ("GridEasy", "A", True), ("GridHard", "A", False), ("GridHard", "B", True)]


# --- runner ----------------------------------------------------------------------------

@pytest.mark.parametrize("make", [lambda: tiny(strategy="HOW_WHY"), lambda: tiny(strategy="PER"),
                                  lambda: tiny_graph(strategy="WHY", xi=3)])
def test_rerun_gives_byte_identical_csv(make, tmp_path):
    cfg = make()
    a = run_seed(cfg, 0, tmp_path / "a").csv_path
    b = run_seed(cfg, 0, tmp_path / "b").csv_path
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == ",".join(CURVE_COLUMNS)
    assert len(lines) > 3


def test_curve_rows_start_after_first_episode_and_increase(tmp_path):
    cfg = tiny(strategy="WHY")
    res = run_seed(cfg, 1, tmp_path)
    curve = read_curve(res.csv_path)
    assert np.all(np.diff(curve.steps) > 0)
    assert np.all(curve.steps % cfg.eval_every == 0)
    clusters = [int(line.split(",")[3]) for line in res.csv_path.read_text().splitlines()[1:]]
    assert max(clusters) > 1 and res.updates > 0


def test_per_and_why_streams_match_until_first_sample():
    per, why = [], []
    r1 = run_seed(tiny(strategy="PER", total_env_steps=800), 3, stream=per)
    r2 = run_seed(tiny(strategy="WHY", total_env_steps=800), 3, stream=why)
    first = r1.first_sample_step
    assert first == r2.first_sample_step == 300
    assert per[:first] == why[:first]
    assert len(per) == 800


def test_cache_depends_on_config(tmp_path):
    cfg = tiny()
    run_experiment(cfg, tmp_path)
    assert is_cached(cfg, 0, tmp_path)
    assert not is_cached(cfg.replace(warmup=301), 0, tmp_path)
    assert not is_cached(cfg, 1, tmp_path)


# --- command line ----------------------------------------------------------------------

def _write(tmp_path, cfg, name="c.yaml"):
    dump_config(cfg, tmp_path / name)
    return str(tmp_path / name)


def test_cli_run_score_matrix(tmp_path, capsys):
    out = tmp_path / "runs"
    c1 = _write(tmp_path, tiny(strategy="PER", seeds=[0, 1]), "per.yaml")
    c2 = _write(tmp_path, tiny(strategy="HOW_WHY", seeds=[0, 1]), "xa.yaml")
    assert main(["run", "--config", c1, "--out", str(out), "--quiet"]) == 0
    assert main(["run", "--config", c2, "--seed", "1", "--out", str(out), "--quiet"]) == 0
    printed = capsys.readouterr().out
    assert "task,variant,seed,region,median,q25,q75,n_points" in printed
    assert (out / "GridEasy-DQN-PER" / "curves.png").stat().st_size > 0
    assert not (out / "GridEasy-XADQN-HOW_WHY" / "seed_0.csv").exists()

    assert main(["score", "--curves", str(out / "*" / "seed_*.csv")]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 1 + 3 + 2
    assert main(["matrix", "--reports", str(out / "*" / "score_pooled.json"), "--out", str(tmp_path / "m")]) == 0
    text = capsys.readouterr().out
    assert "GridEasy" in text and "*" in text
    assert (tmp_path / "m.csv").read_text().startswith("task,variant")
    assert (tmp_path / "m.png").stat().st_size > 0


def test_cli_ablate_xi(tmp_path, capsys):
    cfg = _write(tmp_path, tiny(strategy="WHY", total_env_steps=600, warmup=200))
    assert main(["ablate-xi", "--config", cfg, "--out", str(tmp_path / "runs"), "--quiet"]) == 0
    out = capsys.readouterr().out
    for label in ("xi=1", "xi=2", "xi=3", "xi=4", "xi=5", "xi=inf"):
        assert f",{label}," in out
    assert (tmp_path / "runs" / "GridEasy-xi-ablation.csv").exists()


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("task: GraphEasy\nalgorithm: DQN\n")
    assert main(["run", "--config", str(bad)]) != 0
    assert capsys.readouterr().err.startswith("error:")
    assert main(["score", "--curves", str(tmp_path / "nothing*.csv")]) != 0
    assert "error:" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _write(tmp_path, tiny())
    assert main(["run", "--config", cfg, "--out", str(blocker / "sub"), "--quiet"]) != 0
    assert "cannot create output directory" in capsys.readouterr().err


def test_report_files_are_json(tmp_path):
    cfg = tiny(strategy="HOW")
    main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "r"), "--quiet"])
    doc = json.loads((tmp_path / "r" / cfg.name / "score_pooled.json").read_text())
    assert set(doc) == {"median", "q25", "q75", "region", "n_points", "task", "variant", "seed"}
