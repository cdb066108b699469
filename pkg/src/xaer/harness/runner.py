"""Training loop: collect, stage, flush on episode end, learn with priority feedback."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xaer.agents import DQNAgent, SACAgent, TD3Agent
from xaer.agents.base import linear_schedule
from xaer.culture import GRAPH_OUTCOME_LABELS, GRID_OUTCOME_LABELS, build_culture, enumerate_explanations
from xaer.graphdrive import GraphDrive
from xaer.griddrive import GridDrive
from xaer.harness.config import ExperimentConfig, dump_config
from xaer.replay import HOW, HOW_WHY, PER, WHY, BufferConfig, ClusteredBuffer, XATransition

CURVE_COLUMNS = ("env_step", "mean_episode_reward", "episodes_done", "buffer_clusters", "wall_ms")
REWARD_FMT = "{:.6f}"


def make_env(config: ExperimentConfig, seed=None):
    culture = build_culture(config.level)
    if config.is_grid:
        return GridDrive(culture, seed=seed, **config.env)
    return GraphDrive(culture, sparse=config.sparse, seed=seed, **config.env)


def make_agent(config: ExperimentConfig, env, rng):
    c = config.agent_config()
    if config.algorithm == "DQN":
        return DQNAgent(env.obs_dim, env.n_actions, c, rng)
    cls = TD3Agent if config.algorithm == "TD3" else SACAgent
    return cls(env.obs_dim, env.action_low, env.action_high, c, rng)


def cluster_keys(config: ExperimentConfig) -> tuple[str, ...]:
    """Every key the strategy can produce, for pre-allocating clusters."""
    if config.strategy == PER:
        return ()
    if config.strategy == HOW:
        return ("better", "worse")
    outcomes = GRID_OUTCOME_LABELS if config.is_grid else GRAPH_OUTCOME_LABELS
    labels = sorted(enumerate_explanations(build_culture(config.level), outcomes))
    if config.strategy == WHY:
        return tuple(labels)
    assert config.strategy == HOW_WHY
    return tuple(f"{e}_{h}" for e in labels for h in ("better", "worse"))


def make_buffer(config: ExperimentConfig, rng) -> ClusteredBuffer:
    bc = BufferConfig(
        capacity=config.capacity,
        xi=config.xi,
        strategy=config.strategy,
        inter_cluster=config.inter_cluster,
        alpha=config.alpha,
        epsilon=config.priority_epsilon,
        how_window=config.how_window,
        known_keys=cluster_keys(config) if config.preallocate_clusters else (),
    )
    return ClusteredBuffer(bc, rng)


def seed_streams(seed: int):
    """Independent generators for environment, agent, buffer and evaluation."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


@dataclass
class RunResult:
    seed: int
    rows: list[tuple] = field(default_factory=list)
    episodes: int = 0
    updates: int = 0
    first_sample_step: int | None = None
    csv_path: Path | None = None


def run_dir(out: str | Path, config: ExperimentConfig) -> Path:
    return Path(out) / config.name


def curve_path(out: str | Path, config: ExperimentConfig, seed: int) -> Path:
    return run_dir(out, config) / f"seed_{seed}.csv"


def _format_row(row) -> list[str]:
    step, mean, episodes, clusters, wall = row
    return [str(step), REWARD_FMT.format(mean), str(episodes), str(clusters), str(wall)]


def greedy_return(agent, env, rng) -> float:
    env.reset(seed=int(rng.integers(2**31)))
    total, done = 0.0, False
    obs = env.observation()
    while not done:
        obs, r, done, _ = env.step(agent.act(obs, mode="greedy"))
        total += r
    return total


def run_seed(config: ExperimentConfig, seed: int, out: str | Path | None = None,
             stream: list | None = None, progress=None) -> RunResult:
    """Train one seed; returns the metric rows and writes them as CSV when ``out`` is given.

    ``stream`` collects (step, action, reward, explanation) for every env step.
    """
    if out is not None:
        _prepare_dir(out, config)
    env_rng, agent_rng, buffer_rng, eval_rng = seed_streams(seed)
    env = make_env(config)
    env.rng = env_rng
    agent = make_agent(config, env, agent_rng)
    buffer = make_buffer(config, buffer_rng)
    eval_env = make_env(config) if config.greedy_eval_episodes else None

    result = RunResult(seed)
    recent = deque(maxlen=config.eval_window)
    eval_rows, timing_rows = [], []
    t0 = time.perf_counter()
    obs = env.reset()
    ep_return, ep_id = 0.0, 0
    for step in range(1, config.total_env_steps + 1):
        action = agent.act(obs, mode="explore", step=step)
        obs2, reward, done, explanation = env.step(action)
        buffer.stage(XATransition(obs, action, reward, obs2, env.terminal, explanation, ep_id))
        if stream is not None:
            stream.append((step, np.asarray(action).tolist(), reward, explanation))
        ep_return += reward
        if done:
            buffer.observe_episode_end(ep_return)
            recent.append(ep_return)
            result.episodes += 1
            ep_id += 1
            ep_return = 0.0
            obs = env.reset()
        else:
            obs = obs2

        if step >= config.warmup and step % config.train_every == 0 and len(buffer) >= config.batch_size:
            if result.first_sample_step is None:
                result.first_sample_step = step
            beta = linear_schedule(config.beta_start, config.beta_end, config.total_env_steps, step)
            batch = buffer.sample(config.batch_size, beta)
            info = agent.update(batch, step)
            buffer.update_priorities(batch.handles, info["td_abs"])
            result.updates += 1

        if step % config.eval_every == 0 and recent:
            wall = int(round((time.perf_counter() - t0) * 1000))
            mean = float(np.mean(recent))
            result.rows.append((step, mean, result.episodes, len(buffer.clusters),
                                wall if config.record_wall_time else 0))
            timing_rows.append((step, wall))
            if eval_env is not None:
                vals = [greedy_return(agent, eval_env, eval_rng) for _ in range(config.greedy_eval_episodes)]
                eval_rows.append((step, float(np.mean(vals))))
            if progress is not None:
                progress(step, mean)

    if out is not None:
        result.csv_path = write_run(config, seed, out, result, eval_rows, timing_rows)
    return result


def write_curve(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in rows:
            w.writerow(_format_row(row))


def _prepare_dir(out, config) -> Path:
    d = run_dir(out, config)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {d}: {exc}") from None
    return d


def write_run(config, seed, out, result: RunResult, eval_rows=(), timing_rows=()) -> Path:
    d = _prepare_dir(out, config)
    dump_config(config, d / "config.yaml")
    path = curve_path(out, config, seed)
    write_curve(path, result.rows)
    # wall-clock data lives beside the curve so the curve itself stays reproducible
    with open(path.with_suffix(".timing.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("env_step", "wall_ms"))
        w.writerows(timing_rows)
    if eval_rows:
        with open(path.with_suffix(".greedy.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("env_step", "mean_greedy_return"))
            w.writerows((s, REWARD_FMT.format(v)) for s, v in eval_rows)
    meta = {"digest": config.digest(), "code": code_digest(config.algorithm), "seed": seed, "episodes": result.episodes, "updates": result.updates}
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


_SHARED_MODULES = ("culture", "replay", "sumtree", "agents/nn", "agents/base", "harness/runner")
_ALGO_MODULES = {
    "DQN": ("griddrive", "agents/dqn"),
    "TD3": ("griddrive", "graphdrive", "agents/td3"),
    "SAC": ("griddrive", "graphdrive", "agents/td3", "agents/sac"),
}


def code_digest(algorithm: str) -> str:
    """Hash of every source file that influences a training run of ``algorithm``."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha256()
    for name in _SHARED_MODULES + _ALGO_MODULES[algorithm]:
        h.update((root / f"{name}.py").read_bytes())
    return h.hexdigest()[:16]


def is_cached(config: ExperimentConfig, seed: int, out: str | Path) -> bool:
    path = curve_path(out, config, seed)
    meta = path.with_suffix(".meta.json")
    if not (path.exists() and meta.exists()):
        return False
    doc = json.loads(meta.read_text())
    return doc.get("digest") == config.digest() and doc.get("code") == code_digest(config.algorithm)


def run_experiment(config: ExperimentConfig, out: str | Path, seeds=None, reuse: bool = False,
                   progress=None) -> list[Path]:
    """Run every seed of ``config`` into ``out/<name>/seed_<k>.csv``."""
    paths = []
    for seed in (config.seeds if seeds is None else seeds):
        if reuse and is_cached(config, seed, out):
            paths.append(curve_path(out, config, seed))
            continue
        paths.append(run_seed(config, seed, out, progress=progress).csv_path)
    return paths
