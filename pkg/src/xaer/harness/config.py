"""Declarative experiment configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from xaer.agents import DQNConfig, SACConfig, TD3Config
from xaer.replay import HOW, HOW_WHY, PER, PRIORITIZED, STRATEGIES, UNIFORM, WHY

GRID_TASKS = ("GridEasy", "GridMedium", "GridHard")
GRAPH_TASKS = ("GraphEasy", "GraphMedium", "GraphHard")
SPARSE_TASKS = ("GraphEasySR", "GraphMediumSR", "GraphHardSR")
TASKS = GRID_TASKS + GRAPH_TASKS + SPARSE_TASKS
ALGORITHMS = ("DQN", "TD3", "SAC")
XI_GRID = (1, 2, 3, 4, 5, math.inf)

_AGENT_CONFIGS = {"DQN": DQNConfig, "TD3": TD3Config, "SAC": SACConfig}
_STRATEGY_NAMES = {HOW: "HOW", WHY: "WHY", HOW_WHY: "HOW+WHY"}


class ConfigError(ValueError):
    """Experiment configuration is invalid."""


def task_level(task: str) -> str:
    return task.replace("Grid", "").replace("Graph", "").replace("SR", "")


def default_xi(algorithm: str) -> float:
    return 3.0 if algorithm == "SAC" else 1.0


@dataclass
class ExperimentConfig:
    task: str
    algorithm: str
    strategy: str = PER
    inter_cluster: str = PRIORITIZED
    xi: float | None = None
    total_env_steps: int | None = None
    eval_every: int = 1_000
    eval_window: int = 20
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    name: str | None = None
    # replay
    capacity: int = 50_000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    priority_epsilon: float = 1e-6
    how_window: int = 100
    preallocate_clusters: bool = False
    # training loop
    batch_size: int = 128
    train_every: int = 4
    warmup: int = 2_000
    greedy_eval_episodes: int = 0
    record_wall_time: bool = False
    # environment
    env: dict[str, Any] = field(default_factory=dict)
    # algorithm hyperparameters, overriding the agent config defaults
    agent: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.is_grid != (self.algorithm == "DQN"):
            raise ConfigError(f"{self.algorithm} cannot run on {self.task}: DQN pairs with Grid tasks, "
                              "TD3/SAC with Graph tasks")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown buffer strategy {self.strategy!r}")
        if self.inter_cluster not in (PRIORITIZED, UNIFORM):
            raise ConfigError(f"unknown inter-cluster mode {self.inter_cluster!r}")
        if isinstance(self.xi, str):
            self.xi = math.inf if self.xi.lower() in ("inf", "infinity", "∞") else float(self.xi)
        if self.xi is None:
            self.xi = default_xi(self.algorithm)
        if not self.xi >= 1:
            raise ConfigError("xi must be >= 1")
        if self.total_env_steps is None:
            self.total_env_steps = 200_000 if self.is_grid else 500_000
        if self.total_env_steps <= 0 or self.eval_every <= 0:
            raise ConfigError("total_env_steps and eval_every must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        unknown = set(self.agent) - {f.name for f in dataclasses.fields(_AGENT_CONFIGS[self.algorithm])}
        if unknown:
            raise ConfigError(f"unknown {self.algorithm} hyperparameters: {sorted(unknown)}")
        if self.name is None:
            self.name = f"{self.task}-{self.variant}".replace("+", "_").replace(" ", "_")

    @property
    def is_grid(self) -> bool:
        return self.task in GRID_TASKS

    @property
    def sparse(self) -> bool:
        return self.task in SPARSE_TASKS

    @property
    def level(self) -> str:
        return task_level(self.task)

    @property
    def variant(self) -> str:
        if self.strategy == PER:
            return f"{self.algorithm}-PER"
        label = f"XA{self.algorithm}-{_STRATEGY_NAMES[self.strategy]}"
        if self.inter_cluster == UNIFORM:
            label += "-uniform"
        if self.xi != default_xi(self.algorithm):
            label += f"-xi{'inf' if math.isinf(self.xi) else f'{self.xi:g}'}"
        return label

    def agent_config(self):
        return _AGENT_CONFIGS[self.algorithm](**self.agent)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["xi"] = "inf" if math.isinf(self.xi) else self.xi
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        if "xi" in changes or "strategy" in changes or "inter_cluster" in changes:
            d["name"] = None
        d.update(changes)
        return ExperimentConfig(**d)


def load_config(path: str | Path) -> ExperimentConfig:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping of hyperparameters")
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8")
