"""Discrete 15x15 driving grid governed by a culture."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from xaer.culture import SPEED_MAX, Culture, encode, evaluate, sample_road, sample_vehicle

DIRECTIONS = ("N", "S", "E", "W")
_OFFSETS = {"N": (0, 1), "S": (0, -1), "E": (1, 0), "W": (-1, 0)}
N_ACTIONS = len(DIRECTIONS) * SPEED_MAX


@dataclass(frozen=True)
class GridAction:
    direction: str
    speed: int

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if not (isinstance(self.speed, (int, np.integer)) and 1 <= self.speed <= SPEED_MAX):
            raise ValueError(f"speed must be an integer in [1, {SPEED_MAX}], got {self.speed!r}")

    @classmethod
    def from_index(cls, index: int) -> "GridAction":
        if not 0 <= index < N_ACTIONS:
            raise ValueError(f"action index {index} outside [0, {N_ACTIONS})")
        return cls(DIRECTIONS[index // SPEED_MAX], int(index % SPEED_MAX) + 1)

    @property
    def index(self) -> int:
        return DIRECTIONS.index(self.direction) * SPEED_MAX + self.speed - 1


class EpisodeOver(RuntimeError):
    """Raised when stepping an environment whose episode has terminated."""


class GridDrive:
    """Visit as many new cells as possible without breaking a speed limit.

    Reward is ``speed / 12`` for entering a new cell within its limit, 0 for
    revisits and bumps against the border, and -1 (terminal) for speeding.
    """

    TRACE_COLUMNS = ("step", "x", "y", "direction", "speed", "reward", "explanation")

    def __init__(self, culture: Culture, size: int = 15, max_steps: int = 100, seed: int | None = None):
        self.culture = culture
        self.size = size
        self.max_steps = max_steps
        self.rng = np.random.default_rng(seed)
        self.road_width = culture.schema.road_width()
        self.vehicle_width = culture.schema.vehicle_width()
        self.obs_dim = (self.vehicle_width + 1) + 4 * self.road_width + 2 * size * size + 2
        self.n_actions = N_ACTIONS
        self.done = True
        self.terminal = False
        self.trace: list[tuple] = []

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        n = self.size
        self.vehicle = sample_vehicle(self.culture, self.rng)
        self.roads = [[sample_road(self.culture, self.rng) for _ in range(n)] for _ in range(n)]
        self.road_enc = np.zeros((n, n, self.road_width), dtype=np.float32)
        self.caps = np.zeros((n, n), dtype=np.int64)
        self.labels: list[list[str]] = [[""] * n for _ in range(n)]
        for x in range(n):
            for y in range(n):
                road = self.roads[x][y]
                self.road_enc[x, y] = encode(self.culture.schema.road_properties, road)
                verdict = evaluate(self.culture, self.vehicle, road)
                self.caps[x, y] = verdict.speed_limit
                self.labels[x][y] = verdict.binding_label
        self.vehicle_enc = encode(self.culture.schema.vehicle_properties, self.vehicle)
        self.pos = (int(self.rng.integers(n)), int(self.rng.integers(n)))
        self.visited = np.zeros((n, n), dtype=bool)
        self.visited[self.pos] = True
        self.last_speed = 0
        self.step_count = 0
        self.done = False
        self.terminal = False
        self.trace = []
        return self.observation()

    def observation(self) -> np.ndarray:
        n = self.size
        x, y = self.pos
        neighbours = []
        for d in DIRECTIONS:
            dx, dy = _OFFSETS[d]
            nx, ny = x + dx, y + dy
            if 0 <= nx < n and 0 <= ny < n:
                neighbours.append(self.road_enc[nx, ny])
            else:
                neighbours.append(np.zeros(self.road_width, dtype=np.float32))
        here = np.zeros((n, n), dtype=np.float32)
        here[x, y] = 1.0
        return np.concatenate([
            self.vehicle_enc,
            [self.last_speed / SPEED_MAX],
            *neighbours,
            self.visited.astype(np.float32).ravel(),
            here.ravel(),
            [x / (n - 1), y / (n - 1)],
        ]).astype(np.float32)

    def step(self, action: GridAction | int) -> tuple[np.ndarray, float, bool, str]:
        if self.done:
            raise EpisodeOver("episode has terminated; call reset()")
        if not isinstance(action, GridAction):
            action = GridAction.from_index(int(action))
        dx, dy = _OFFSETS[action.direction]
        x, y = self.pos[0] + dx, self.pos[1] + dy
        inside = 0 <= x < self.size and 0 <= y < self.size
        if not inside:
            x, y = self.pos
        self.step_count += 1
        self.last_speed = action.speed
        if action.speed > self.caps[x, y]:
            reward, done, explanation = -1.0, True, self.labels[x][y]
        elif not inside or self.visited[x, y]:
            reward, done, explanation = 0.0, False, "null_move"
        else:
            reward, done, explanation = action.speed / SPEED_MAX, False, "new_cell"
        self.pos = (x, y)
        self.visited[x, y] = True
        self.terminal = done
        self.done = done or self.step_count >= self.max_steps
        self.trace.append((self.step_count, x, y, action.direction, action.speed, reward, explanation))
        return self.observation(), reward, self.done, explanation

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.TRACE_COLUMNS)
            writer.writerows(self.trace)
