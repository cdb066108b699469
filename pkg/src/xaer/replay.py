"""Explanation-aware clustered replay.

Transitions are routed into clusters keyed by an explanation (HOW, WHY or
HOW+WHY), prioritised by TD error inside each cluster and sampled with a
cluster-level distribution that is either proportional to summed priority
or uniform. A single-cluster configuration is ordinary proportional PER.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from xaer.sumtree import MaxTree, MinTree, SumTree

HOW, WHY, HOW_WHY, PER = "HOW", "WHY", "HOW_WHY", "PER"
STRATEGIES = (HOW, WHY, HOW_WHY, PER)
PRIORITIZED, UNIFORM = "prioritized", "uniform"
UNIVERSAL_KEY = "universal"
XI_INF = math.inf


@dataclass
class XATransition:
    s: Any
    a: Any
    r: float
    s_next: Any
    done: bool
    explanation: str | tuple[str, ...]
    episode_id: int = 0

    def __post_init__(self):
        if not self.explanation:
            raise ValueError("transition needs a non-empty explanation")
        if not math.isfinite(self.r):
            raise ValueError(f"reward must be finite, got {self.r}")


@dataclass
class BufferConfig:
    capacity: int = 50_000
    xi: float = 1.0
    strategy: str = HOW_WHY
    inter_cluster: str = PRIORITIZED
    alpha: float = 0.6
    epsilon: float = 1e-6
    how_window: int = 100
    known_keys: tuple[str, ...] = ()

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if not (self.xi >= 1):
            raise ValueError("xi must be >= 1 (use math.inf for the unbounded case)")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.inter_cluster not in (PRIORITIZED, UNIFORM):
            raise ValueError(f"unknown inter-cluster mode {self.inter_cluster!r}")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def needs_episode_return(self) -> bool:
        return self.strategy in (HOW, HOW_WHY)


@dataclass
class SampledBatch:
    items: list[XATransition]
    handles: list[tuple[Hashable, int, int]]
    weights: np.ndarray
    probabilities: np.ndarray = field(default=None, repr=False)


class RunningMean:
    """Mean over a sliding window of episode returns; 0 while empty."""

    def __init__(self, window: int):
        self.window = deque(maxlen=window)

    def push(self, value: float) -> None:
        self.window.append(float(value))

    @property
    def mean(self) -> float:
        return math.fsum(self.window) / len(self.window) if self.window else 0.0


def size_bounds(capacity: int, xi: float, n_clusters: int) -> tuple[int, float]:
    """Minimum and maximum cluster size for ``n_clusters`` clusters."""
    if n_clusters < 1:
        raise ValueError("size bounds need at least one cluster")
    if math.isinf(xi):
        return 0, capacity
    if float(xi).is_integer():
        xi = int(xi)
        s_min = capacity // (n_clusters * xi)
    else:
        s_min = math.floor(capacity / (n_clusters * xi))
    return s_min, s_min + (xi - 1) * n_clusters * s_min


def assign_cluster(
    t: XATransition,
    strategy: str,
    running_mean: float = 0.0,
    episode_return: float | None = None,
    cluster_sizes: dict[str, int] | None = None,
) -> str:
    if strategy == PER:
        return UNIVERSAL_KEY
    if strategy in (HOW, HOW_WHY):
        if episode_return is None:
            raise ValueError(f"{strategy} clustering needs the episode return")
        how = "better" if episode_return > running_mean else "worse"
        if strategy == HOW:
            return how
    if isinstance(t.explanation, str):
        why = t.explanation
    else:
        # several explanations apply: favour the most under-represented cluster
        sizes = cluster_sizes or {}
        suffix = "" if strategy == WHY else f"_{how}"
        why = min(t.explanation, key=lambda e: sizes.get(e + suffix, 0))
    return why if strategy == WHY else f"{why}_{how}"


class Cluster:
    """FIFO ring of transitions with sum/min/max priority trees over its slots."""

    def __init__(self, key: Hashable, created_at: int, capacity: int = 64):
        self.key = key
        self.created_at = created_at
        self.sum = SumTree(capacity)
        self.min = MinTree(capacity)
        self.max = MaxTree(capacity)
        self.capacity = self.sum.capacity
        self.items: list[XATransition | None] = [None] * self.capacity
        self.uids = np.full(self.capacity, -1, dtype=np.int64)
        self.head = 0
        self.size = 0

    def __len__(self):
        return self.size

    def _grow(self) -> None:
        order = [(self.head + i) % self.capacity for i in range(self.size)]
        leaves = self.sum.leaves()[order].copy()
        new_capacity = self.capacity * 2
        self.items = [self.items[i] for i in order] + [None] * (new_capacity - self.size)
        uids = np.full(new_capacity, -1, dtype=np.int64)
        uids[: self.size] = self.uids[order]
        self.uids = uids
        self.sum = SumTree(new_capacity)
        self.min = MinTree(new_capacity)
        self.max = MaxTree(new_capacity)
        self.capacity = new_capacity
        self.head = 0
        if self.size:
            slots = np.arange(self.size)
            for tree in (self.sum, self.min, self.max):
                tree[slots] = leaves

    def append(self, item: XATransition, uid: int, priority: float) -> int:
        if self.size == self.capacity:
            self._grow()
        slot = (self.head + self.size) % self.capacity
        self.items[slot] = item
        self.uids[slot] = uid
        self.set_priorities([slot], [priority])
        self.size += 1
        return slot

    def oldest_uid(self) -> int:
        return int(self.uids[self.head]) if self.size else -1

    def pop_oldest(self) -> XATransition:
        slot = self.head
        item = self.items[slot]
        self.items[slot] = None
        self.uids[slot] = -1
        self.sum[slot] = 0.0
        self.min[slot] = np.inf
        self.max[slot] = -np.inf
        self.head = (self.head + 1) % self.capacity
        self.size -= 1
        return item

    def set_priorities(self, slots, priorities) -> None:
        self.sum[slots] = priorities
        self.min[slots] = priorities
        self.max[slots] = priorities

    def priorities(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupied slots and their priorities, oldest first."""
        slots = (self.head + np.arange(self.size)) % self.capacity
        return slots, self.sum[slots]

    @property
    def total(self) -> float:
        return self.sum.total


class ClusteredBuffer:
    """Replay buffer partitioned into explanation clusters.

    Eviction keeps every cluster at or above ``S_min`` for as long as some
    other cluster is larger than ``S_min``; the victim is the globally
    oldest transition among the clusters that may give one up.
    """

    def __init__(self, config: BufferConfig, rng: np.random.Generator | int | None = None):
        self.config = config
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.clusters: dict[Hashable, Cluster] = {}
        self.running_mean = RunningMean(config.how_window)
        self.staged: list[XATransition] = []
        self._next_uid = 0
        self._size = 0
        self.evictions: list[tuple[Hashable, dict, int]] = []
        self.track_evictions = False
        self.s_min, self.s_max = size_bounds(config.capacity, config.xi, 1)
        for key in config.known_keys:
            self._cluster(key)

    def __len__(self):
        return self._size

    @property
    def keys(self) -> list[Hashable]:
        return list(self.clusters)

    def sizes(self) -> dict[Hashable, int]:
        return {k: len(c) for k, c in self.clusters.items()}

    def _cluster(self, key: Hashable) -> Cluster:
        cluster = self.clusters.get(key)
        if cluster is None:
            cluster = Cluster(key, self._next_uid, capacity=min(64, self.config.capacity))
            self.clusters[key] = cluster
            self.s_min, self.s_max = size_bounds(self.config.capacity, self.config.xi, len(self.clusters))
        return cluster

    def max_priority(self) -> float:
        best = max((c.max.reduce() for c in self.clusters.values() if len(c)), default=-np.inf)
        return best if np.isfinite(best) else 1.0

    def key_for(self, t: XATransition, episode_return: float | None = None) -> str:
        return assign_cluster(
            t,
            self.config.strategy,
            self.running_mean.mean,
            episode_return,
            self.sizes() if not isinstance(t.explanation, str) else None,
        )

    def add(self, t: XATransition, episode_return: float | None = None) -> Hashable:
        """Insert one transition, evicting if the buffer overflows. Returns its cluster key."""
        key = self.key_for(t, episode_return)
        cluster = self._cluster(key)
        cluster.append(t, self._next_uid, self.max_priority())
        self._next_uid += 1
        self._size += 1
        if self._size > self.config.capacity:
            self._evict()
        return key

    def _evict(self) -> None:
        candidates = [c for c in self.clusters.values() if len(c) > self.s_min]
        if not candidates:
            candidates = [c for c in self.clusters.values() if len(c)]
        victim = min(candidates, key=Cluster.oldest_uid)
        if self.track_evictions:
            sizes = {c.key: len(c) for c in self.clusters.values()}
            self.evictions.append((victim.key, sizes, self.s_min))
        victim.pop_oldest()
        self._size -= 1

    def stage(self, t: XATransition) -> None:
        """Route a fresh transition: held until episode end when HOW labels are needed."""
        if self.config.needs_episode_return:
            self.staged.append(t)
        else:
            self.add(t)

    def observe_episode_end(self, episode_return: float) -> None:
        """Flush staged transitions against the running mean, then update the mean."""
        staged, self.staged = self.staged, []
        for t in staged:
            self.add(t, episode_return)
        self.running_mean.push(episode_return)

    def _cluster_probabilities(self, clusters: Sequence[Cluster]) -> np.ndarray:
        if self.config.inter_cluster == UNIFORM:
            return np.full(len(clusters), 1.0 / len(clusters))
        totals = np.array([c.total for c in clusters])
        return totals / totals.sum()

    def joint_probabilities(self) -> dict[tuple[Hashable, int], float]:
        """Exact P(c)·P(τ|c) for every stored item, keyed by (cluster, slot)."""
        clusters = [c for c in self.clusters.values() if len(c)]
        p_cluster = self._cluster_probabilities(clusters)
        joint = {}
        for c, pc in zip(clusters, p_cluster):
            slots, prios = c.priorities()
            for slot, p in zip(slots, prios):
                joint[(c.key, int(slot))] = pc * p / c.total
        return joint

    def sample(self, batch_size: int, beta: float = 1.0) -> SampledBatch:
        clusters = [c for c in self.clusters.values() if len(c)]
        if not clusters:
            raise ValueError("cannot sample from an empty buffer")
        p_cluster = self._cluster_probabilities(clusters)
        totals = np.array([c.total for c in clusters])
        # min over stored items of P(c)·P(τ|c), taken per cluster from its min-tree
        p_min = float(np.min(p_cluster * np.array([c.min.reduce() for c in clusters]) / totals))

        picks = np.minimum(
            np.searchsorted(np.cumsum(p_cluster), self.rng.random(batch_size) * p_cluster.sum(), side="right"),
            len(clusters) - 1,
        )
        mass = self.rng.random(batch_size)
        items, handles = [], []
        joint = np.empty(batch_size)
        slots = np.empty(batch_size, dtype=np.int64)
        for ci in np.unique(picks):
            rows = np.flatnonzero(picks == ci)
            c = clusters[ci]
            slots[rows] = c.sum.find(mass[rows] * c.total)
            joint[rows] = p_cluster[ci] * c.sum[slots[rows]] / totals[ci]
        for i in range(batch_size):
            c = clusters[picks[i]]
            slot = int(slots[i])
            items.append(c.items[slot])
            handles.append((c.key, slot, int(c.uids[slot])))
        weights = np.minimum((p_min / joint) ** beta, 1.0)
        return SampledBatch(items, handles, weights, joint)

    def update_priorities(self, handles: Sequence[tuple[Hashable, int, int]], td_errors: Iterable[float]) -> None:
        td = np.abs(np.asarray(list(td_errors), dtype=np.float64))
        if len(td) != len(handles):
            raise ValueError(f"{len(handles)} handles but {len(td)} TD errors")
        prios = (td + self.config.epsilon) ** self.config.alpha
        by_cluster: dict[Hashable, dict[int, float]] = {}
        for (key, slot, uid), p in zip(handles, prios):
            c = self.clusters.get(key)
            if c is None or slot >= c.capacity or c.uids[slot] != uid:
                continue  # evicted or relocated since sampling
            by_cluster.setdefault(key, {})[slot] = p
        for key, upd in by_cluster.items():
            self.clusters[key].set_priorities(list(upd), list(upd.values()))

    def snapshot(self) -> list[dict]:
        rows = []
        for c in self.clusters.values():
            oldest = c.oldest_uid()
            rows.append({
                "key": str(c.key),
                "size": len(c),
                "priority_sum": c.total,
                "oldest_age": self._next_uid - oldest if oldest >= 0 else None,
            })
        return rows

    def dumps_snapshot(self) -> str:
        return json.dumps({"size": len(self), "s_min": self.s_min, "s_max": self.s_max,
                           "clusters": self.snapshot()}, indent=2)
