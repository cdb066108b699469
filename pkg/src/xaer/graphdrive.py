"""Continuous driving on a planar road graph with bicycle-model kinematics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from xaer.culture import SPEED_MAX, Culture, encode, evaluate, sample_road, sample_vehicle
from xaer.griddrive import EpisodeOver

STEER_MAX = math.pi / 4
ACCEL_MIN, ACCEL_MAX = -7.0, 1.0
SPEED_SCALE = 10.0 / 3.0  # m/s per culture speed unit


@dataclass(frozen=True)
class GraphAction:
    steering: float
    acceleration: float

    def __post_init__(self):
        object.__setattr__(self, "steering", float(np.clip(self.steering, -STEER_MAX, STEER_MAX)))
        object.__setattr__(self, "acceleration", float(np.clip(self.acceleration, ACCEL_MIN, ACCEL_MAX)))


@dataclass
class RoadGraph:
    junctions: np.ndarray  # (n, 2)
    edges: list[tuple[int, int]]
    roads: list[dict[str, str]]
    adjacency: dict[int, list[int]] = field(default_factory=dict)  # junction -> road ids

    def __post_init__(self):
        if not self.adjacency:
            adj = {j: [] for j in range(len(self.junctions))}
            for r, (a, b) in enumerate(self.edges):
                adj[a].append(r)
                adj[b].append(r)
            self.adjacency = adj

    def other_end(self, road: int, junction: int) -> int:
        a, b = self.edges[road]
        return b if junction == a else a

    def is_connected(self) -> bool:
        seen, frontier = {0}, [0]
        while frontier:
            j = frontier.pop()
            for r in self.adjacency[j]:
                k = self.other_end(r, j)
                if k not in seen:
                    seen.add(k)
                    frontier.append(k)
        return len(seen) == len(self.junctions)


@dataclass
class VehicleState:
    position: np.ndarray
    heading: float
    speed: float
    vehicle: dict[str, str] = field(default_factory=dict)
    visited_roads: set[int] = field(default_factory=set)
    acquired_junctions: set[int] = field(default_factory=set)
    frame_count: int = 0


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def segments_cross(p1, p2, q1, q2) -> bool:
    """True if the closed segments p1p2 and q1q2 share any point."""
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return ((d1 == 0 and on_segment(q1, q2, p1)) or (d2 == 0 and on_segment(q1, q2, p2))
            or (d3 == 0 and on_segment(p1, p2, q1)) or (d4 == 0 and on_segment(p1, p2, q2)))


def roads_intersect_improperly(points: np.ndarray, e: tuple[int, int], f: tuple[int, int]) -> bool:
    """Segments of two roads meet somewhere other than a shared junction."""
    shared = set(e) & set(f)
    if len(shared) == 2:
        return True
    if shared:
        (s,) = shared
        a = points[e[0] if e[1] == s else e[1]] - points[s]
        b = points[f[0] if f[1] == s else f[1]] - points[s]
        cross = a[0] * b[1] - a[1] * b[0]
        # touching only at the shared end unless collinear and overlapping
        return abs(cross) < 1e-12 and float(a @ b) > 0
    return segments_cross(points[e[0]], points[e[1]], points[f[0]], points[f[1]])


def _angle_between(u, v) -> float:
    c = float(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(max(-1.0, min(1.0, c)))


def generate_graph(
    culture: Culture,
    seed: int | np.random.Generator,
    n: int = 16,
    arena: float = 200.0,
    min_separation: float = 30.0,
    edge_factor: float = 1.5,
    max_fanout: int = 5,
    min_angle: float = math.radians(30),
) -> RoadGraph:
    """Random planar connected road graph.

    Junctions are rejection-sampled inside the arena, joined by a Euclidean
    minimum spanning tree, then densified with the shortest chords that
    cross no existing road, keep junction degree bounded and leave at least
    ``min_angle`` between roads sharing a junction.
    """
    if n < 4:
        raise ValueError("a road graph needs at least 4 junctions")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    margin = 10.0
    points: list[np.ndarray] = []
    sep = min_separation
    attempts = 0
    while len(points) < n:
        p = rng.uniform(margin, arena - margin, size=2)
        if all(np.linalg.norm(p - q) >= sep for q in points):
            points.append(p)
        attempts += 1
        if attempts % 2000 == 0:
            sep *= 0.9
    pts = np.array(points)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)

    # Prim's minimum spanning tree
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n, dtype=int)
    edges: list[tuple[int, int]] = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        edges.append((min(j, int(parent[j])), max(j, int(parent[j]))))
        in_tree[j] = True
        closer = dist[j] < best
        best = np.where(closer, dist[j], best)
        parent = np.where(closer & ~in_tree, j, parent)

    degree = np.zeros(n, dtype=int)
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
    target = max(n - 1, int(round(edge_factor * n)))
    pairs = sorted(((dist[a, b], a, b) for a in range(n) for b in range(a + 1, n)))
    existing = set(edges)
    for _, a, b in pairs:
        if len(edges) >= target:
            break
        if (a, b) in existing or degree[a] >= max_fanout or degree[b] >= max_fanout:
            continue
        if any(roads_intersect_improperly(pts, (a, b), e) for e in edges):
            continue
        ok = True
        for s, t in ((a, b), (b, a)):
            for e in edges:
                if s in e:
                    other = e[0] if e[1] == s else e[1]
                    if _angle_between(pts[t] - pts[s], pts[other] - pts[s]) < min_angle:
                        ok = False
        if not ok:
            continue
        edges.append((a, b))
        existing.add((a, b))
        degree[a] += 1
        degree[b] += 1
    roads = [sample_road(culture, rng) for _ in edges]
    return RoadGraph(pts, edges, roads)


def kinematics_step(state: VehicleState, action: GraphAction, dt: float, wheelbase: float = 2.5) -> VehicleState:
    """Kinematic bicycle model, explicit Euler with the new speed used for translation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    speed = max(0.0, state.speed + action.acceleration * dt)
    heading = state.heading + (state.speed / wheelbase) * math.tan(action.steering) * dt
    position = state.position + speed * np.array([math.cos(heading), math.sin(heading)]) * dt
    return replace(state, position=position, heading=heading, speed=speed)


def _point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distances from ``p`` to segments ``a[i]b[i]``, with projection parameter and signed offset."""
    ab = b - a
    length2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / length2, 0.0, 1.0)
    closest = a + t[:, None] * ab
    d = np.linalg.norm(p - closest, axis=1)
    side = np.sign(ab[:, 0] * (p[1] - a[:, 1]) - ab[:, 1] * (p[0] - a[:, 0]))
    return d, t, side


class GraphDrive:
    """Drive new roads without speeding, leaving the road, or turning back.

    ``sparse=True`` replaces the per-frame speed reward by +1 on the first
    entry into each new junction.
    """

    TRACE_COLUMNS = ("frame", "x", "y", "heading", "speed", "steering", "accel", "reward", "explanation")

    def __init__(
        self,
        culture: Culture,
        sparse: bool = False,
        n_junctions: int = 16,
        dt: float = 0.1,
        wheelbase: float = 2.5,
        junction_radius: float = 4.0,
        off_road_threshold: float = 2.0,
        arena: float = 200.0,
        max_frames: int = 1000,
        u_turn_frames: int = 5,
        max_fanout: int = 5,
        seed: int | None = None,
    ):
        self.culture = culture
        self.sparse = sparse
        self.n_junctions = n_junctions
        self.dt = dt
        self.wheelbase = wheelbase
        self.junction_radius = junction_radius
        self.off_road_threshold = off_road_threshold
        self.arena = arena
        self.max_frames = max_frames
        self.u_turn_frames = u_turn_frames
        self.max_fanout = max_fanout
        self.rng = np.random.default_rng(seed)
        self.road_width = culture.schema.road_width()
        self.vehicle_width = culture.schema.vehicle_width()
        self.obs_dim = (
            (self.vehicle_width + 9)
            + (self.road_width + 5)
            + max_fanout * (self.road_width + 4) + 1
        )
        self.action_dim = 2
        self.action_low = np.array([-STEER_MAX, ACCEL_MIN])
        self.action_high = np.array([STEER_MAX, ACCEL_MAX])
        self.done = True
        self.terminal = False
        self.trace: list[tuple] = []

    # --- episode ---------------------------------------------------------------

    def reset(self, seed: int | None = None, graph: RoadGraph | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.graph = graph or generate_graph(
            self.culture, self.rng, self.n_junctions, arena=self.arena, max_fanout=self.max_fanout
        )
        g = self.graph
        self._a = g.junctions[[a for a, _ in g.edges]]
        self._b = g.junctions[[b for _, b in g.edges]]
        vehicle = sample_vehicle(self.culture, self.rng)
        self.caps_ms = np.array(
            [evaluate(self.culture, vehicle, road).speed_limit * SPEED_SCALE for road in g.roads]
        )
        self.cap_labels = [evaluate(self.culture, vehicle, road).binding_label for road in g.roads]
        self.road_enc = np.array([encode(self.culture.schema.road_properties, r) for r in g.roads])
        self.vehicle_enc = encode(self.culture.schema.vehicle_properties, vehicle)

        start = int(self.rng.integers(len(g.junctions)))
        first = g.adjacency[start][int(self.rng.integers(len(g.adjacency[start])))]
        towards = g.junctions[g.other_end(first, start)] - g.junctions[start]
        self.state = VehicleState(
            position=g.junctions[start].astype(float).copy(),
            heading=math.atan2(towards[1], towards[0]),
            speed=0.0,
            vehicle=vehicle,
            acquired_junctions={start},
        )
        self.current_road: int | None = None
        self.road_sign = 1.0
        self.reverse_frames = 0
        self.done = False
        self.terminal = False
        self.trace = []
        self._locate()
        return self.observation()

    def _locate(self) -> None:
        p = self.state.position
        d, t, side = _point_segment(p, self._a, self._b)
        self.closest = int(np.argmin(d))
        self.distance = float(d[self.closest])
        self.along = float(t[self.closest])
        self.side = float(side[self.closest])
        jd = np.linalg.norm(self.graph.junctions - p, axis=1)
        self.nearest_junction = int(np.argmin(jd))
        self.in_junction = bool(jd[self.nearest_junction] <= self.junction_radius)

    def _road_dir(self, road: int) -> np.ndarray:
        v = self._b[road] - self._a[road]
        return v / np.linalg.norm(v)

    def _heading_vec(self) -> np.ndarray:
        return np.array([math.cos(self.state.heading), math.sin(self.state.heading)])

    def step(self, action: GraphAction | np.ndarray) -> tuple[np.ndarray, float, bool, str]:
        if self.done:
            raise EpisodeOver("episode has terminated; call reset()")
        if not isinstance(action, GraphAction):
            action = GraphAction(float(action[0]), float(action[1]))
        s = kinematics_step(self.state, action, self.dt, self.wheelbase)
        s.frame_count += 1
        self.state = s
        self._locate()

        if self.in_junction:
            if self.current_road is not None:
                s.visited_roads.add(self.current_road)
                self.current_road = None
            self.reverse_frames = 0
        else:
            if self.closest != self.current_road:
                if self.current_road is not None:
                    s.visited_roads.add(self.current_road)
                self.current_road = self.closest
                self.road_sign = 1.0 if self._heading_vec() @ self._road_dir(self.closest) >= 0 else -1.0
                self.reverse_frames = 0
            backwards = s.speed > 0 and self._heading_vec() @ (self.road_sign * self._road_dir(self.closest)) < 0
            self.reverse_frames = self.reverse_frames + 1 if backwards else 0

        cap = self.caps_ms[self.closest]
        new_junction = self.in_junction and self.nearest_junction not in s.acquired_junctions
        if self.in_junction:
            s.acquired_junctions.add(self.nearest_junction)

        if s.speed > cap + 1e-9:
            reward, done, explanation = -1.0, True, self.cap_labels[self.closest]
        elif not self.in_junction and self.distance > self.off_road_threshold:
            reward, done, explanation = -1.0, True, "off_road"
        elif self.reverse_frames >= self.u_turn_frames:
            reward, done, explanation = -1.0, True, "u_turn"
        else:
            done = False
            moving_on_new_road = (
                not self.in_junction and self.closest not in s.visited_roads and s.speed > 0
            )
            if self.sparse:
                if new_junction:
                    reward, explanation = 1.0, "junction_gain"
                else:
                    reward, explanation = 0.0, "new_road" if moving_on_new_road else "null_move"
            elif moving_on_new_road:
                reward, explanation = min(1.0, s.speed / cap), "new_road"
            else:
                reward, explanation = 0.0, "null_move"
        self.terminal = done
        self.done = done or s.frame_count >= self.max_frames
        self.trace.append((s.frame_count, float(s.position[0]), float(s.position[1]), s.heading, s.speed,
                           action.steering, action.acceleration, reward, explanation))
        return self.observation(), reward, self.done, explanation

    # --- observation -------------------------------------------------------------

    def _next_junction(self) -> int:
        if self.in_junction:
            return self.nearest_junction
        a, b = self.graph.edges[self.closest]
        forward = self._heading_vec() @ self._road_dir(self.closest) >= 0
        return b if forward else a

    def observation(self) -> np.ndarray:
        s = self.state
        g = self.graph
        hv = self._heading_vec()
        o_v = np.concatenate([
            self.vehicle_enc,
            s.position / self.arena,
            [s.speed / (SPEED_MAX * SPEED_SCALE), hv[0], hv[1],
             min(self.distance / self.off_road_threshold, 2.0),
             float(self.in_junction),
             len(s.acquired_junctions) / len(g.junctions),
             min(self.reverse_frames / self.u_turn_frames, 1.0)],
        ])
        rd = self._road_dir(self.closest)
        if hv @ rd < 0:
            rd = -rd
        cross = rd[0] * hv[1] - rd[1] * hv[0]
        o_r = np.concatenate([
            self.road_enc[self.closest],
            [float(hv @ rd), cross, self.side * min(self.distance / self.off_road_threshold, 2.0),
             self.along, float(self.closest in s.visited_roads)],
        ])
        jn = self._next_junction()
        jp = g.junctions[jn]
        slots = []
        incident = []
        for r in g.adjacency[jn]:
            out = g.junctions[g.other_end(r, jn)] - jp
            out = out / np.linalg.norm(out)
            incident.append((math.atan2(hv[0] * out[1] - hv[1] * out[0], hv @ out), r, out))
        incident.sort(key=lambda x: x[0])
        for k in range(self.max_fanout):
            if k < len(incident):
                ang, r, out = incident[k]
                slots.append(np.concatenate([
                    self.road_enc[r], [math.cos(ang), math.sin(ang), float(r in s.visited_roads), 1.0],
                ]))
            else:
                slots.append(np.zeros(self.road_width + 4))
        to_j = min(float(np.linalg.norm(jp - s.position)) / 50.0, 1.0)
        return np.concatenate([o_v, o_r, *slots, [to_j]]).astype(np.float32)

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.TRACE_COLUMNS)
            writer.writerows(self.trace)
