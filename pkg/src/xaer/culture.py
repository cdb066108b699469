"""Rulesets ("cultures") that assign speed limits and explanation labels.

A culture is an ordered rule table over vehicle and road properties. The
highest-precedence matching rule binds: its speed cap becomes the limit and
its label is the explanation attached to any violation of that limit.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

SPEED_MAX = 12
EXEMPT = None

EASY, MEDIUM, HARD = "Easy", "Medium", "Hard"
LEVELS = (EASY, MEDIUM, HARD)

# Labels produced by the environments rather than by rules.
OUTCOME_LABELS = {
    "progress": "new_cell",
    "road_progress": "new_road",
    "null_move": "null_move",
    "off_road": "off_road",
    "u_turn": "u_turn",
    "junction_gain": "junction_gain",
}
GRID_OUTCOME_LABELS = ("new_cell", "null_move")
GRAPH_OUTCOME_LABELS = ("new_road", "null_move", "off_road", "u_turn", "junction_gain")

FORMAT_VERSION = 1


class InvalidAssignment(ValueError):
    """Property assignment does not conform to a culture's schema."""


@dataclass(frozen=True)
class PropertySchema:
    road_properties: tuple[tuple[str, tuple[str, ...]], ...]
    vehicle_properties: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        for name, domain in self.road_properties + self.vehicle_properties:
            if not domain:
                raise ValueError(f"property {name!r} has an empty domain")

    @property
    def road_names(self) -> list[str]:
        return [n for n, _ in self.road_properties]

    @property
    def vehicle_names(self) -> list[str]:
        return [n for n, _ in self.vehicle_properties]

    def domain(self, side: str, name: str) -> tuple[str, ...]:
        props = self.road_properties if side == "road" else self.vehicle_properties
        for n, dom in props:
            if n == name:
                return dom
        raise KeyError(f"unknown {side} property {name!r}")

    def road_width(self) -> int:
        return sum(len(d) for _, d in self.road_properties)

    def vehicle_width(self) -> int:
        return sum(len(d) for _, d in self.vehicle_properties)


@dataclass(frozen=True)
class Clause:
    """``side.prop`` takes one of ``values``."""

    side: str  # "road" or "vehicle"
    prop: str
    values: tuple[str, ...]

    def holds(self, vehicle: Mapping[str, str], road: Mapping[str, str]) -> bool:
        source = road if self.side == "road" else vehicle
        return source[self.prop] in self.values


@dataclass(frozen=True)
class Rule:
    """Conjunction of clauses mapped to a speed cap (``None`` means exempt)."""

    label: str
    clauses: tuple[Clause, ...]
    speed_cap: int | None
    precedence: int
    exception: bool = False

    def matches(self, vehicle: Mapping[str, str], road: Mapping[str, str]) -> bool:
        return all(c.holds(vehicle, road) for c in self.clauses)

    @property
    def limit(self) -> int:
        return SPEED_MAX if self.speed_cap is EXEMPT else self.speed_cap


@dataclass(frozen=True)
class Verdict:
    speed_limit: int
    binding_label: str


@dataclass(frozen=True)
class Culture:
    level: str
    schema: PropertySchema
    rules: tuple[Rule, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ordered = tuple(sorted(self.rules, key=lambda r: -r.precedence))
        object.__setattr__(self, "rules", ordered)
        labels = [r.label for r in ordered]
        if len(set(labels)) != len(labels):
            raise ValueError("rule labels must be unique within a culture")
        precedences = [r.precedence for r in ordered]
        if len(set(precedences)) != len(precedences):
            raise ValueError("rule precedences must be distinct")
        for rule in ordered:
            if rule.speed_cap is not EXEMPT and not 1 <= rule.speed_cap <= SPEED_MAX:
                raise ValueError(f"rule {rule.label!r} cap outside [1, {SPEED_MAX}]")
            for c in rule.clauses:
                domain = self.schema.domain(c.side, c.prop)
                unknown = set(c.values) - set(domain)
                if unknown:
                    raise ValueError(f"rule {rule.label!r} uses unknown values {sorted(unknown)}")

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rules]

    def without(self, label: str) -> "Culture":
        return Culture(self.level, self.schema, tuple(r for r in self.rules if r.label != label))


def _check(schema_props, assignment: Mapping[str, str], side: str) -> None:
    names = {n for n, _ in schema_props}
    if set(assignment) != names:
        raise InvalidAssignment(
            f"{side} assignment keys {sorted(assignment)} do not match schema {sorted(names)}"
        )
    for name, domain in schema_props:
        if assignment[name] not in domain:
            raise InvalidAssignment(f"{side}.{name}={assignment[name]!r} not in {domain}")


def evaluate(culture: Culture, vehicle: Mapping[str, str], road: Mapping[str, str]) -> Verdict:
    """Speed limit and binding label for one (vehicle, road) pair."""
    _check(culture.schema.vehicle_properties, vehicle, "vehicle")
    _check(culture.schema.road_properties, road, "road")
    for rule in culture.rules:
        if rule.matches(vehicle, road):
            return Verdict(rule.limit, rule.label)
    raise InvalidAssignment("no rule matches; culture is not total")


def explain_transition(
    culture: Culture,
    vehicle: Mapping[str, str],
    road: Mapping[str, str],
    attempted_speed: int,
    outcome: str,
) -> str:
    """Explanation label for a transition.

    ``violation`` is explained by the rule that set the broken limit; every
    other outcome carries a fixed environment label.
    """
    verdict = evaluate(culture, vehicle, road)
    if outcome == "violation":
        return verdict.binding_label
    try:
        return OUTCOME_LABELS[outcome]
    except KeyError:
        raise ValueError(f"unknown outcome {outcome!r}") from None


def _assignment_grid(schema: PropertySchema) -> tuple[list[tuple[str, str, tuple[str, ...]]], np.ndarray]:
    """Every assignment of every property, as a matrix of domain indices."""
    props = [("vehicle", n, d) for n, d in schema.vehicle_properties]
    props += [("road", n, d) for n, d in schema.road_properties]
    dims = [len(d) for _, _, d in props]
    total = int(np.prod(dims))
    grid = np.stack(np.unravel_index(np.arange(total), dims), axis=1).astype(np.int8)
    return props, grid


def binding_mask(culture: Culture) -> tuple[list[str], np.ndarray]:
    """For every exhaustive assignment, the index of the rule that binds (-1 if none)."""
    props, grid = _assignment_grid(culture.schema)
    column = {(side, name): i for i, (side, name, _) in enumerate(props)}
    binding = np.full(len(grid), -1, dtype=np.int16)
    for k, rule in enumerate(culture.rules):
        match = binding < 0
        for c in rule.clauses:
            side, name, domain = props[column[(c.side, c.prop)]]
            allowed = [domain.index(v) for v in c.values]
            match &= np.isin(grid[:, column[(c.side, c.prop)]], allowed)
        binding[match] = k
    return culture.labels, binding


def enumerate_explanations(culture: Culture, outcome_labels: Sequence[str] = ()) -> set[str]:
    """Rule labels that bind for at least one assignment, plus any outcome labels given."""
    labels, binding = binding_mask(culture)
    reached = {labels[k] for k in np.unique(binding) if k >= 0}
    return reached | set(outcome_labels)


def is_total(culture: Culture) -> bool:
    _, binding = binding_mask(culture)
    return bool((binding >= 0).all())


def sample_road(culture: Culture, rng: np.random.Generator) -> dict[str, str]:
    return {n: d[rng.integers(len(d))] for n, d in culture.schema.road_properties}


def sample_vehicle(culture: Culture, rng: np.random.Generator) -> dict[str, str]:
    return {n: d[rng.integers(len(d))] for n, d in culture.schema.vehicle_properties}


def encode(schema_props, assignment: Mapping[str, str]) -> np.ndarray:
    """Concatenated one-hot encoding of an assignment."""
    parts = []
    for name, domain in schema_props:
        onehot = np.zeros(len(domain), dtype=np.float32)
        onehot[domain.index(assignment[name])] = 1.0
        parts.append(onehot)
    return np.concatenate(parts)


# --- presets -----------------------------------------------------------------

YES_NO = ("yes", "no")


def _r(label, cap, precedence, *clauses, exception=False):
    return Rule(
        label=label,
        clauses=tuple(Clause(side, prop, tuple(values)) for side, prop, values in clauses),
        speed_cap=cap,
        precedence=precedence,
        exception=exception,
    )


def _easy() -> Culture:
    schema = PropertySchema(
        road_properties=(("type", ("school", "city", "motorway")), ("roadworks", YES_NO)),
        vehicle_properties=(("emergency", YES_NO),),
    )
    rules = (
        _r("emergency_exemption", EXEMPT, 5, ("vehicle", "emergency", ["yes"]), exception=True),
        _r("roadworks_cap", 3, 4, ("road", "roadworks", ["yes"])),
        _r("school_zone", 2, 3, ("road", "type", ["school"])),
        _r("city_limit", 5, 2, ("road", "type", ["city"])),
        _r("motorway_limit", 12, 1, ("road", "type", ["motorway"])),
    )
    return Culture(EASY, schema, rules)


def _medium() -> Culture:
    schema = PropertySchema(
        road_properties=(
            ("type", ("school", "city", "residential", "motorway")),
            ("roadworks", YES_NO),
            ("accident", YES_NO),
            ("weather", ("clear", "rain", "fog")),
            ("lighting", ("day", "night")),
        ),
        vehicle_properties=(("emergency", YES_NO), ("class", ("car", "truck", "worker"))),
    )
    rules = (
        _r("emergency_exemption", EXEMPT, 12, ("vehicle", "emergency", ["yes"]), exception=True),
        _r("accident_zone", 1, 11, ("road", "accident", ["yes"])),
        _r("worker_roadworks", 6, 10, ("vehicle", "class", ["worker"]), ("road", "roadworks", ["yes"]),
           exception=True),
        _r("roadworks_cap", 3, 9, ("road", "roadworks", ["yes"])),
        _r("school_night", 5, 8, ("road", "type", ["school"]), ("road", "lighting", ["night"]),
           exception=True),
        _r("school_zone", 2, 7, ("road", "type", ["school"])),
        _r("fog_cap", 4, 6, ("road", "weather", ["fog"])),
        _r("truck_motorway", 8, 5, ("vehicle", "class", ["truck"]), ("road", "type", ["motorway"])),
        _r("rain_motorway", 9, 4, ("road", "weather", ["rain"]), ("road", "type", ["motorway"])),
        _r("residential_limit", 4, 3, ("road", "type", ["residential"])),
        _r("city_limit", 5, 2, ("road", "type", ["city"])),
        _r("motorway_limit", 12, 1, ("road", "type", ["motorway"])),
    )
    return Culture(MEDIUM, schema, rules)


def _hard() -> Culture:
    schema = PropertySchema(
        road_properties=(
            ("type", ("school", "city", "residential", "motorway", "rural")),
            ("roadworks", YES_NO),
            ("accident", YES_NO),
            ("weather", ("clear", "rain", "fog", "snow")),
            ("lighting", ("day", "night")),
            ("surface", ("paved", "gravel")),
            ("lanes", ("single", "multi")),
            ("crossing", YES_NO),
            ("congestion", ("low", "high")),
        ),
        vehicle_properties=(
            ("emergency", YES_NO),
            ("sirens", ("on", "off")),
            ("class", ("car", "truck", "bus", "worker")),
            ("trailer", YES_NO),
            ("learner", YES_NO),
            ("permit", YES_NO),
        ),
    )
    rules = (
        _r("emergency_exemption", EXEMPT, 20, ("vehicle", "emergency", ["yes"]), ("vehicle", "sirens", ["on"]),
           exception=True),
        _r("accident_zone", 1, 19, ("road", "accident", ["yes"])),
        _r("worker_roadworks", 6, 18, ("vehicle", "class", ["worker"]), ("road", "roadworks", ["yes"]),
           exception=True),
        _r("roadworks_cap", 3, 17, ("road", "roadworks", ["yes"])),
        _r("busy_crossing", 2, 16, ("road", "crossing", ["yes"]), ("road", "congestion", ["high"])),
        _r("snow_cap", 3, 15, ("road", "weather", ["snow"])),
        _r("school_night", 5, 14, ("road", "type", ["school"]), ("road", "lighting", ["night"]),
           exception=True),
        _r("school_zone", 2, 13, ("road", "type", ["school"])),
        _r("fog_cap", 4, 12, ("road", "weather", ["fog"])),
        _r("gravel_cap", 5, 11, ("road", "surface", ["gravel"])),
        _r("learner_cap", 6, 10, ("vehicle", "learner", ["yes"])),
        _r("bus_lane", 7, 9, ("vehicle", "class", ["bus"]), ("road", "lanes", ["multi"]), ("road", "type", ["city"]),
           exception=True),
        _r("trailer_cap", 7, 8, ("vehicle", "trailer", ["yes"]), ("road", "type", ["motorway", "rural"])),
        _r("truck_motorway", 8, 7, ("vehicle", "class", ["truck"]), ("road", "type", ["motorway"])),
        _r("permit_motorway", 12, 6, ("vehicle", "permit", ["yes"]), ("road", "type", ["motorway"]),
           exception=True),
        _r("emergency_night", 8, 5, ("vehicle", "emergency", ["yes"]), ("road", "lighting", ["night"]),
           exception=True),
        _r("residential_limit", 4, 4, ("road", "type", ["residential"])),
        _r("city_limit", 5, 3, ("road", "type", ["city"])),
        _r("rural_limit", 9, 2, ("road", "type", ["rural"])),
        _r("motorway_limit", 10, 1, ("road", "type", ["motorway"])),
    )
    return Culture(HARD, schema, rules)


_BUILDERS = {EASY: _easy, MEDIUM: _medium, HARD: _hard}


def build_culture(level: str) -> Culture:
    try:
        return _BUILDERS[level]()
    except KeyError:
        raise ValueError(f"unknown culture level {level!r}; expected one of {LEVELS}") from None


# --- serialization -------------------------------------------------------------


def culture_to_dict(culture: Culture) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "level": culture.level,
        "schema": {
            "road": [{"name": n, "domain": list(d)} for n, d in culture.schema.road_properties],
            "vehicle": [{"name": n, "domain": list(d)} for n, d in culture.schema.vehicle_properties],
        },
        "rules": [
            {
                "label": r.label,
                "precedence": r.precedence,
                "speed_cap": "EXEMPT" if r.speed_cap is EXEMPT else r.speed_cap,
                "exception": r.exception,
                "when": [{"side": c.side, "prop": c.prop, "in": list(c.values)} for c in r.clauses],
            }
            for r in culture.rules
        ],
    }


def culture_from_dict(doc: Mapping) -> Culture:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported culture format version {doc.get('format_version')!r}")
    schema = PropertySchema(
        road_properties=tuple((p["name"], tuple(p["domain"])) for p in doc["schema"]["road"]),
        vehicle_properties=tuple((p["name"], tuple(p["domain"])) for p in doc["schema"]["vehicle"]),
    )
    rules = tuple(
        Rule(
            label=r["label"],
            clauses=tuple(Clause(c["side"], c["prop"], tuple(c["in"])) for c in r["when"]),
            speed_cap=EXEMPT if r["speed_cap"] == "EXEMPT" else int(r["speed_cap"]),
            precedence=int(r["precedence"]),
            exception=bool(r.get("exception", False)),
        )
        for r in doc["rules"]
    )
    return Culture(doc["level"], schema, rules)


def dumps_culture(culture: Culture) -> str:
    return json.dumps(culture_to_dict(culture), indent=2) + "\n"


def loads_culture(text: str) -> Culture:
    return culture_from_dict(json.loads(text))


def save_culture(culture: Culture, path: str | Path) -> None:
    Path(path).write_text(dumps_culture(culture), encoding="utf-8")


def load_culture(path: str | Path) -> Culture:
    return loads_culture(Path(path).read_text(encoding="utf-8"))


def all_assignments(props) -> list[dict[str, str]]:
    """Brute-force product of a property list; only practical for small schemas."""
    names = [n for n, _ in props]
    return [dict(zip(names, values)) for values in itertools.product(*(d for _, d in props))]
