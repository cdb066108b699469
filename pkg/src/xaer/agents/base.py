"""Shared agent plumbing: batch stacking and checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from xaer.agents.nn import Adam, DenseNet

CHECKPOINT_VERSION = 1


def stack_batch(items, dtype=np.float32):
    """Column arrays (s, a, r, s_next, done) from a list of transitions."""
    s = np.stack([t.s for t in items]).astype(dtype)
    a = np.asarray([t.a for t in items])
    r = np.asarray([t.r for t in items], dtype=dtype)
    s2 = np.stack([t.s_next for t in items]).astype(dtype)
    d = np.asarray([t.done for t in items], dtype=dtype)
    return s, a, r, s2, d


def linear_schedule(start: float, end: float, duration: int, step: int) -> float:
    if duration <= 0:
        return end
    frac = min(max(step / duration, 0.0), 1.0)
    return start + frac * (end - start)


class Agent:
    """Base class: subclasses register networks and optimizers by name."""

    nets: dict[str, DenseNet]
    optimizers: dict[str, Adam]

    def extra_state(self) -> dict[str, np.ndarray]:
        return {}

    def load_extra_state(self, state) -> None:
        pass

    def save(self, path: str | Path) -> None:
        arrays = {"version": np.array(CHECKPOINT_VERSION), "kind": np.array(type(self).__name__)}
        for name, net in self.nets.items():
            for i, p in enumerate(net.params):
                arrays[f"net/{name}/{i}"] = p
        for name, opt in self.optimizers.items():
            for key, value in opt.state().items():
                arrays[f"opt/{name}/{key}"] = value
        rng = getattr(self, "rng", None)
        if rng is not None:
            arrays["rng"] = np.array(json.dumps(rng.bit_generator.state))
        for key, value in self.extra_state().items():
            arrays[f"extra/{key}"] = value
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    def load(self, path: str | Path) -> None:
        with np.load(path, allow_pickle=False) as data:
            if int(data["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
            if str(data["kind"]) != type(self).__name__:
                raise ValueError(f"checkpoint is for {data['kind']}, not {type(self).__name__}")
            for name, net in self.nets.items():
                for i, p in enumerate(net.params):
                    p[...] = data[f"net/{name}/{i}"]
            for name, opt in self.optimizers.items():
                prefix = f"opt/{name}/"
                opt.load_state({k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)})
            if "rng" in data.files:
                self.rng.bit_generator.state = json.loads(str(data["rng"]))
            self.load_extra_state({k[6:]: data[k] for k in data.files if k.startswith("extra/")})
