"""Minimal fully connected networks with hand-written backprop, and Adam."""

from __future__ import annotations

import numpy as np


class DenseNet:
    """ReLU MLP; the output layer is linear or ``tanh``.

    ``forward`` returns the output plus a cache that ``backward`` consumes,
    so several passes through the same network can be differentiated
    independently.
    """

    def __init__(self, sizes, rng: np.random.Generator, output: str = "linear", dtype=np.float32):
        if output not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = list(sizes)
        self.output = output
        self.dtype = dtype
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype))
            self.params.append(rng.uniform(-bound, bound, fan_out).astype(dtype))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        inputs = []
        h = x
        for k in range(self.n_layers):
            inputs.append(h)
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < self.n_layers - 1:
                h = np.maximum(h, 0)
        if self.output == "tanh":
            h = np.tanh(h)
        return h, (inputs, h)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Parameter gradients and input gradient for upstream ``grad_out``."""
        inputs, out = cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if self.output == "tanh":
            g = g * (1 - out * out)
        grads: list[np.ndarray] = [None] * len(self.params)
        for k in reversed(range(self.n_layers)):
            h = inputs[k]
            grads[2 * k] = h.T @ g if h.ndim > 1 else np.outer(h, g)
            grads[2 * k + 1] = g.sum(axis=0) if g.ndim > 1 else g
            g = g @ self.params[2 * k].T
            if k > 0:
                g = g * (h > 0)
        return grads, g

    def copy(self) -> "DenseNet":
        clone = object.__new__(DenseNet)
        clone.sizes, clone.output, clone.dtype = list(self.sizes), self.output, self.dtype
        clone.params = [p.copy() for p in self.params]
        return clone

    def load_from(self, other: "DenseNet") -> None:
        for p, q in zip(self.params, other.params):
            p[...] = q

    def polyak_from(self, other: "DenseNet", rho: float) -> None:
        """``self <- (1 - rho) * self + rho * other``."""
        for p, q in zip(self.params, other.params):
            p *= 1 - rho
            p += rho * q

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size


def net_forward(net: DenseNet, x):
    return net.forward(x)


def net_backward(net: DenseNet, cache, upstream):
    return net.backward(cache, upstream)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state(self, state) -> None:
        self.t = int(state["t"])
        for i in range(len(self.m)):
            self.m[i][...] = state[f"m{i}"]
            self.v[i][...] = state[f"v{i}"]


def huber(delta: np.ndarray, k: float = 1.0):
    """Huber loss and its derivative with respect to ``delta``."""
    a = np.abs(delta)
    loss = np.where(a <= k, 0.5 * delta * delta, k * (a - 0.5 * k))
    grad = np.clip(delta, -k, k)
    return loss, grad
