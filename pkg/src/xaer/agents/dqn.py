"""Double DQN whose per-sample TD errors feed a prioritised buffer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from xaer.agents.base import Agent, linear_schedule, stack_batch
from xaer.agents.nn import Adam, DenseNet, huber


@dataclass
class DQNConfig:
    hidden: list[int] = field(default_factory=lambda: [256, 256])
    lr: float = 3e-4
    gamma: float = 0.99
    target_sync_every: int = 500  # env steps
    epsilon_start: float = 1.0
    epsilon_end: float = 0.02
    epsilon_decay_steps: int = 10_000
    huber_k: float = 1.0
    max_grad_norm: float | None = 40.0


def double_dqn_targets(online: DenseNet, target: DenseNet, r, s2, done, gamma: float) -> np.ndarray:
    """``r + gamma * (1 - done) * Q_target(s', argmax_a Q_online(s', a))``."""
    best = np.argmax(online(s2), axis=1)
    q_next = target(s2)[np.arange(len(best)), best]
    return r + gamma * (1.0 - done) * q_next


def dqn_loss(online: DenseNet, s, a, y, weights, huber_k: float = 1.0):
    """Importance-weighted Huber loss; returns (loss, grads, TD errors)."""
    q, cache = online.forward(s)
    rows = np.arange(len(a))
    delta = y - q[rows, a]
    loss_i, dloss = huber(delta, huber_k)
    n = len(a)
    loss = float(np.sum(weights * loss_i) / n)
    grad_q = np.zeros_like(q)
    grad_q[rows, a] = -(weights * dloss) / n
    grads, _ = online.backward(cache, grad_q)
    return loss, grads, delta


class DQNAgent(Agent):
    def __init__(self, obs_dim: int, n_actions: int, config: DQNConfig | None = None,
                 rng: np.random.Generator | int | None = None, dtype=np.float32):
        self.config = config or DQNConfig()
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.n_actions = n_actions
        self.online = DenseNet([obs_dim, *self.config.hidden, n_actions], self.rng, dtype=dtype)
        self.target = self.online.copy()
        self.opt = Adam(self.online.params, lr=self.config.lr, max_grad_norm=self.config.max_grad_norm)
        self.nets = {"online": self.online, "target": self.target}
        self.optimizers = {"online": self.opt}
        self.updates = 0
        self.last_sync = 0

    def epsilon(self, step: int) -> float:
        c = self.config
        return linear_schedule(c.epsilon_start, c.epsilon_end, c.epsilon_decay_steps, step)

    def act(self, obs: np.ndarray, mode: str = "explore", step: int = 0) -> int:
        if mode == "explore" and self.rng.random() < self.epsilon(step):
            return int(self.rng.integers(self.n_actions))
        return int(np.argmax(self.online(obs[None])[0]))

    def update(self, batch, step: int = 0) -> dict:
        s, a, r, s2, d = stack_batch(batch.items)
        a = a.astype(np.int64)
        y = double_dqn_targets(self.online, self.target, r, s2, d, self.config.gamma)
        loss, grads, delta = dqn_loss(self.online, s, a, y, np.asarray(batch.weights, dtype=s.dtype),
                                      self.config.huber_k)
        self.opt.step(grads)
        self.updates += 1
        if step - self.last_sync >= self.config.target_sync_every:
            self.target.load_from(self.online)
            self.last_sync = step
        return {"loss": loss, "td_abs": np.abs(delta)}

    def extra_state(self):
        return {"updates": np.array(self.updates), "last_sync": np.array(self.last_sync)}

    def load_extra_state(self, state):
        self.updates = int(state["updates"])
        self.last_sync = int(state["last_sync"])
