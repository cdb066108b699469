"""TD3: twin critics, delayed actor updates, target policy smoothing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from xaer.agents.base import Agent, stack_batch
from xaer.agents.nn import Adam, DenseNet


@dataclass
class TD3Config:
    hidden: list[int] = field(default_factory=lambda: [256, 256])
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    gamma: float = 0.99
    rho: float = 0.005
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    explore_noise: float = 0.1
    random_steps: int = 2_000


class ActionScaler:
    """Affine map between [-1, 1]^d and an environment's box."""

    def __init__(self, low, high):
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.mid = (self.high + self.low) / 2
        self.half = (self.high - self.low) / 2

    def to_env(self, a):
        return self.mid + self.half * np.clip(a, -1.0, 1.0)

    def to_unit(self, a):
        return (np.asarray(a, dtype=np.float64) - self.mid) / self.half


def critic_input(s, a):
    return np.concatenate([s, a.astype(s.dtype)], axis=1)


def critic_loss(q: DenseNet, s, a, y, weights):
    """Importance-weighted squared error of one critic; returns (loss, grads, TD errors)."""
    out, cache = q.forward(critic_input(s, a))
    delta = y - out[:, 0]
    n = len(y)
    loss = float(np.sum(weights * delta * delta) / n)
    grads, _ = q.backward(cache, (-2.0 * weights * delta / n)[:, None])
    return loss, grads, delta


def td3_targets(actor_t, q1_t, q2_t, r, s2, done, gamma, target_noise, noise_clip, rng):
    a2 = actor_t(s2)
    if target_noise > 0:
        noise = np.clip(rng.normal(0.0, target_noise, a2.shape), -noise_clip, noise_clip)
        a2 = np.clip(a2 + noise, -1.0, 1.0)
    x = critic_input(s2, a2)
    q_next = np.minimum(q1_t(x)[:, 0], q2_t(x)[:, 0])
    return r + gamma * (1.0 - done) * q_next


def deterministic_actor_loss(actor: DenseNet, q: DenseNet, s):
    """``-mean Q(s, pi(s))`` with gradients for the actor only."""
    a, cache_a = actor.forward(s)
    out, cache_q = q.forward(critic_input(s, a))
    n = len(s)
    _, g_in = q.backward(cache_q, np.full((n, 1), -1.0 / n, dtype=out.dtype))
    grads, _ = actor.backward(cache_a, g_in[:, s.shape[1]:])
    return float(-out.mean()), grads


class TD3Agent(Agent):
    def __init__(self, obs_dim: int, action_low, action_high, config: TD3Config | None = None,
                 rng: np.random.Generator | int | None = None, dtype=np.float32):
        self.config = c = config or TD3Config()
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.scaler = ActionScaler(action_low, action_high)
        self.act_dim = len(self.scaler.low)
        self.actor = DenseNet([obs_dim, *c.hidden, self.act_dim], self.rng, output="tanh", dtype=dtype)
        self.q1 = DenseNet([obs_dim + self.act_dim, *c.hidden, 1], self.rng, dtype=dtype)
        self.q2 = DenseNet([obs_dim + self.act_dim, *c.hidden, 1], self.rng, dtype=dtype)
        self.actor_t, self.q1_t, self.q2_t = self.actor.copy(), self.q1.copy(), self.q2.copy()
        self.actor_opt = Adam(self.actor.params, lr=c.actor_lr)
        self.q1_opt = Adam(self.q1.params, lr=c.critic_lr)
        self.q2_opt = Adam(self.q2.params, lr=c.critic_lr)
        self.nets = {"actor": self.actor, "q1": self.q1, "q2": self.q2,
                     "actor_t": self.actor_t, "q1_t": self.q1_t, "q2_t": self.q2_t}
        self.optimizers = {"actor": self.actor_opt, "q1": self.q1_opt, "q2": self.q2_opt}
        self.critic_steps = 0
        self.actor_steps = 0

    def act(self, obs, mode: str = "explore", step: int | None = None):
        if mode == "explore" and step is not None and step < self.config.random_steps:
            return self.scaler.to_env(self.rng.uniform(-1, 1, self.act_dim))
        a = self.actor(obs[None])[0].astype(np.float64)
        if mode == "explore":
            a = np.clip(a + self.rng.normal(0.0, self.config.explore_noise, a.shape), -1.0, 1.0)
        return self.scaler.to_env(a)

    def update(self, batch, step: int = 0) -> dict:
        c = self.config
        s, a, r, s2, d = stack_batch(batch.items)
        a = self.scaler.to_unit(np.stack(a)).astype(s.dtype)
        w = np.asarray(batch.weights, dtype=s.dtype)
        y = td3_targets(self.actor_t, self.q1_t, self.q2_t, r, s2, d, c.gamma, c.target_noise, c.noise_clip,
                        self.rng)
        l1, g1, d1 = critic_loss(self.q1, s, a, y, w)
        l2, g2, d2 = critic_loss(self.q2, s, a, y, w)
        self.q1_opt.step(g1)
        self.q2_opt.step(g2)
        self.critic_steps += 1
        out = {"critic_loss": (l1 + l2) / 2, "td_abs": np.maximum(np.abs(d1), np.abs(d2))}
        if self.critic_steps % c.policy_delay == 0:
            la, ga = deterministic_actor_loss(self.actor, self.q1, s)
            self.actor_opt.step(ga)
            self.actor_steps += 1
            for tgt, src in ((self.actor_t, self.actor), (self.q1_t, self.q1), (self.q2_t, self.q2)):
                tgt.polyak_from(src, c.rho)
            out["actor_loss"] = la
        return out

    def extra_state(self):
        return {"critic_steps": np.array(self.critic_steps), "actor_steps": np.array(self.actor_steps)}

    def load_extra_state(self, state):
        self.critic_steps = int(state["critic_steps"])
        self.actor_steps = int(state["actor_steps"])
