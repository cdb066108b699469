"""Soft actor-critic with a tanh-squashed Gaussian policy and learned temperature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from xaer.agents.base import Agent, stack_batch
from xaer.agents.nn import Adam, DenseNet
from xaer.agents.td3 import ActionScaler, critic_input, critic_loss

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class SACConfig:
    hidden: list[int] = field(default_factory=lambda: [256, 256])
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    gamma: float = 0.99
    rho: float = 0.005
    initial_alpha: float = 1.0
    tune_alpha: bool = True
    random_steps: int = 2_000


def _log_std(raw):
    return LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)


def _log1m_tanh_sq(u):
    """``log(1 - tanh(u)^2)`` without cancellation."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squashed_gaussian_log_prob(u, mean, log_std):
    """Log density of ``a = tanh(u)`` where ``u ~ N(mean, exp(log_std)^2)``, summed over dims."""
    z = (u - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI - _log1m_tanh_sq(u), axis=-1)


def policy_sample(actor: DenseNet, s, eps):
    """Reparameterised action; returns (action, log prob, forward cache, intermediates)."""
    out, cache = actor.forward(s)
    k = out.shape[1] // 2
    mean, raw = out[:, :k], out[:, k:]
    log_std = _log_std(raw)
    std = np.exp(log_std)
    u = mean + std * eps
    a = np.tanh(u)
    logp = squashed_gaussian_log_prob(u, mean, log_std)
    return a, logp, cache, (raw, std, eps)


def sac_targets(actor, q1_t, q2_t, r, s2, done, gamma, alpha, rng):
    eps = rng.standard_normal((len(s2), actor.sizes[-1] // 2)).astype(s2.dtype)
    a2, logp2, _, _ = policy_sample(actor, s2, eps)
    x = critic_input(s2, a2)
    q_next = np.minimum(q1_t(x)[:, 0], q2_t(x)[:, 0])
    return r + gamma * (1.0 - done) * (q_next - alpha * logp2)


def sac_actor_loss(actor: DenseNet, q1: DenseNet, q2: DenseNet, s, alpha: float, eps):
    """``mean(alpha * log pi(a|s) - min Q(s, a))`` with ``a`` reparameterised by ``eps``."""
    a, logp, cache, (raw, std, eps) = policy_sample(actor, s, eps)
    x = critic_input(s, a)
    o1, c1 = q1.forward(x)
    o2, c2 = q2.forward(x)
    use_first = (o1[:, 0] <= o2[:, 0])[:, None]
    n = len(s)
    seed = np.full((n, 1), -1.0 / n, dtype=o1.dtype)
    _, gx1 = q1.backward(c1, np.where(use_first, seed, 0))
    _, gx2 = q2.backward(c2, np.where(use_first, 0, seed))
    dq_da = (gx1 + gx2)[:, s.shape[1]:]  # gradient of -mean(minQ) w.r.t. a
    dtanh = 1.0 - a * a
    g_u_q = dq_da * dtanh
    g_mean = alpha * 2.0 * a / n + g_u_q
    g_logstd = alpha * (-1.0 + 2.0 * a * std * eps) / n + g_u_q * std * eps
    g_raw = g_logstd * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - np.tanh(raw) ** 2)
    grads, _ = actor.backward(cache, np.concatenate([g_mean, g_raw], axis=1))
    loss = float(np.mean(alpha * logp - np.minimum(o1[:, 0], o2[:, 0])))
    return loss, grads, logp


class SACAgent(Agent):
    def __init__(self, obs_dim: int, action_low, action_high, config: SACConfig | None = None,
                 rng: np.random.Generator | int | None = None, dtype=np.float32):
        self.config = c = config or SACConfig()
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.scaler = ActionScaler(action_low, action_high)
        self.act_dim = len(self.scaler.low)
        self.target_entropy = -float(self.act_dim)
        self.actor = DenseNet([obs_dim, *c.hidden, 2 * self.act_dim], self.rng, dtype=dtype)
        self.q1 = DenseNet([obs_dim + self.act_dim, *c.hidden, 1], self.rng, dtype=dtype)
        self.q2 = DenseNet([obs_dim + self.act_dim, *c.hidden, 1], self.rng, dtype=dtype)
        self.q1_t, self.q2_t = self.q1.copy(), self.q2.copy()
        self.log_alpha = np.array([math.log(c.initial_alpha)])
        self.actor_opt = Adam(self.actor.params, lr=c.actor_lr)
        self.q1_opt = Adam(self.q1.params, lr=c.critic_lr)
        self.q2_opt = Adam(self.q2.params, lr=c.critic_lr)
        self.alpha_opt = Adam([self.log_alpha], lr=c.alpha_lr)
        self.nets = {"actor": self.actor, "q1": self.q1, "q2": self.q2, "q1_t": self.q1_t, "q2_t": self.q2_t}
        self.optimizers = {"actor": self.actor_opt, "q1": self.q1_opt, "q2": self.q2_opt, "alpha": self.alpha_opt}

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def act(self, obs, mode: str = "explore", step: int | None = None):
        if mode == "explore" and step is not None and step < self.config.random_steps:
            return self.scaler.to_env(self.rng.uniform(-1, 1, self.act_dim))
        out = self.actor(obs[None])[0].astype(np.float64)
        mean, raw = out[: self.act_dim], out[self.act_dim:]
        if mode == "explore":
            u = mean + np.exp(_log_std(raw)) * self.rng.standard_normal(self.act_dim)
        else:
            u = mean
        return self.scaler.to_env(np.tanh(u))

    def update(self, batch, step: int = 0) -> dict:
        c = self.config
        s, a, r, s2, d = stack_batch(batch.items)
        a = self.scaler.to_unit(np.stack(a)).astype(s.dtype)
        w = np.asarray(batch.weights, dtype=s.dtype)
        alpha = self.alpha
        y = sac_targets(self.actor, self.q1_t, self.q2_t, r, s2, d, c.gamma, alpha, self.rng)
        l1, g1, d1 = critic_loss(self.q1, s, a, y, w)
        l2, g2, d2 = critic_loss(self.q2, s, a, y, w)
        self.q1_opt.step(g1)
        self.q2_opt.step(g2)
        eps = self.rng.standard_normal((len(s), self.act_dim)).astype(s.dtype)
        la, ga, logp = sac_actor_loss(self.actor, self.q1, self.q2, s, alpha, eps)
        self.actor_opt.step(ga)
        if c.tune_alpha:
            self.alpha_opt.step([np.array([-np.mean(logp + self.target_entropy)])])
        self.q1_t.polyak_from(self.q1, c.rho)
        self.q2_t.polyak_from(self.q2, c.rho)
        return {"critic_loss": (l1 + l2) / 2, "actor_loss": la, "alpha": alpha,
                "td_abs": np.maximum(np.abs(d1), np.abs(d2))}

    def extra_state(self):
        return {"log_alpha": self.log_alpha.copy()}

    def load_extra_state(self, state):
        self.log_alpha[...] = state["log_alpha"]
