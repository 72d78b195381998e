"""DDPG layer controller: numpy actor/critic MLPs with manual backprop."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.stats import truncnorm

from .framing import FormatError, read_framed, write_framed

STATE_DIM = 13


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    gamma: float = 0.95
    tau: float = 0.01
    buffer_size: int = 2000
    batch_size: int = 64
    sigma: float = 0.9
    sigma_decay: float = 0.99


class Transition(NamedTuple):
    s: np.ndarray
    a: float
    r: float
    s_next: np.ndarray
    done: bool


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MLP:
    """Dense ReLU network; output activation is ``"sigmoid"`` or ``"linear"``."""

    def __init__(self, sizes, out_act: str, rng: np.random.Generator):
        self.sizes = tuple(sizes)
        self.out_act = out_act
        self.params: list[np.ndarray] = []
        last = len(sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 3e-3 if i == last else 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    def forward(self, x):
        cache = [x]
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            if i < n_layers - 1:
                h = np.maximum(z, 0.0)
            else:
                h = _sigmoid(z) if self.out_act == "sigmoid" else z
            cache.append(h)
        return h, cache

    def backward(self, cache, grad_out):
        """Gradients w.r.t. params and input, given dLoss/dOutput."""
        n_layers = len(self.params) // 2
        grads = [None] * len(self.params)
        out = cache[-1]
        g = grad_out * out * (1.0 - out) if self.out_act == "sigmoid" else grad_out
        for i in reversed(range(n_layers)):
            h_in = cache[i]
            W = self.params[2 * i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ W.T
            if i > 0:
                g = g * (cache[i] > 0)
        return grads, g

    def __call__(self, x):
        return self.forward(x)[0]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "MLP":
        clone = MLP.__new__(MLP)
        clone.sizes, clone.out_act = self.sizes, self.out_act
        clone.params = [p.copy() for p in self.params]
        return clone


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr = params, lr
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.items: deque[Transition] = deque(maxlen=capacity)

    def push(self, t: Transition) -> None:
        vals = np.concatenate([t.s, t.s_next, [t.a, t.r]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("transition contains non-finite values")
        self.items.append(t)

    def __len__(self):
        return len(self.items)

    def sample(self, n: int, rng: np.random.Generator):
        if n > len(self.items):
            raise ValueError(f"buffer holds {len(self.items)} transitions, asked for {n}")
        idx = rng.choice(len(self.items), size=n, replace=False)
        batch = [self.items[i] for i in idx]
        return (np.array([t.s for t in batch]), np.array([[t.a] for t in batch]),
                np.array([[t.r] for t in batch]), np.array([t.s_next for t in batch]),
                np.array([[float(t.done)] for t in batch]))


class DDPGAgent:
    def __init__(self, cfg: AgentConfig | None = None, rng: np.random.Generator | None = None,
                 state_dim: int = STATE_DIM):
        self.cfg = cfg or AgentConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        hidden = tuple(self.cfg.hidden)
        self.actor = MLP((state_dim,) + hidden + (1,), "sigmoid", self.rng)
        self.critic = MLP((state_dim + 1,) + hidden + (1,), "linear", self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, self.cfg.lr_actor)
        self.critic_opt = Adam(self.critic.params, self.cfg.lr_critic)
        self.buffer = ReplayBuffer(self.cfg.buffer_size)
        self.sigma = self.cfg.sigma

    def policy(self, s) -> float:
        return float(self.actor(np.asarray(s, dtype=np.float64)[None])[0, 0])

    def act(self, s, explore: bool = True, a_min: float = 0.0, a_max: float = 1.0) -> float:
        s = np.asarray(s, dtype=np.float64)
        if not np.all(np.isfinite(s)):
            raise ValueError("state must be finite")
        mu = self.policy(s)
        a = mu
        if explore and self.sigma > 1e-12:
            lo, hi = (0.0 - mu) / self.sigma, (1.0 - mu) / self.sigma
            a = float(truncnorm.rvs(lo, hi, loc=mu, scale=self.sigma, random_state=self.rng))
        return float(min(max(a, a_min), a_max))

    def remember(self, t: Transition) -> None:
        self.buffer.push(t)

    def decay_noise(self) -> None:
        self.sigma *= self.cfg.sigma_decay

    # -- losses with analytic gradients --------------------------------

    def td_targets(self, r, s_next, done):
        a_next = self.actor_target(s_next)
        q_next = self.critic_target(np.hstack([s_next, a_next]))
        return r + self.cfg.gamma * (1.0 - done) * q_next

    def critic_loss_and_grad(self, s, a, y):
        q, cache = self.critic.forward(np.hstack([s, a]))
        diff = q - y
        loss = float(np.mean(diff ** 2))
        grads, _ = self.critic.backward(cache, 2.0 * diff / len(s))
        return loss, grads

    def actor_loss_and_grad(self, s):
        """Negative mean Q(s, mu(s)) and its gradient w.r.t. actor params."""
        a, a_cache = self.actor.forward(s)
        q, q_cache = self.critic.forward(np.hstack([s, a]))
        loss = -float(np.mean(q))
        _, g_in = self.critic.backward(q_cache, -np.ones_like(q) / len(s))
        grads, _ = self.actor.backward(a_cache, g_in[:, -1:])
        return loss, grads

    def soft_update(self) -> None:
        tau = self.cfg.tau
        for net, target in ((self.actor, self.actor_target), (self.critic, self.critic_target)):
            for p, tp in zip(net.params, target.params):
                tp *= 1.0 - tau
                tp += tau * p

    def update(self, batch_size: int | None = None) -> tuple[float, float]:
        n = batch_size or self.cfg.batch_size
        s, a, r, s_next, done = self.buffer.sample(n, self.rng)
        y = self.td_targets(r, s_next, done)
        critic_loss, cg = self.critic_loss_and_grad(s, a, y)
        self.critic_opt.step(cg)
        actor_loss, ag = self.actor_loss_and_grad(s)
        self.actor_opt.step(ag)
        self.soft_update()
        return critic_loss, -actor_loss

    # -- checkpoints ----------------------------------------------------

    def _nets(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def save(self, path: str | Path) -> None:
        entries, chunks, offset = {}, [], 0
        for name, net in self._nets().items():
            blob = net.get_flat().astype("<f4").tobytes()
            entries[name] = {"sizes": list(net.sizes), "offset": offset, "bytes": len(blob)}
            chunks.append(blob)
            offset += len(blob)
        cfg = asdict(self.cfg)
        cfg["hidden"] = list(cfg["hidden"])
        header = {"networks": entries, "sigma": self.sigma, "config": cfg}
        write_framed(path, "checkpoint", header, b"".join(chunks))

    @classmethod
    def load(cls, path: str | Path, rng: np.random.Generator | None = None) -> "DDPGAgent":
        header, blob = read_framed(path, "checkpoint")
        try:
            cfg = dict(header["config"])
            cfg["hidden"] = tuple(cfg["hidden"])
            agent = cls(AgentConfig(**cfg), rng, state_dim=header["networks"]["actor"]["sizes"][0])
            for name, net in agent._nets().items():
                e = header["networks"][name]
                if tuple(e["sizes"]) != net.sizes or e["offset"] + e["bytes"] > len(blob):
                    raise FormatError(f"{path}: network {name} does not match its blob section")
                flat = np.frombuffer(blob, dtype="<f4", count=e["bytes"] // 4, offset=e["offset"])
                if flat.size != net.get_flat().size:
                    raise FormatError(f"{path}: network {name} has wrong parameter count")
                net.set_flat(flat.astype(np.float64))
            agent.sigma = float(header["sigma"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: bad checkpoint header ({exc})") from exc
        return agent
