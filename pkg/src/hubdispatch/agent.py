"""Two-step DQN: a dispatch network and a plan network, trained on whole-episode batches.

Networks are small numpy MLPs with hand-written backpropagation; ReLU at hidden
layers, linear output. Training is plain SGD with gradient-norm clipping.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

MODEL_SCHEMA = "hubdispatch.two-step-dqn/1"
MAGIC = b"HDQN"


class MLP:
    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None, activation: str = "relu"):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            if rng is None:
                self.weights.append(np.zeros((fan_out, fan_in)))
                self.biases.append(np.zeros(fan_out))
            else:
                self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
                self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input of width {self.sizes[0]}, got {x.shape[1]}")
        cache = [x]
        a = x
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = z if k == last else self._act(z)
            if keep:
                cache.append(z)
        return (a, cache) if keep else a

    __call__ = forward

    def backward(self, cache, d_out: np.ndarray):
        """Gradients of sum(d_out * output) with respect to every parameter."""
        x = cache[0]
        zs = cache[1:]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = d_out
        for k in range(len(self.weights) - 1, -1, -1):
            a_prev = x if k == 0 else self._act(zs[k - 1])
            grads_w[k] = delta.T @ a_prev
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = delta @ self.weights[k]
                if self.activation == "relu":
                    delta = delta * (zs[k - 1] > 0)
        return grads_w, grads_b

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes = self.sizes
        new.activation = self.activation
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def load_from(self, other: "MLP") -> None:
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob

    def sgd_step(self, grads_w, grads_b, lr: float, clip: float | None = 10.0) -> float:
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads_w + grads_b))
        if not math.isfinite(norm):
            raise FloatingPointError("non-finite gradient")
        scale = lr
        if clip is not None and norm > clip:
            scale = lr * clip / norm
        for w, g in zip(self.weights, grads_w):
            w -= scale * g
        for b, g in zip(self.biases, grads_b):
            b -= scale * g
        return norm


def td_loss(net: MLP, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared TD error and its parameter gradients."""
    q, cache = net.forward(states, keep=True)
    n = len(actions)
    idx = np.arange(n)
    err = targets - q[idx, actions]
    d_out = np.zeros_like(q)
    d_out[idx, actions] = -2.0 * err / n
    gw, gb = net.backward(cache, d_out)
    return float((err**2).mean()), gw, gb


def gradient_check(net: MLP, states, actions, targets, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative gap between backprop and central differences of the TD loss.

    Relative gaps use max(|analytic|, |numeric|, floor) as denominator so that
    exactly-zero gradients do not divide by zero.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    _, gw, gb = td_loss(net, states, actions, targets)
    worst = 0.0
    for param, grad in zip(net.params(), [g for pair in zip(gw, gb) for g in pair]):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = td_loss(net, states, actions, targets)[0]
            flat[i] = keep - h
            down = td_loss(net, states, actions, targets)[0]
            flat[i] = keep
            num = (up - down) / (2 * h)
            denom = max(abs(num), abs(gflat[i]), floor)
            worst = max(worst, abs(num - gflat[i]) / denom)
    return worst


@dataclass
class EpsilonSchedule:
    """Sigmoid decay from ``eps0`` towards ``eps_min`` centred near ``mid``."""

    eps0: float = 1.0
    eps_min: float = 0.2
    rate: float = 0.005
    mid: float = 1000.0

    def __post_init__(self):
        if not self.eps0 >= self.eps_min >= 0:
            raise ValueError("need eps0 >= eps_min >= 0")

    def __call__(self, t: float) -> float:
        x = -self.rate * ((t - self.mid) - 0.5)
        # 1 / (1 + e^x) without overflow
        if x > 0:
            e = math.exp(-x)
            s = e / (1.0 + e)
        else:
            s = 1.0 / (1.0 + math.exp(x))
        return max(self.eps_min, self.eps0 - (self.eps0 - self.eps_min) * s)


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class DQNConfig:
    gamma: float = 0.95  # discount factor; the SGD step size is lr
    lr: float = 1e-2
    clip: float = 10.0
    epochs: int = 1
    batch_size: int | None = None  # None: whole episode in one batch
    sync_every: int = 1  # target copy period, in train_batch calls
    reward_scale: float = 1e-3  # rewards reach 1e4; keeps targets near unit scale


class DQN:
    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, cfg: DQNConfig | None = None):
        self.cfg = cfg or DQNConfig()
        self.online = MLP(sizes, rng)
        self.target = self.online.copy()
        self.n_actions = self.online.sizes[-1]
        self.updates = 0
        self.batches = 0

    def q(self, state: np.ndarray) -> np.ndarray:
        return self.online(state)[0]

    def greedy(self, state: np.ndarray) -> int:
        return int(np.argmax(self.q(state)))  # first maximum on ties

    def targets(self, memory: Sequence[Transition], episode_reward: float = 0.0) -> np.ndarray:
        rewards = np.array([tr.reward for tr in memory], dtype=float)
        rewards[-1] += episode_reward
        rewards *= self.cfg.reward_scale
        nxt = np.array([tr.next_state for tr in memory], dtype=float)
        live = ~np.array([tr.terminal for tr in memory])
        y = rewards.copy()
        if live.any():
            y[live] += self.cfg.gamma * self.target(nxt[live]).max(axis=1)
        return y

    def train_batch(self, memory: Sequence[Transition], episode_reward: float = 0.0) -> float:
        """One episode's update: fixed Bellman targets, then sequential SGD passes.

        Returns the mean loss of the last pass (0 for an empty memory).
        """
        if not memory:
            return 0.0
        for tr in memory:
            if not 0 <= tr.action < self.n_actions:
                raise ValueError(f"action {tr.action} outside 0..{self.n_actions - 1}")
        y = self.targets(memory, episode_reward)
        states = np.array([tr.state for tr in memory], dtype=float)
        actions = np.array([tr.action for tr in memory], dtype=int)
        bs = self.cfg.batch_size or len(memory)
        loss = 0.0
        for _ in range(self.cfg.epochs):
            losses = []
            for lo in range(0, len(memory), bs):
                sl = slice(lo, lo + bs)
                l, gw, gb = td_loss(self.online, states[sl], actions[sl], y[sl])
                self.online.sgd_step(gw, gb, self.cfg.lr, self.cfg.clip)
                self.updates += 1
                losses.append(l)
            loss = float(np.mean(losses))
        for p in self.online.params():
            if not np.all(np.isfinite(p)):
                raise FloatingPointError("non-finite weights after update")
        self.batches += 1
        if self.batches % self.cfg.sync_every == 0:
            self.sync()
        return loss

    def sync(self) -> None:
        self.target.load_from(self.online)


@dataclass
class Normalizer:
    """Scales raw observations to O(1) before they reach a network."""

    passengers: float = 1600.0
    stock: float = 20.0
    t0: float = 240.0
    horizon: float = 1200.0
    headway: float = 60.0

    def state1(self, raw: np.ndarray) -> np.ndarray:
        out = np.asarray(raw, dtype=float).copy()
        out[0:2] /= self.passengers
        out[2:4] /= self.stock
        out[4] = (out[4] - self.t0) / self.horizon
        return out

    def state2(self, raw: np.ndarray, n_od: int) -> np.ndarray:
        out = np.asarray(raw, dtype=float).copy()
        out[:n_od] /= self.passengers
        out[n_od:] /= self.headway
        return out


@dataclass
class AgentConfig:
    dispatch_hidden: tuple[int, ...] = (5,)
    plan_hidden: tuple[int, ...] = (128, 64)
    dqn: DQNConfig = field(default_factory=DQNConfig)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)


class TwoStepAgent:
    """Dispatch network (state1 -> {0,1}) feeding a plan network (state2 -> plan index)."""

    def __init__(self, n_od: int, n_routes: int, n_plans: int, norm: Normalizer, cfg: AgentConfig | None = None, seed: int = 0):
        self.cfg = cfg or AgentConfig()
        self.n_od, self.n_routes, self.n_plans = n_od, n_routes, n_plans
        self.norm = norm
        init = np.random.default_rng(seed)
        self.dispatch = DQN((5, *self.cfg.dispatch_hidden, 2), init, self.cfg.dqn)
        self.plan_net = DQN((n_od + n_routes, *self.cfg.plan_hidden, n_plans), init, self.cfg.dqn)
        self.rng = np.random.default_rng(seed + 1)
        self.epsilon = 1.0

    def state1(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (5,):
            raise ValueError(f"state1 must have 5 entries, got {raw.shape}")
        return self.norm.state1(raw)

    def state2(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.n_od + self.n_routes,):
            raise ValueError(f"state2 must have {self.n_od + self.n_routes} entries, got {raw.shape}")
        return self.norm.state2(raw, self.n_od)

    def _choose(self, net: DQN, x: np.ndarray) -> int:
        if self.epsilon > 0 and self.rng.random() < self.epsilon:
            return int(self.rng.integers(net.n_actions))
        return net.greedy(x)

    def act(self, raw_state1) -> int:
        return self._choose(self.dispatch, self.state1(raw_state1))

    def plan(self, raw_state2) -> int:
        return self._choose(self.plan_net, self.state2(raw_state2))

    def train(self, memory1: Sequence[Transition], memory2: Sequence[Transition], episode_reward: float) -> tuple[float, float]:
        return (
            self.dispatch.train_batch(memory1, episode_reward),
            self.plan_net.train_batch(memory2, episode_reward),
        )

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        save_model(path, {"dispatch": self.dispatch.online, "plan": self.plan_net.online}, asdict(self.norm))

    @classmethod
    def load(cls, path: str | Path, n_od: int, n_routes: int, n_plans: int, seed: int = 0) -> "TwoStepAgent":
        nets, norm = load_model(path)
        want = {"dispatch": (5, 2), "plan": (n_od + n_routes, n_plans)}
        for name, (n_in, n_out) in want.items():
            if name not in nets:
                raise ValueError(f"model file lacks network {name!r}")
            got = nets[name].sizes
            if got[0] != n_in or got[-1] != n_out:
                raise ValueError(f"{name} network is {got}, scenario needs {n_in}->...->{n_out}")
        cfg = AgentConfig(dispatch_hidden=nets["dispatch"].sizes[1:-1], plan_hidden=nets["plan"].sizes[1:-1])
        agent = cls(n_od, n_routes, n_plans, Normalizer(**norm), cfg, seed)
        for dqn, name in ((agent.dispatch, "dispatch"), (agent.plan_net, "plan")):
            dqn.online.load_from(nets[name])
            dqn.sync()
        return agent


def save_model(path: str | Path, nets: dict[str, MLP], normalization: dict) -> None:
    """MAGIC, u32 header length, JSON header, then float64 LE weights row-major per layer."""
    header = {
        "schema": MODEL_SCHEMA,
        "networks": [{"name": k, "sizes": list(v.sizes), "activation": v.activation} for k, v in nets.items()],
        "normalization": normalization,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for net in nets.values():
            for w, b in zip(net.weights, net.biases):
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path: str | Path) -> tuple[dict[str, MLP], dict]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + n])
    if header.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"{path}: unsupported schema {header.get('schema')!r}")
    pos = 8 + n
    nets = {}
    for spec in header["networks"]:
        net = MLP(spec["sizes"], None, spec["activation"])
        for w, b in zip(net.weights, net.biases):
            for arr in (w, b):
                size = arr.size * 8
                chunk = data[pos : pos + size]
                if len(chunk) != size:
                    raise ValueError(f"{path}: truncated weights for {spec['name']}")
                arr[...] = np.frombuffer(chunk, dtype="<f8").reshape(arr.shape)
                pos += size
        nets[spec["name"]] = net
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes; layer sizes do not match the weights")
    return nets, header["normalization"]
