"""Episode loop, baseline policies, exhaustive-search oracle, training and evaluation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agent import Normalizer, Transition, TwoStepAgent
from .env import DisruptionEnv
from .network import arrival_time

Action = tuple[int, "int | None"]


# --- policies ---------------------------------------------------------------


class Policy:
    name = "policy"

    def __call__(self, env: DisruptionEnv) -> Action:
        raise NotImplementedError

    def reset(self) -> None:
        pass


def route_demand(env: DisruptionEnv) -> dict[int, float]:
    od = env.mob.od_demand()
    return {r: float(od[env.net.od_block[r]].sum()) for r in env.net.disrupted_routes}


def servable_routes(env: DisruptionEnv) -> list[int]:
    """Routes the fleet can take a unit for right now."""
    if env.fleet.flexible > 0:
        return list(env.net.disrupted_routes)
    ready = {u.route for u in env.fleet.restricted if not u.used and u.arrival_time <= env.t}
    return [r for r in env.net.disrupted_routes if r in ready]


def busiest_full_plan(env: DisruptionEnv, routes: Sequence[int] | None = None) -> int:
    """All-stops plan of the route with the largest in-station OD demand (lowest id on ties)."""
    rd = route_demand(env)
    best = max(routes or env.net.disrupted_routes, key=lambda r: (rd[r], -r))
    return env.net.plans.index(env.net.full_schedule(best))


class NullPolicy(Policy):
    name = "null"

    def __call__(self, env):
        return 0, None


class AlwaysPolicy(Policy):
    """Dispatch at every step: all-stops plan of the busiest route that can get a unit."""

    name = "always"

    def __call__(self, env):
        return 1, busiest_full_plan(env, servable_routes(env))


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def __call__(self, env):
        a1 = int(self.rng.integers(2))
        a2 = int(self.rng.integers(env.net.n_plans))
        return a1, (a2 if a1 else None)


class GreedyPolicy(Policy):
    """Dispatch once in-station disrupted demand passes half the overcrowding threshold."""

    name = "greedy"

    def __call__(self, env):
        if env.mob.disrupted_demand() > env.w.crowd_threshold / 2:
            return 1, busiest_full_plan(env)
        return 0, None


class HorizonPolicy(Policy):
    """One dispatch at the end of each of ``k`` equal horizons, busiest route, all stops."""

    name = "horizon"

    def __init__(self, k: int = 6):
        if k < 1:
            raise ValueError("need k >= 1")
        self.k = k
        self._fired: set[int] = set()

    def reset(self):
        self._fired = set()

    def boundaries(self, env: DisruptionEnv) -> list[float]:
        sc = env.sc
        last = sc.end - sc.step
        length = (sc.end - sc.start) / self.k
        return [min(sc.start + j * length, last) for j in range(1, self.k + 1)]

    def __call__(self, env):
        for j, b in enumerate(self.boundaries(env)):
            if j not in self._fired and env.t >= b:
                self._fired.add(j)
                if sum(env.fleet.availability(env.t)[:1]) > 0:
                    return 1, busiest_full_plan(env)
        return 0, None


class SequencePolicy(Policy):
    """Replays a fixed action sequence (0 = stay, 1 + p = dispatch plan p); idles past its end."""

    name = "sequence"

    def __init__(self, seq: Sequence[int]):
        self.seq = list(seq)
        self.pos = 0

    def reset(self):
        self.pos = 0

    def __call__(self, env):
        code = self.seq[self.pos] if self.pos < len(self.seq) else 0
        self.pos += 1
        return (0, None) if code == 0 else (1, code - 1)


class AgentPolicy(Policy):
    name = "dqn"

    def __init__(self, agent: TwoStepAgent):
        self.agent = agent

    def __call__(self, env):
        a1 = self.agent.act(env.state1())
        return (1, self.agent.plan(env.state2())) if a1 else (0, None)


def make_policy(name: str, seed: int = 0, k: int = 6) -> Policy:
    if name == "random":
        return RandomPolicy(seed)
    if name == "greedy":
        return GreedyPolicy()
    if name == "horizon":
        return HorizonPolicy(k)
    if name == "null":
        return NullPolicy()
    if name == "always":
        return AlwaysPolicy()
    raise ValueError(f"unknown policy {name!r}")


# --- episode loop -----------------------------------------------------------


@dataclass
class EpisodeLog:
    steps: list[dict]
    summary: dict

    def to_lines(self) -> list[str]:
        return [json.dumps(s, sort_keys=True) for s in self.steps] + [json.dumps({"summary": self.summary}, sort_keys=True)]

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeLog":
        steps, summary = [], {}
        for line in Path(path).read_text().splitlines():
            rec = json.loads(line)
            if "summary" in rec:
                summary = rec["summary"]
            else:
                steps.append(rec)
        return cls(steps, summary)


def _step_record(env: DisruptionEnv, s1: np.ndarray, rec: dict, result) -> dict:
    out = {
        "t": rec["t"],
        "state1": [float(v) for v in s1],
        "a1": rec["a1"],
        "a2": rec["a2"],
        "route": rec["route"],
        "tier": rec["tier"],
        "capacity": rec["capacity"],
        "invalid": rec["invalid"],
        "headway_violation": bool(rec["headway_violation"]),
        "served": rec["served"],
        "utilization": rec["utilization"],
        "delay": rec["delay"],
        "by_train": rec["by_train"],
        "reward": result.reward,
        "crowd": rec["crowd"],
        "denied": rec["denied"],
        "stock": rec["used"],
    }
    if rec["capacity"] is not None:
        sched = env.net.plans[rec["a2"]]
        out["arrivals"] = [[st, tm] for st, tm in arrival_time(sched, rec["t"]).items()]
    if result.terminal:
        out["episode_reward"] = result.episode_reward
    return out


def run_episode(
    env: DisruptionEnv,
    policy: Policy,
    train: bool = False,
    record_steps: bool = True,
) -> EpisodeLog:
    """Play one episode from reset; with ``train`` the policy's agent learns at the end."""
    if train and not isinstance(policy, AgentPolicy):
        raise ValueError("training needs an agent policy")
    env.reset()
    policy.reset()
    memory1: list[Transition] = []
    memory2: list[Transition] = []
    steps: list[dict] = []
    agent = policy.agent if isinstance(policy, AgentPolicy) else None

    s1 = env.state1()
    s2 = env.state2() if train else None
    while not env.done:
        a1, a2 = policy(env)
        res = env.step(a1, a2)
        nxt1 = env.state1()
        if record_steps:
            steps.append(_step_record(env, s1, res.record, res))
        if train:
            nxt2 = env.state2()
            memory1.append(Transition(agent.state1(s1), a1, res.reward, agent.state1(nxt1), res.terminal))
            if a1:
                memory2.append(Transition(agent.state2(s2), a2, res.reward, agent.state2(nxt2), res.terminal))
            s2 = nxt2
        s1 = nxt1

    summary = env.summary()
    if train:
        loss1, loss2 = agent.train(memory1, memory2, env.final_reward or 0.0)
        summary["loss_dispatch"] = loss1
        summary["loss_plan"] = loss2
    return EpisodeLog(steps, summary)


def check_log(log: EpisodeLog) -> None:
    """Summary totals must equal the sums over step records."""
    s = log.summary
    reward = 0.0
    served = 0.0
    denied = 0.0
    for st in log.steps:
        reward += st["reward"]
        served += st["served"]
        denied += st["denied"]
    checks = {
        "step_reward": reward,
        "satisfied": served,
        "denied": denied,
        "steps": len(log.steps),
        "units_used": log.steps[-1]["stock"] if log.steps else 0,
        "max_crowd": max((st["crowd"] for st in log.steps), default=0.0),
    }
    for key, val in checks.items():
        if s[key] != val:
            raise AssertionError(f"summary {key}={s[key]} but step records give {val}")
    final = log.steps[-1].get("episode_reward", 0.0) if log.steps else 0.0
    if s["total_reward"] != reward + final:
        raise AssertionError("total reward is not step rewards plus episode reward")


# --- exhaustive oracle ------------------------------------------------------


class SearchTooLarge(ValueError):
    pass


ORACLE_LIMITS = {"steps": 12, "plans": 3, "units": 3}


def search_size(steps: int, plans: int, units: int) -> int:
    """Leaves of the search tree when every dispatch consumes a unit."""
    return sum(math.comb(steps, d) * plans**d for d in range(min(units, steps) + 1))


def oracle_search(env: DisruptionEnv) -> tuple[tuple[int, ...], float]:
    """Best action sequence by exhaustive search (0 = stay, 1 + p = plan p).

    Every sequence is played through copies of the real environment. The first
    sequence in lexicographic order wins ties. A refused dispatch leaves the
    same successor state as staying put with no better reward, so its subtree
    is skipped whenever the refusal penalty is not a bonus.
    """
    sc = env.sc
    size = {"steps": sc.n_steps, "plans": env.net.n_plans, "units": env.fleet_size}
    over = {k: v for k, v in size.items() if v > ORACLE_LIMITS[k]}
    if over:
        est = search_size(size["steps"], size["plans"], size["units"])
        bound = (size["plans"] + 1) ** size["steps"]
        raise SearchTooLarge(
            f"scenario too large for exhaustive search ({over} over limits {ORACLE_LIMITS}); "
            f"about {est:,} sequences, at most {bound:,}"
        )
    prune = env.w.headway * env.w.headway_penalty <= 0
    env.reset()
    best_seq: tuple[int, ...] = ()
    best_val = -math.inf

    def dfs(node: DisruptionEnv, prefix: tuple[int, ...]) -> None:
        nonlocal best_seq, best_val
        for code in range(env.net.n_plans + 1):
            child = node.copy()
            res = child.step(0 if code == 0 else 1, None if code == 0 else code - 1)
            if prune and res.record["invalid"]:
                continue
            seq = prefix + (code,)
            if child.done:
                val = child.total_reward()
                if val > best_val:
                    best_val, best_seq = val, seq
            else:
                dfs(child, seq)

    dfs(env, ())
    return best_seq, best_val


def oracle_value(env: DisruptionEnv, seq: Sequence[int]) -> float:
    """The oracle's own evaluation of ``seq``: chained environment copies, idling past its end."""
    env.reset()
    node = env
    k = 0
    while not node.done:
        code = seq[k] if k < len(seq) else 0
        node = node.copy()
        node.step(0 if code == 0 else 1, None if code == 0 else code - 1)
        k += 1
    return node.total_reward()


def sequence_value(env: DisruptionEnv, seq: Sequence[int]) -> float:
    """Total reward of replaying ``seq`` through the standard episode loop."""
    return run_episode(env, SequencePolicy(seq), record_steps=False).summary["total_reward"]


# --- training and evaluation -------------------------------------------------


def make_agent(env: DisruptionEnv, cfg, seed: int) -> TwoStepAgent:
    sc = env.sc
    norm = Normalizer(
        passengers=sc.weights.crowd_threshold,
        stock=max(env.fleet_size, 1),
        t0=sc.start,
        horizon=sc.end - sc.start,
    )
    return TwoStepAgent(env.net.n_od, len(env.net.disrupted_routes), env.net.n_plans, norm, cfg, seed)


def moving_average(x: Sequence[float], window: int = 100) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) < window:
        return np.array([])
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[window:] - c[:-window]) / window


@dataclass
class TrainResult:
    agent: TwoStepAgent
    summaries: list[dict]


def train(
    env: DisruptionEnv,
    agent: TwoStepAgent,
    episodes: int,
    out_dir: str | Path | None = None,
    log_steps_every: int = 100,
    progress: Callable[[int, dict], None] | None = None,
) -> TrainResult:
    """Sequential episodes with the sigmoid exploration schedule; learns after every episode."""
    schedule = agent.cfg.epsilon
    policy = AgentPolicy(agent)
    summaries = []
    out = Path(out_dir) if out_dir is not None else None
    fh = None
    if out is not None:
        (out / "episodes").mkdir(parents=True, exist_ok=True)
        fh = open(out / "summaries.jsonl", "w")
    try:
        for ep in range(episodes):
            agent.epsilon = schedule(ep)
            keep = out is not None and (ep % log_steps_every == 0 or ep == episodes - 1)
            log = run_episode(env, policy, train=True, record_steps=keep)
            summary = {"episode": ep, "epsilon": agent.epsilon, **log.summary}
            summaries.append(summary)
            if fh is not None:
                fh.write(json.dumps(summary, sort_keys=True) + "\n")
            if keep:
                (out / "episodes" / f"episode_{ep:05d}.jsonl").write_text("\n".join(log.to_lines()) + "\n")
            if progress is not None:
                progress(ep, summary)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(agent, summaries)


METRICS = ("total_reward", "satisfied", "satisfied_fraction", "units_used", "steps", "max_crowd")


@dataclass
class EvalStats:
    n: int = 0
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    min: dict = field(default_factory=dict)
    max: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)
    summaries: list = field(default_factory=list)

    def to_dict(self, with_episodes: bool = False) -> dict:
        d = {"n": self.n, "mean": self.mean, "std": self.std, "min": self.min, "max": self.max,
             "histograms": self.histograms}
        if with_episodes:
            d["episodes"] = self.summaries
        return d


def summarize(summaries: list[dict], bins: int = 20) -> EvalStats:
    if not summaries:
        return EvalStats()
    st = EvalStats(n=len(summaries), summaries=summaries)
    for m in METRICS:
        x = np.array([s[m] for s in summaries], dtype=float)
        st.mean[m] = float(x.mean())
        st.std[m] = float(x.std()) if x.max() > x.min() else 0.0
        st.min[m] = float(x.min())
        st.max[m] = float(x.max())
        counts, edges = np.histogram(x, bins=bins if x.max() > x.min() else 1)
        st.histograms[m] = {"counts": counts.tolist(), "edges": edges.tolist()}
    return st


def evaluate(
    env: DisruptionEnv,
    policy: Policy,
    n: int,
    epsilon: float | None = None,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> EvalStats:
    """Play ``n`` episodes without learning. Agent policies run at a fixed ``epsilon``."""
    if isinstance(policy, AgentPolicy):
        policy.agent.epsilon = 0.2 if epsilon is None else epsilon
        policy.agent.rng = np.random.default_rng(seed)
    summaries = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for ep in range(n):
        log = run_episode(env, policy, record_steps=out is not None and ep == 0)
        summaries.append({"episode": ep, **log.summary})
        if out is not None and ep == 0:
            (out / "episode_00000.jsonl").write_text("\n".join(log.to_lines()) + "\n")
    stats = summarize(summaries)
    if out is not None:
        with open(out / "summaries.jsonl", "w") as fh:
            for s in summaries:
                fh.write(json.dumps(s, sort_keys=True) + "\n")
    return stats
