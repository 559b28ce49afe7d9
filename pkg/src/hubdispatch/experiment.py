"""Run directories: manifest, training, baselines, frozen-policy evaluation and the pass/fail checks."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datagen, harness
from .agent import TwoStepAgent
from .env import DisruptionEnv
from .scenario import RunConfig, Scenario, build_scenario, config_to_dict, demand_groups, load_network

MA_WINDOW = 100
EARLY_WINDOW = 300


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def scenario_manifest(sc: Scenario, env: DisruptionEnv) -> dict:
    return {
        "scenario": sc.name,
        "groups": len(sc.groups),
        "disrupted_demand": env.total_demand,
        "fleet": env.fleet_size,
        "plans": env.net.n_plans,
        "od_slots": env.net.n_od,
        "routes": env.net.disrupted_routes,
        "steps": sc.n_steps,
        "shares": sc.shares,
    }


def generate(cfg: RunConfig, out: Path) -> dict:
    """Write the generated passenger groups and a manifest of what was drawn."""
    out.mkdir(parents=True, exist_ok=True)
    net = load_network(cfg)
    groups, shares = demand_groups(net, cfg.demand)
    datagen.write_groups(out / "groups.csv", groups)
    manifest = {
        "share_seed": cfg.demand.share_seed,
        "sample_seed": cfg.demand.sample_seed,
        "groups": len(groups),
        "disrupted_demand": sum(g.demand for g in groups if g.route != 0),
        "background_demand": sum(g.demand for g in groups if g.route == 0),
        "shares": shares,
        "config": config_to_dict(cfg),
    }
    _dump(out / "manifest.json", manifest)
    return manifest


def train_run(cfg: RunConfig, out: Path, progress=None) -> harness.TrainResult:
    """Train from scratch; writes manifest, per-episode summaries, sampled step logs and the model.

    Nothing written under ``out`` depends on wall-clock time, so identical
    config and seed reproduce every file byte for byte.
    """
    out.mkdir(parents=True, exist_ok=True)
    sc = build_scenario(cfg)
    env = DisruptionEnv(sc)
    agent = harness.make_agent(env, cfg.agent, cfg.training.seed)
    _dump(out / "manifest.json", {"kind": "train", "config": config_to_dict(cfg), **scenario_manifest(sc, env)})
    res = harness.train(env, agent, cfg.training.episodes, out, cfg.training.log_steps_every, progress)
    agent.save(out / "model.bin")
    return res


def load_agent(path: Path, env: DisruptionEnv, seed: int = 0) -> TwoStepAgent:
    return TwoStepAgent.load(path, env.net.n_od, len(env.net.disrupted_routes), env.net.n_plans, seed)


def evaluate_run(
    cfg: RunConfig,
    out: Path | None,
    policy: str = "dqn",
    model: Path | None = None,
    episodes: int | None = None,
    epsilon: float | None = None,
    transfer: bool = False,
    seed: int | None = None,
) -> harness.EvalStats:
    sc = build_scenario(cfg, transfer=transfer)
    env = DisruptionEnv(sc)
    n = cfg.evaluation.episodes if episodes is None else episodes
    seed = cfg.evaluation.seed if seed is None else seed
    if policy == "dqn":
        if model is None:
            raise ValueError("the dqn policy needs a model file")
        pol = harness.AgentPolicy(load_agent(model, env, seed))
        eps = cfg.evaluation.epsilon if epsilon is None else epsilon
    else:
        pol = harness.make_policy(policy, seed)
        eps = None
    stats = harness.evaluate(env, pol, n, eps, seed, out)
    if out is not None:
        _dump(out / "manifest.json", {
            "kind": "transfer" if transfer else "evaluate", "policy": policy, "model": model.name if model else None,
            "model_sha256": hashlib.sha256(model.read_bytes()).hexdigest() if model else None,
            "episodes": n, "epsilon": eps, "seed": seed, "config": config_to_dict(cfg), **scenario_manifest(sc, env),
        })
        _dump(out / "stats.json", stats.to_dict())
    return stats


def baseline_stats(cfg: RunConfig, n_random: int = 200, horizon_k: int = 6, seed: int = 0) -> dict:
    """Random policy (``n_random`` episodes) and the deterministic uniform-horizon baseline."""
    env = DisruptionEnv(build_scenario(cfg))
    rand = harness.evaluate(env, harness.RandomPolicy(seed), n_random)
    hor = harness.evaluate(env, harness.HorizonPolicy(horizon_k), 1)
    greedy = harness.evaluate(env, harness.GreedyPolicy(), 1)
    return {"random": rand.mean, "horizon": hor.mean, "greedy": greedy.mean, "horizon_k": horizon_k}


# --- pass/fail checks ---------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def convergence_checks(summaries: list[dict], baselines: dict, threshold: float = 1600.0) -> list[Check]:
    """Reward improvement, satisfaction against baselines, crowding and fleet usage over the final window."""
    rewards = [s["total_reward"] for s in summaries]
    ma = harness.moving_average(rewards, MA_WINDOW)
    if len(summaries) < EARLY_WINDOW + MA_WINDOW:
        return [Check("convergence", False, f"only {len(summaries)} episodes")]
    final = summaries[-MA_WINDOW:]
    early = float(np.mean(rewards[:EARLY_WINDOW]))
    late = float(ma[-1])
    sat = float(np.mean([s["satisfied_fraction"] for s in final]))
    rnd = baselines["random"]["satisfied_fraction"]
    hor = baselines["horizon"]["satisfied_fraction"]
    below = float(np.mean([s["max_crowd"] < threshold for s in final]))
    unused = float(np.mean([s["units_unused"] for s in final]))
    return [
        Check("6a reward rises", late > early, f"final MA {late:.1f} vs first-{EARLY_WINDOW} mean {early:.1f}"),
        Check("6b satisfaction vs baselines", sat >= 2 * rnd and sat >= hor,
              f"final {sat:.3f}; 2x random {2 * rnd:.3f}; horizon(k={baselines['horizon_k']}) {hor:.3f}"),
        Check("6c crowd below threshold", below >= 0.9, f"{below:.0%} of final-window episodes below {threshold:g}"),
        Check("6d fleet used", unused <= 2.0, f"{unused:.2f} unused units on average"),
    ]


def transfer_checks(stats: harness.EvalStats, train_final_sat: float, threshold: float = 1600.0) -> list[Check]:
    s = stats.summaries
    if not s:
        return [Check("transfer", False, "no episodes")]
    positive = float(np.mean([x["total_reward"] > 0 for x in s]))
    below = float(np.mean([x["max_crowd"] < threshold for x in s]))
    best = max(x["satisfied_fraction"] for x in s)
    return [
        Check("7a positive reward", positive >= 0.95, f"{positive:.1%} of episodes positive"),
        Check("7b crowd below threshold", below >= 0.9, f"{below:.1%} of episodes below {threshold:g}"),
        Check("7c best satisfaction", best >= train_final_sat, f"best {best:.3f} vs training final-window {train_final_sat:.3f}"),
    ]


def read_summaries(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def final_window_satisfaction(summaries: list[dict]) -> float:
    return float(np.mean([s["satisfied_fraction"] for s in summaries[-MA_WINDOW:]]))


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
