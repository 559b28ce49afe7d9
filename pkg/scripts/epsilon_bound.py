"""How much satisfaction survives the training exploration floor.

Wraps the null and uniform-horizon baselines in the same epsilon-greedy noise
the agent trains under (epsilon 0.2: a random dispatch decision, and a random
plan, each with probability epsilon) and reports their satisfied fraction and
share of positive-reward episodes on the training and transfer days.

    python scripts/epsilon_bound.py [--episodes 200] [--epsilon 0.2]
"""
import argparse

import numpy as np

from hubdispatch import harness as H
from hubdispatch.env import DisruptionEnv
from hubdispatch.scenario import RunConfig, build_scenario


class Noisy(H.Policy):
    def __init__(self, inner: H.Policy, eps: float, seed: int):
        self.inner, self.eps, self.rng = inner, eps, np.random.default_rng(seed)

    def reset(self):
        self.inner.reset()

    def __call__(self, env):
        a1, a2 = self.inner(env)
        if self.rng.random() < self.eps:
            a1 = int(self.rng.integers(2))
        if a1 and (a2 is None or self.rng.random() < self.eps):
            a2 = int(self.rng.integers(env.net.n_plans))
        return a1, a2


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--epsilon", type=float, default=0.2)
    args = ap.parse_args()
    makers = {"null": H.NullPolicy, **{f"horizon{k}": (lambda k=k: H.HorizonPolicy(k)) for k in (6, 12, 20)}}
    print("day      policy     det_sat  det_reward | noisy_sat  noisy_best  noisy_reward  positive")
    for transfer in (False, True):
        env = DisruptionEnv(build_scenario(RunConfig(), transfer=transfer))
        for name, make in makers.items():
            det = H.run_episode(env, make(), record_steps=False).summary
            st = H.evaluate(env, Noisy(make(), args.epsilon, 0), args.episodes)
            pos = np.mean([s["total_reward"] > 0 for s in st.summaries])
            print(f"{'transfer' if transfer else 'train':8} {name:10} {det['satisfied_fraction']:7.3f} {det['total_reward']:11.0f} |"
                  f" {st.mean['satisfied_fraction']:9.3f} {st.max['satisfied_fraction']:11.3f}"
                  f" {st.mean['total_reward']:13.0f} {pos:9.2f}", flush=True)


if __name__ == "__main__":
    main()
