"""Step and episode rewards, and episode termination."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .fleet import FleetState


@dataclass(frozen=True)
class RewardWeights:
    denied: float = -1.0  # w1
    crowd: float = -0.1  # w2
    satisfied: float = 10.0  # w3
    utilization: float = 1e3  # w4
    delay: float = -1e-2  # w5
    headway: float = 1.0  # w6
    beta1: float = 4.0
    beta2: float = 3.0
    beta3: float = 5.0
    crowd_threshold: float = 1600.0
    headway_penalty: float = -500.0
    headway_limit: float = 10.0

    def __post_init__(self):
        if not self.crowd_threshold > 0:
            raise ValueError("crowd_threshold must be positive")

    def scaled(self, c: float) -> "RewardWeights":
        """All step weights multiplied by ``c``."""
        from dataclasses import replace

        return replace(
            self,
            denied=self.denied * c,
            crowd=self.crowd * c,
            satisfied=self.satisfied * c,
            utilization=self.utilization * c,
            delay=self.delay * c,
            headway=self.headway * c,
        )


def step_reward(
    denied_next: float,
    crowd: float,
    dispatched: bool,
    satisfied: float = 0.0,
    utilization: float = 0.0,
    delay: float = 0.0,
    headway_violation: bool = False,
    w: RewardWeights = RewardWeights(),
) -> float:
    r = w.denied * denied_next + w.crowd * crowd
    if dispatched:
        h = w.headway_penalty if headway_violation else 0.0
        r += w.satisfied * satisfied + w.utilization * utilization + w.delay * delay + w.headway * h
    return r


def invalid_dispatch_reward(denied_next: float, crowd: float, w: RewardWeights = RewardWeights()) -> float:
    """A refused dispatch: the idle reward plus one headway-penalty charge."""
    return step_reward(denied_next, crowd, False, w=w) + w.headway * w.headway_penalty


def episode_reward(satisfied_fraction: float, stock_fraction: float, max_crowd: float, w: RewardWeights = RewardWeights()) -> float:
    """Exponential end-of-episode bonus minus the overcrowding penalty.

    Both fractions are in [0, 1]: satisfied demand over total episode demand,
    units dispatched over fleet size. The penalty is the whole peak crowd once
    it exceeds the threshold.
    """
    cr = max_crowd if max_crowd > w.crowd_threshold else 0.0
    return w.beta1 * math.exp(w.beta2 * satisfied_fraction + w.beta3 * stock_fraction) - cr


def is_terminal(t: float, fleet: FleetState, horizon_end: float) -> bool:
    return t >= horizon_end or fleet.exhausted()
