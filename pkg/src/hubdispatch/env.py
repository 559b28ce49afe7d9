"""The station environment: one disruption day advanced in fixed time steps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fleet import FleetState
from .mobility import Mobility, observe_state1, observe_state2
from .rewards import episode_reward, invalid_dispatch_reward, is_terminal, step_reward
from .scenario import Scenario


@dataclass
class StepResult:
    reward: float
    terminal: bool
    record: dict
    episode_reward: float | None = None


@dataclass
class EpisodeTotals:
    step_reward: float = 0.0
    satisfied: float = 0.0
    denied: float = 0.0
    delay: float = 0.0
    max_crowd: float = 0.0
    steps: int = 0
    by_train: dict = field(default_factory=dict)


class DisruptionEnv:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.net = scenario.network
        self.w = scenario.weights
        self._mob0 = Mobility(self.net, scenario.groups)
        self._fleet0 = FleetState.from_network(self.net, scenario.fleet)
        self.total_demand = self._mob0.total_demand
        self.fleet_size = self._fleet0.initial
        self.reset()

    def reset(self) -> None:
        self.mob = self._mob0.copy()
        self.fleet = self._fleet0.copy()
        self.t = self.sc.start
        self.mob.advance_clock(self.t)
        self.totals = EpisodeTotals()
        self.done = False
        self.final_reward: float | None = None

    def copy(self) -> "DisruptionEnv":
        new = object.__new__(DisruptionEnv)
        new.__dict__.update(self.__dict__)
        new.mob = self.mob.copy()
        new.fleet = self.fleet.copy()
        new.totals = EpisodeTotals(**{**self.totals.__dict__, "by_train": dict(self.totals.by_train)})
        return new

    def state1(self) -> np.ndarray:
        return observe_state1(self.mob, self.fleet, self.t).as_array()

    def state2(self) -> np.ndarray:
        return observe_state2(self.mob, self.fleet).as_array()

    def step(self, dispatch: int, plan: int | None = None) -> StepResult:
        """Apply one decision at the current clock, then move the clock one step on."""
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        t = self.t
        crowd_before = self.mob.crowdedness()
        rec = {"t": t, "crowd_before": crowd_before, "a1": int(dispatch), "a2": None, "route": None, "tier": None,
               "served": 0.0, "utilization": 0.0, "delay": 0.0, "capacity": None, "invalid": False,
               "headway_violation": False, "by_train": {}}
        dispatched_route = None
        service = None
        violation = False
        if dispatch:
            if plan is None or not 0 <= plan < self.net.n_plans:
                raise ValueError(f"plan index {plan} outside 0..{self.net.n_plans - 1}")
            sched = self.net.plans[plan]
            rec.update(a2=int(plan), route=sched.route, tier=sched.tier)
            violation = self.fleet.headways[sched.route] < self.w.headway_limit
            cap = self.fleet.allocate(t, sched.route)
            if cap is None:
                rec["invalid"] = True
            else:
                service = self.mob.serve_fifo(sched, cap, t)
                dispatched_route = sched.route
                rec.update(served=service.satisfied, utilization=service.utilization, delay=service.delay,
                           capacity=cap, headway_violation=violation, by_train=service.by_train)
        crowd = self.mob.crowdedness()
        self.fleet.tick_headways(dispatched_route)
        self.t = t + self.sc.step
        events = self.mob.advance_clock(self.t)

        if rec["invalid"]:
            r = invalid_dispatch_reward(events.denied, crowd, self.w)
        elif service is not None:
            r = step_reward(events.denied, crowd, True, service.satisfied, service.utilization, service.delay, violation, self.w)
        else:
            r = step_reward(events.denied, crowd, False, w=self.w)

        tot = self.totals
        tot.step_reward += r
        tot.denied += events.denied
        tot.steps += 1
        tot.max_crowd = max(tot.max_crowd, crowd)
        if service is not None:
            tot.satisfied += service.satisfied
            tot.delay += service.delay
            for k, v in service.by_train.items():
                tot.by_train[k] = tot.by_train.get(k, 0.0) + v
        rec.update(crowd=crowd, denied=events.denied, reward=r, used=self.fleet.used)

        terminal = is_terminal(self.t, self.fleet, self.sc.end)
        final = None
        if terminal:
            self.done = True
            final = episode_reward(self.satisfied_fraction, self.stock_fraction, tot.max_crowd, self.w)
            self.final_reward = final
        return StepResult(r, terminal, rec, final)

    @property
    def satisfied_fraction(self) -> float:
        return self.totals.satisfied / self.total_demand if self.total_demand > 0 else 0.0

    @property
    def stock_fraction(self) -> float:
        return self.fleet.used / self.fleet_size if self.fleet_size else 0.0

    def total_reward(self) -> float:
        return self.totals.step_reward + (self.final_reward or 0.0)

    def summary(self) -> dict:
        tot = self.totals
        return {
            "total_reward": self.total_reward(),
            "step_reward": tot.step_reward,
            "episode_reward": self.final_reward or 0.0,
            "satisfied": tot.satisfied,
            "satisfied_fraction": self.satisfied_fraction,
            "denied": tot.denied,
            "delay": tot.delay,
            "units_used": self.fleet.used,
            "units_unused": self.fleet_size - self.fleet.used,
            "steps": tot.steps,
            "max_crowd": tot.max_crowd,
        }
