"""Hand-sized scenarios small enough for exhaustive search (at most 12 steps, 3 plans, 3 units)."""
from __future__ import annotations

from dataclasses import replace

from .agent import AgentConfig, DQNConfig, EpsilonSchedule
from .fleet import FleetConfig
from .mobility import PassengerGroup
from .network import Network, Route, Station, TrainEntry
from .rewards import RewardWeights
from .scenario import Scenario

START, END, STEP = 480.0, 540.0, 5.0


def _stations(*spec: tuple[str, float]) -> dict[str, Station]:
    return {sid: Station(sid, sid.upper(), a) for sid, a in spec}


def one_train(weights: RewardWeights | None = None, demand: bool = True) -> Scenario:
    """One route, one originating train, one flexible unit."""
    stations = _stations(("t", 4.0), ("a", 1.0), ("b", 3.0))
    routes = {0: Route(0, ("t",)), 1: Route(1, ("t", "a", "b"), (1, 2), 1.5)}
    timetable = [TrainEntry("X1", None, 500.0, 1, True)]
    stops = {"X1": [("a", 20.0), ("b", 40.0)]}
    net = Network("t", stations, routes, timetable, stops)
    groups = []
    if demand:
        groups = [
            PassengerGroup(484.0, 500.0, 560.0, "X1", 1, 30),
            PassengerGroup(493.0, 500.0, 512.0, "X1", 1, 20),
            PassengerGroup(497.0, 500.0, 570.0, "X1", 1, 10),
        ]
    fleet = FleetConfig(flexible_capacity=80.0, restricted_capacity=60.0)
    return Scenario(net, groups, fleet, weights or RewardWeights(), START, END, STEP, "one-train")


def two_routes(weights: RewardWeights | None = None) -> Scenario:
    """Route 1 with an express and a stopping train (two plans), route 2 with a passing train.

    Three units: the two route-1 trains start here, the route-2 train arrives
    mid-horizon and stays pinned to its route.
    """
    stations = _stations(("t", 4.0), ("a", 2.0), ("b", 1.0), ("c", 2.0), ("u", 1.0), ("d", 3.0))
    routes = {
        0: Route(0, ("t",)),
        1: Route(1, ("t", "a", "b", "c"), (1, 3), 1.5),
        2: Route(2, ("u", "t", "d"), None, 1.0),
    }
    timetable = [
        TrainEntry("A1", None, 490.0, 1, True),
        TrainEntry("A2", None, 515.0, 1, True),
        TrainEntry("B1", 500.0, 505.0, 2, True),
        TrainEntry("N1", 500.0, 520.0, 0, False),
    ]
    stops = {
        "A1": [("a", 15.0), ("c", 45.0)],
        "A2": [("a", 16.0), ("b", 30.0), ("c", 50.0)],
        "B1": [("d", 25.0)],
    }
    net = Network("t", stations, routes, timetable, stops)
    groups = [
        PassengerGroup(481.0, 490.0, 530.0, "A1", 1, 25),
        PassengerGroup(488.0, 490.0, 505.0, "A1", 1, 15),
        PassengerGroup(497.0, 505.0, 545.0, "B1", 2, 30),
        PassengerGroup(502.0, 515.0, 560.0, "A2", 1, 35),
        PassengerGroup(511.0, 515.0, 525.0, "A2", 1, 10),
        PassengerGroup(495.0, 520.0, 520.0, "N1", 0, 40),
    ]
    fleet = FleetConfig(flexible_capacity=50.0, restricted_capacity=60.0)
    return Scenario(net, groups, fleet, weights or RewardWeights(), START, END, STEP, "two-routes")


def late_unit(weights: RewardWeights | None = None) -> Scenario:
    """A single restricted unit that only becomes available halfway through."""
    stations = _stations(("u", 1.0), ("t", 4.0), ("a", 2.0), ("b", 2.0))
    routes = {0: Route(0, ("t",)), 1: Route(1, ("u", "t", "a", "b"), None, 1.0)}
    timetable = [TrainEntry("C1", 508.0, 512.0, 1, True)]
    stops = {"C1": [("a", 18.0), ("b", 33.0)]}
    net = Network("t", stations, routes, timetable, stops)
    groups = [
        PassengerGroup(483.0, 512.0, 530.0, "C1", 1, 40),
        PassengerGroup(500.0, 512.0, 522.0, "C1", 1, 25),
        PassengerGroup(509.0, 512.0, 550.0, "C1", 1, 20),
    ]
    fleet = FleetConfig(flexible_capacity=50.0, restricted_capacity=100.0)
    return Scenario(net, groups, fleet, weights or RewardWeights(), START, END, STEP, "late-unit")


TINY = {"one-train": one_train, "two-routes": two_routes, "late-unit": late_unit}


def tiny_scenario(name: str, weights: RewardWeights | None = None) -> Scenario:
    try:
        return TINY[name](weights)
    except KeyError:
        raise ValueError(f"unknown tiny scenario {name!r}; choose from {sorted(TINY)}") from None


def without_stock_bonus(w: RewardWeights | None = None) -> RewardWeights:
    return replace(w or RewardWeights(), beta3=0.0)


# Crowd counts here are tens of passengers, so the usual threshold-based
# normalization would squash them to ~0; this scale keeps them visible.
PASSENGER_SCALE = 100.0


def agent_config() -> AgentConfig:
    """Settings for 500-episode runs: shorter exploration, more passes over each episode."""
    return AgentConfig(
        dispatch_hidden=(5,),
        plan_hidden=(16,),
        dqn=DQNConfig(lr=1e-2, epochs=10, reward_scale=1e-3),
        epsilon=EpsilonSchedule(1.0, 0.05, 0.02, 250.0),
    )


def train_agent(name: str, seed: int = 0, episodes: int = 500):
    """Train on a tiny scenario; returns the agent and its greedy (epsilon 0) total reward."""
    from . import harness
    from .env import DisruptionEnv

    env = DisruptionEnv(tiny_scenario(name))
    agent = harness.make_agent(env, agent_config(), seed)
    agent.norm.passengers = PASSENGER_SCALE
    harness.train(env, agent, episodes)
    agent.epsilon = 0.0
    value = harness.run_episode(env, harness.AgentPolicy(agent), record_steps=False).summary["total_reward"]
    return agent, value
