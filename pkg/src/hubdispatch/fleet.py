"""Rolling-stock pools and per-route headway clocks."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

from .network import Network


@dataclass
class RestrictedUnit:
    arrival_time: float
    route: int
    capacity: float
    used: bool = False
    code: str = ""


@dataclass
class FleetConfig:
    flexible: int | None = None  # None: trains originating at the target station
    flexible_capacity: float = 250.0
    restricted_capacity: float = 200.0
    cutoff: float = 17 * 60  # passing trains departing before this are restricted units
    initial_headway: float = 10.0
    step: float = 5.0


@dataclass
class FleetState:
    flexible: int
    flexible_capacity: float
    restricted: list[RestrictedUnit]
    headways: dict[int, float]
    step: float = 5.0
    initial: int = field(init=False)

    def __post_init__(self):
        if self.flexible < 0:
            raise ValueError("negative flexible count")
        self.initial = self.flexible + len(self.restricted)

    @classmethod
    def from_network(cls, network: Network, cfg: FleetConfig | None = None) -> "FleetState":
        cfg = cfg or FleetConfig()
        disrupted = [t for t in network.timetable if t.disrupted]
        n_flex = cfg.flexible if cfg.flexible is not None else sum(t.originates for t in disrupted)
        restricted = [
            RestrictedUnit(t.arrive_time, t.route, cfg.restricted_capacity * network.downstream_share(t.route), code=t.code)
            for t in disrupted
            if not t.originates and t.depart_time < cfg.cutoff
        ]
        heads = {r: cfg.initial_headway for r in network.disrupted_routes}
        return cls(n_flex, cfg.flexible_capacity, restricted, heads, cfg.step)

    def availability(self, t: float) -> tuple[int, int]:
        """(units dispatchable now, restricted units still to arrive)."""
        ready = sum(1 for u in self.restricted if not u.used and u.arrival_time <= t)
        later = sum(1 for u in self.restricted if not u.used and u.arrival_time > t)
        return self.flexible + ready, later

    def allocate(self, t: float, route: int) -> float | None:
        """Take a unit for ``route``; returns its capacity, or None when refused.

        An arrived restricted unit of the same route is used before the
        flexible pool is touched.
        """
        for u in self.restricted:
            if not u.used and u.route == route and u.arrival_time <= t:
                u.used = True
                return u.capacity
        if self.flexible > 0:
            self.flexible -= 1
            return self.flexible_capacity
        return None

    def tick_headways(self, dispatched_route: int | None = None) -> None:
        for r in self.headways:
            self.headways[r] = 0.0 if r == dispatched_route else self.headways[r] + self.step

    def headway_vector(self, routes: Sequence[int]) -> list[float]:
        return [self.headways[r] for r in routes]

    @property
    def used(self) -> int:
        return self.initial - self.flexible - sum(1 for u in self.restricted if not u.used)

    def exhausted(self) -> bool:
        return self.flexible == 0 and all(u.used for u in self.restricted)

    def copy(self) -> "FleetState":
        new = copy.copy(self)
        new.restricted = [copy.copy(u) for u in self.restricted]
        new.headways = dict(self.headways)
        return new
