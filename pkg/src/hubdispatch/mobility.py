"""Passenger side of the station: group lifecycle, gravity split, FIFO boarding, observed state.

Groups are held column-wise in numpy arrays sorted by entering time, so that
array order is boarding (FIFO) order. Disrupted groups carry a row of remaining
demand over the flat OD slots of the network; background (route 0) groups only
add to crowding and leave at their planned departure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .network import Network, StopSchedule


@dataclass
class PassengerGroup:
    enter_time: float
    planned_depart: float
    leave_time: float
    target_train: str
    route: int
    demand: int
    in_station: bool = False
    met_fraction: float = 0.0
    denied: bool = False
    per_station_remaining: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.demand <= 0:
            raise ValueError("group demand must be positive")
        if not 0.0 <= self.met_fraction <= 1.0:
            raise ValueError("met_fraction outside [0, 1]")
        if self.route != 0 and not self.enter_time <= self.planned_depart <= self.leave_time:
            raise ValueError(f"group for {self.target_train}: need enter <= depart <= leave")
        if self.route == 0 and self.enter_time > self.planned_depart:
            raise ValueError(f"group for {self.target_train}: enters after departure")

    @property
    def remaining(self) -> float:
        return self.demand * (1.0 - self.met_fraction)


@dataclass(frozen=True)
class StateVector1:
    crowdedness: float
    disrupted_demand: float
    flexible_stock: int
    potential_stock: int
    clock: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.crowdedness, self.disrupted_demand, self.flexible_stock, self.potential_stock, self.clock], dtype=float
        )


@dataclass(frozen=True)
class StateVector2:
    od_demand: np.ndarray
    headways: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.od_demand, self.headways]).astype(float)

    def __len__(self):
        return len(self.od_demand) + len(self.headways)


def split_demand(demand: float, stops: Sequence[str], attractiveness: Mapping[str, float], integer: bool = False) -> dict[str, float]:
    """Gravity split of one group's demand over the stations it travels to.

    With ``integer=True`` shares are floored and the last stop absorbs the
    remainder so that the parts still add up to ``demand``.
    """
    if len(stops) == 0:
        raise ValueError("empty stop set")
    weights = np.array([attractiveness[s] for s in stops], dtype=float)
    if np.any(weights <= 0):
        raise ValueError("attractiveness must be positive")
    total = weights.sum()
    if not total > 0:
        raise ValueError("zero total attractiveness")
    shares = weights / total * demand
    if integer:
        shares = np.floor(shares)
    # last element absorbs rounding
    shares[-1] = demand - shares[:-1].sum()
    return dict(zip(stops, shares.tolist()))


@dataclass
class MobilityEvents:
    arrived: float = 0.0
    denied: float = 0.0
    departed: float = 0.0


@dataclass
class ServiceResult:
    satisfied: float
    utilization: float
    delay: float
    served: np.ndarray  # per disrupted group, FIFO order
    by_train: dict[str, float]


class Mobility:
    """All passenger groups of one scenario, advanced one time step at a time."""

    def __init__(self, network: Network, groups: Sequence[PassengerGroup]):
        self.network = network
        self._input = list(groups)
        n_od = network.n_od
        slot_of = network.od_index

        dis = [(i, g) for i, g in enumerate(groups) if g.route != 0]
        bg = [(i, g) for i, g in enumerate(groups) if g.route == 0]
        dis.sort(key=lambda p: (p[1].enter_time, p[0]))
        bg.sort(key=lambda p: (p[1].enter_time, p[0]))
        self._dis_index = np.array([i for i, _ in dis], dtype=int)
        self._bg_index = np.array([i for i, _ in bg], dtype=int)

        # disrupted groups
        self.t_enter = np.array([g.enter_time for _, g in dis], dtype=float)
        self.t_depart = np.array([g.planned_depart for _, g in dis], dtype=float)
        self.t_leave = np.array([g.leave_time for _, g in dis], dtype=float)
        self.route = np.array([g.route for _, g in dis], dtype=int)
        self.demand = np.array([g.demand for _, g in dis], dtype=float)
        self.met = np.array([g.met_fraction for _, g in dis], dtype=float)
        self.train = [g.target_train for _, g in dis]
        self.rem = np.zeros((len(dis), n_od))
        for row, (_, g) in enumerate(dis):
            if g.target_train not in network.trains:
                raise ValueError(f"unknown train code {g.target_train}")
            tr = network.trains[g.target_train]
            if tr.route != g.route:
                raise ValueError(f"group for {g.target_train}: route {g.route} != timetable route {tr.route}")
            stops = network.train_stops(g.target_train)
            split = split_demand(g.demand, stops, network.attractiveness(stops))
            for st, share in split.items():
                self.rem[row, slot_of[g.route, st]] = share * (1.0 - g.met_fraction)
        self.served = self.demand * self.met
        self.denied_amount = np.zeros(len(dis))
        self.denied = np.zeros(len(dis), dtype=bool)
        self.entered = np.zeros(len(dis), dtype=bool)
        self.done = np.zeros(len(dis), dtype=bool)  # fully served and gone

        # background groups
        self.bg_enter = np.array([g.enter_time for _, g in bg], dtype=float)
        self.bg_depart = np.array([g.planned_depart for _, g in bg], dtype=float)
        self.bg_demand = np.array([g.remaining for _, g in bg], dtype=float)
        self.bg_entered = np.zeros(len(bg), dtype=bool)
        self.bg_departed = np.zeros(len(bg), dtype=bool)

        full = np.zeros(n_od)
        for (rid, st), k in slot_of.items():
            full[k] = network.full_schedule(rid).offset_of(st)
        self.s3_offset = full
        self.total_demand = float(self.demand.sum())
        self.t: float | None = None

    # -- lifecycle ---------------------------------------------------------

    def remaining(self) -> np.ndarray:
        return self.rem.sum(axis=1)

    @property
    def in_station(self) -> np.ndarray:
        return self.entered & ~self.denied & ~self.done

    @property
    def bg_in_station(self) -> np.ndarray:
        return self.bg_entered & ~self.bg_departed

    def advance_clock(self, t: float) -> MobilityEvents:
        """Move the clock to ``t``: arrivals, abandonment past the leave time, background departures."""
        if self.t is not None and t <= self.t:
            raise ValueError(f"clock must increase (at {self.t}, asked {t})")
        ev = MobilityEvents()
        newly = ~self.entered & (self.t_enter <= t)
        ev.arrived = float(self.demand[newly].sum())
        self.entered |= newly

        leaving = self.entered & ~self.denied & ~self.done & (t > self.t_leave)
        if leaving.any():
            rest = self.remaining()
            gone = leaving & (rest > 0)
            ev.denied = float(rest[gone].sum())
            self.denied_amount[gone] += rest[gone]
            self.rem[gone] = 0.0
            self.denied |= gone
            self.done |= leaving & ~gone

        bg_new = ~self.bg_entered & (self.bg_enter <= t)
        ev.arrived += float(self.bg_demand[bg_new].sum())
        self.bg_entered |= bg_new
        bg_gone = self.bg_entered & ~self.bg_departed & (t >= self.bg_depart)
        ev.departed = float(self.bg_demand[bg_gone].sum())
        self.bg_departed |= bg_gone
        self.t = t
        return ev

    # -- observation -------------------------------------------------------

    def disrupted_demand(self) -> float:
        return float(self.rem[self.in_station].sum())

    def background_crowd(self) -> float:
        return float(self.bg_demand[self.bg_in_station].sum())

    def crowdedness(self) -> float:
        return self.disrupted_demand() + self.background_crowd()

    def od_demand(self) -> np.ndarray:
        return self.rem[self.in_station].sum(axis=0)

    # -- service -----------------------------------------------------------

    def serve_fifo(self, schedule: StopSchedule, capacity: float, dispatch_time: float | None = None) -> ServiceResult:
        """Board in-station groups of the schedule's route, earliest entry first."""
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        t = self.t if dispatch_time is None else dispatch_time
        net = self.network
        mask = np.zeros(net.n_od, dtype=bool)
        tier_off = np.zeros(net.n_od)
        for st, off in zip(schedule.downstream, schedule.offsets[1:]):
            k = net.od_index[schedule.route, st]
            mask[k] = True
            tier_off[k] = off

        served = np.zeros(len(self.demand))
        cand = np.flatnonzero(self.in_station & (self.route == schedule.route))
        if len(cand) == 0 or capacity == 0:
            return ServiceResult(0.0, 0.0, 0.0, served, {})
        sub = self.rem[np.ix_(cand, mask)]
        serveable = sub.sum(axis=1)
        before = np.cumsum(serveable) - serveable
        take = np.clip(capacity - before, 0.0, serveable)
        frac = np.divide(take, serveable, out=np.zeros_like(take), where=serveable > 0)
        per_slot = sub * frac[:, None]
        full = frac >= 1.0
        new = sub - per_slot
        new[full] = 0.0
        self.rem[np.ix_(cand, mask)] = new
        served[cand] = take
        self.served[cand] += take
        self.met[cand] = np.minimum(1.0, self.met[cand] + take / self.demand[cand])

        arr_new = t + tier_off[mask]
        arr_old = self.t_depart[cand][:, None] + self.s3_offset[mask][None, :]
        delay = float((per_slot * np.maximum(0.0, arr_new[None, :] - arr_old)).sum())
        satisfied = float(take.sum())
        by_train: dict[str, float] = {}
        for row, amount in zip(cand, take):
            if amount > 0:
                by_train[self.train[row]] = by_train.get(self.train[row], 0.0) + float(amount)
        util = satisfied / capacity if capacity > 0 else 0.0
        return ServiceResult(satisfied, util, delay, served, by_train)

    # -- views -------------------------------------------------------------

    def groups(self) -> list[PassengerGroup]:
        """Current state as PassengerGroup records, in input order."""
        out: list[PassengerGroup | None] = [None] * len(self._input)
        slots = self.network.od_slots
        for row, i in enumerate(self._dis_index):
            g = self._input[i]
            remaining = {slots[k][1]: float(self.rem[row, k]) for k in np.flatnonzero(self.rem[row])}
            out[i] = PassengerGroup(
                g.enter_time, g.planned_depart, g.leave_time, g.target_train, g.route, g.demand,
                bool(self.in_station[row]), float(self.met[row]), bool(self.denied[row]), remaining,
            )
        for row, i in enumerate(self._bg_index):
            g = self._input[i]
            out[i] = PassengerGroup(
                g.enter_time, g.planned_depart, g.leave_time, g.target_train, g.route, g.demand,
                bool(self.bg_in_station[row]), g.met_fraction, False, {},
            )
        return out  # type: ignore[return-value]

    _MUTABLE = ("met", "rem", "served", "denied_amount", "denied", "entered", "done", "bg_entered", "bg_departed")

    def copy(self) -> "Mobility":
        """Independent copy of the dynamic state; static arrays are shared."""
        new = object.__new__(Mobility)
        new.__dict__.update(self.__dict__)
        for name in self._MUTABLE:
            setattr(new, name, getattr(self, name).copy())
        return new


def observe_state1(mob: Mobility, fleet, t: float) -> StateVector1:
    flexible, potential = fleet.availability(t)
    return StateVector1(mob.crowdedness(), mob.disrupted_demand(), flexible, potential, t)


def observe_state2(mob: Mobility, fleet) -> StateVector2:
    heads = np.array(fleet.headway_vector(mob.network.disrupted_routes), dtype=float)
    return StateVector2(mob.od_demand(), heads)
