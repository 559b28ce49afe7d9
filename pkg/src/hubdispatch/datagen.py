"""Synthetic passenger groups in the station-mobility schema, and ingestion of real ones.

Each train's passengers arrive along a logistic accumulation curve that ends at
the train's departure; disrupted passengers then wait until a shifted
log-normal tolerance runs out. Background (route 0) passengers simply leave
with their train.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mobility import PassengerGroup
from .network import Network, TrainEntry

# arrival steepness (minutes), tolerance log-spread
ARCHETYPES: dict[str, tuple[float, float]] = {
    "fast-slow": (8.0, 0.6),
    "bell": (15.0, 0.4),
    "slow-fast": (30.0, 0.25),
    "simultaneous": (4.0, 0.1),
}

GROUP_COLUMNS = ["enter_time", "planned_depart", "leave_time", "target_train", "route", "demand"]


@dataclass
class DemandProfile:
    train: str
    demand: int
    midpoint: float = 40.0  # minutes before departure where half the passengers are in
    steepness: float = 15.0
    window: float = 180.0  # accumulation starts this long before departure
    tolerance_mean: float = 150.0  # after planned departure
    tolerance_shift: float = 60.0
    tolerance_spread: float = 0.4
    archetype: str = "bell"

    def __post_init__(self):
        if self.demand < 0:
            raise ValueError(f"{self.train}: negative demand")
        if not self.tolerance_mean > self.tolerance_shift >= 0:
            raise ValueError(f"{self.train}: tolerance mean must exceed its shift")
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"{self.train}: unknown archetype {self.archetype}")
        if self.steepness <= 0 or self.window <= 0:
            raise ValueError(f"{self.train}: steepness and window must be positive")

    @classmethod
    def preset(cls, train: str, demand: int, archetype: str, **kw) -> "DemandProfile":
        steep, spread = ARCHETYPES[archetype]
        return cls(train, demand, steepness=steep, tolerance_spread=spread, archetype=archetype, **kw)

    def scaled(self, factor: float) -> "DemandProfile":
        d = asdict(self)
        d["demand"] = int(round(self.demand * factor))
        return DemandProfile(**d)


def accumulation_cdf(x, depart: float, p: DemandProfile):
    """Share of a train's passengers already in the station at time x."""
    m = depart - p.midpoint
    lo, hi = depart - p.window, depart
    f = lambda v: 1.0 / (1.0 + np.exp(-(np.asarray(v, dtype=float) - m) / p.steepness))
    flo, fhi = f(lo), f(hi)
    return np.clip((f(np.clip(x, lo, hi)) - flo) / (fhi - flo), 0.0, 1.0)


def sample_enter_times(rng: np.random.Generator, n: int, depart: float, p: DemandProfile) -> np.ndarray:
    m = depart - p.midpoint
    f = lambda v: 1.0 / (1.0 + math.exp(-(v - m) / p.steepness))
    u = rng.uniform(f(depart - p.window), f(depart), size=n)
    return m + p.steepness * np.log(u / (1.0 - u))


def sample_tolerance(rng: np.random.Generator, n: int, p: DemandProfile) -> np.ndarray:
    excess = p.tolerance_mean - p.tolerance_shift
    mu = math.log(excess) - p.tolerance_spread**2 / 2
    return p.tolerance_shift + rng.lognormal(mu, p.tolerance_spread, size=n)


def partition_cohorts(rng: np.random.Generator, total: int, lo: int = 5, hi: int = 40) -> list[int]:
    """Split ``total`` passengers into cohorts of lo..hi."""
    if total == 0:
        return []
    if total < lo:
        raise ValueError(f"demand {total} cannot be split into cohorts of {lo}..{hi}")
    sizes, rest = [], total
    while rest > hi:
        k = int(rng.integers(lo, min(hi, rest - lo) + 1))
        sizes.append(k)
        rest -= k
    sizes.append(rest)
    return sizes


def integer_shares(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of ``total * weights / sum(weights)``."""
    raw = weights / weights.sum() * total
    base = np.floor(raw).astype(int)
    short = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def disrupted_profiles(
    network: Network,
    total: int,
    seed: int,
    sigma: float = 0.5,
    archetypes: Sequence[str] | None = None,
    min_demand: int = 5,
    peak_gain: float = 0.0,
    peak_time: float = 20 * 60,
    peak_width: float = 90.0,
    **kw,
) -> list[DemandProfile]:
    """Per-train profiles for every disrupted train, demand summing to ``total``.

    Shares are seeded log-normal, tilted towards trains departing near
    ``peak_time`` by a factor up to ``1 + peak_gain``. The archetype of each
    train is drawn from ``archetypes`` (all four by default).
    """
    trains = [t for t in network.timetable if t.disrupted]
    rng = np.random.default_rng(seed)
    weights = rng.lognormal(0.0, sigma, size=len(trains))
    dep = np.array([t.depart_time for t in trains])
    weights *= 1.0 + peak_gain * np.exp(-0.5 * ((dep - peak_time) / peak_width) ** 2)
    shares = integer_shares(weights, total - min_demand * len(trains)) + min_demand
    kinds = list(archetypes or ARCHETYPES)
    picks = rng.integers(len(kinds), size=len(trains))
    return [DemandProfile.preset(t.code, int(d), kinds[k], **kw) for t, d, k in zip(trains, shares, picks)]


def background_profiles(network: Network, base: float, peak: float, peak_time: float, peak_width: float) -> list[DemandProfile]:
    """Route-0 trains: a flat level plus one Gaussian rush-hour bump (passengers per train)."""
    out = []
    for t in network.timetable:
        if t.route != 0:
            continue
        d = base + peak * math.exp(-0.5 * ((t.depart_time - peak_time) / peak_width) ** 2)
        out.append(DemandProfile.preset(t.code, int(round(d)), "bell", window=120.0, midpoint=30.0))
    return out


def generate(
    timetable: Iterable[TrainEntry],
    profiles: Sequence[DemandProfile],
    seed: int,
    cohort: tuple[int, int] = (5, 40),
) -> list[PassengerGroup]:
    """Draw passenger groups for every profiled train, in timetable order."""
    by_code = {p.train: p for p in profiles}
    rng = np.random.default_rng(seed)
    groups: list[PassengerGroup] = []
    for tr in timetable:
        p = by_code.get(tr.code)
        if p is None:
            if tr.disrupted:
                raise ValueError(f"no demand profile for disrupted train {tr.code}")
            continue
        sizes = partition_cohorts(rng, p.demand, *cohort)
        if not sizes:
            continue
        enter = sample_enter_times(rng, len(sizes), tr.depart_time, p)
        if tr.disrupted:
            leave = tr.depart_time + sample_tolerance(rng, len(sizes), p)
        else:
            leave = np.full(len(sizes), tr.depart_time)
        for k, n in enumerate(sizes):
            groups.append(
                PassengerGroup(float(enter[k]), tr.depart_time, float(leave[k]), tr.code, tr.route if tr.disrupted else 0, int(n))
            )
    return groups


def write_groups(path: str | Path, groups: Iterable[PassengerGroup]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GROUP_COLUMNS)
        for g in groups:
            w.writerow([repr(g.enter_time), repr(g.planned_depart), repr(g.leave_time), g.target_train, g.route, g.demand])


class GroupFileError(ValueError):
    pass


def ingest(path: str | Path, network: Network | None = None) -> list[PassengerGroup]:
    """Read and validate a passenger-group file; errors name the offending line."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != GROUP_COLUMNS:
            raise GroupFileError(f"{path}:1: expected columns {','.join(GROUP_COLUMNS)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(GROUP_COLUMNS):
                raise GroupFileError(f"{path}:{lineno}: expected {len(GROUP_COLUMNS)} fields, got {len(row)}")
            try:
                t_a, t_dep, t_l = float(row[0]), float(row[1]), float(row[2])
                code, route, demand = row[3], int(row[4]), int(row[5])
            except ValueError as exc:
                raise GroupFileError(f"{path}:{lineno}: {exc}") from None
            if not t_a <= t_dep <= t_l:
                raise GroupFileError(f"{path}:{lineno}: times out of order (enter {t_a}, depart {t_dep}, leave {t_l})")
            if demand <= 0:
                raise GroupFileError(f"{path}:{lineno}: demand must be positive")
            if network is not None:
                tr = network.trains.get(code)
                if tr is None:
                    raise GroupFileError(f"{path}:{lineno}: unknown train code {code}")
                if (tr.route if tr.disrupted else 0) != route:
                    raise GroupFileError(f"{path}:{lineno}: train {code} runs on route {tr.route}, file says {route}")
            out.append(PassengerGroup(t_a, t_dep, t_l, code, route, demand))
    return out
