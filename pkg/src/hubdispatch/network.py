"""Static railway instance: stations, routes, the disrupted timetable and stop schedules.

Stop schedules are derived per route from how often each station is served by
that route's original trains. Offsets are kept in seconds while they are being
built so that detour inflation of whole-minute timetables stays exact.
"""
from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

TIERS = ("S1", "S2", "S3")


def parse_clock(text: str) -> float:
    """'HH:MM[:SS]' -> minutes. Hours may exceed 23 (durations)."""
    parts = [int(p) for p in text.strip().split(":")]
    if len(parts) == 2:
        parts.append(0)
    if len(parts) != 3 or any(p < 0 for p in parts) or parts[1] > 59 or parts[2] > 59:
        raise ValueError(f"bad clock value {text!r}")
    h, m, s = parts
    return h * 60 + m + s / 60


def format_clock(minutes: float) -> str:
    total = int(round(minutes * 60))
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return f"{h}:{m:02d}:{s:02d}"


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    attractiveness: float
    in_disrupted_area: bool = False

    def __post_init__(self):
        if not self.attractiveness > 0:
            raise ValueError(f"station {self.id}: attractiveness must be > 0")


@dataclass(frozen=True)
class Route:
    """A physical route through the target station.

    ``ordered_stations`` is the full route, upstream stations included.
    ``disrupted_segment`` is an inclusive (lo, hi) pair of indices into it;
    running time between those stations is stretched by ``detour_factor``.
    """

    id: int
    ordered_stations: tuple[str, ...]
    disrupted_segment: tuple[int, int] | None = None
    detour_factor: float = 1.5

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("route ids are non-negative")
        if self.detour_factor < 1:
            raise ValueError(f"route {self.id}: detour_factor must be >= 1")
        if self.disrupted_segment is not None:
            lo, hi = self.disrupted_segment
            if not 0 <= lo <= hi < len(self.ordered_stations):
                raise ValueError(f"route {self.id}: invalid disrupted segment {self.disrupted_segment}")
        if len(set(self.ordered_stations)) != len(self.ordered_stations):
            raise ValueError(f"route {self.id}: repeated station")

    def index(self, station: str) -> int:
        return self.ordered_stations.index(station)


@dataclass(frozen=True)
class TrainEntry:
    code: str
    arrive_time: float | None  # None: originates at the target station
    depart_time: float
    route: int
    disrupted: bool

    def __post_init__(self):
        if self.arrive_time is not None and not self.arrive_time < self.depart_time:
            raise ValueError(f"train {self.code}: arrival must precede departure")
        if self.disrupted and self.route == 0:
            raise ValueError(f"train {self.code}: disrupted trains cannot use route 0")

    @property
    def originates(self) -> bool:
        return self.arrive_time is None


@dataclass(frozen=True)
class StopSchedule:
    route: int
    tier: str
    stops: tuple[str, ...]  # target station first
    offsets: tuple[float, ...]  # minutes after departure from the target station

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier}")
        if len(self.stops) != len(self.offsets):
            raise ValueError("stops and offsets differ in length")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError(f"route {self.route} {self.tier}: offsets not strictly increasing")

    @property
    def downstream(self) -> tuple[str, ...]:
        return self.stops[1:]

    def offset_of(self, station: str) -> float:
        return self.offsets[self.stops.index(station)]


def sort_timetable(timetable: Iterable[TrainEntry]) -> list[TrainEntry]:
    # same departure minute: route id, then code
    return sorted(timetable, key=lambda tr: (tr.depart_time, tr.route, tr.code))


def _tier_sets(counts: Counter, n_trains: int, c1: int, c2: int) -> dict[str, set[str]]:
    # clip thresholds so that S1 is never stricter than "served by every train"
    k1 = min(c1, n_trains - 1)
    k2 = min(c2, n_trains - 2)
    s3 = set(counts)
    top = max(counts.values(), default=0)
    # a tier nobody qualifies for falls back to the most-served stations
    pick = lambda k: {s for s, n in counts.items() if n > k} or {s for s, n in counts.items() if n == top}
    sets = {"S3": s3}
    if n_trains >= 2:
        sets["S1"] = pick(k1)
    if n_trains >= 3:
        sets["S2"] = pick(k2)
    return sets


def _segment_factor(route: Route, i: int, j: int) -> float:
    """Running-time multiplier for travel between route indices i < j."""
    if route.disrupted_segment is None or route.detour_factor == 1:
        return 1.0
    lo, hi = route.disrupted_segment
    overlap = max(0, min(j, hi) - max(i, lo))
    if overlap == 0:
        return 1.0
    return 1.0 + (route.detour_factor - 1.0) * overlap / (j - i)


def derive_stop_schedules(
    timetable: Sequence[TrainEntry],
    routes: Sequence[Route],
    original_stops: Mapping[str, Sequence[tuple[str, float]]],
    target: str,
    c1: int = 3,
    c2: int = 2,
) -> dict[int, list[StopSchedule]]:
    """Build the S1/S2/S3 stop schedules of every disrupted route.

    ``original_stops`` maps a train code to its downstream stops as
    ``(station, minutes after leaving the target station)``, in travel order.
    A route with n trains yields min(n, 3) schedules: S3 alone for one train,
    S1 and S3 for two. Segment running times are averaged over the trains whose
    own stop pattern belongs to the tier being built, widening to the other
    trains only when none of those run the segment.
    """
    if c1 <= c2:
        raise ValueError("need c1 > c2")
    by_id = {r.id: r for r in routes}
    per_route: dict[int, list[TrainEntry]] = defaultdict(list)
    for tr in timetable:
        if tr.disrupted:
            per_route[tr.route].append(tr)

    out: dict[int, list[StopSchedule]] = {}
    for rid in sorted(r.id for r in routes if r.id != 0):
        route = by_id[rid]
        trains = per_route.get(rid, [])
        if not trains:
            log.warning("route %d has no disrupted trains; omitted", rid)
            continue
        if target not in route.ordered_stations:
            raise ValueError(f"route {rid} does not pass the target station {target}")
        origin = route.index(target)

        # seconds after departure, origin included at 0
        patterns: dict[str, dict[str, float]] = {}
        for tr in trains:
            stops = original_stops.get(tr.code)
            if not stops:
                raise ValueError(f"train {tr.code} has no original stops")
            times = {target: 0.0}
            last_idx, last_t = origin, 0.0
            for st, minutes in stops:
                if st not in route.ordered_stations:
                    raise ValueError(f"train {tr.code}: stop {st} is not on route {rid}")
                idx = route.index(st)
                sec = round(minutes * 60, 6)
                if idx <= last_idx or sec <= last_t:
                    raise ValueError(f"train {tr.code}: non-monotone stops or travel times at {st}")
                times[st] = sec
                last_idx, last_t = idx, sec
            patterns[tr.code] = times

        counts = Counter(st for times in patterns.values() for st in times if st != target)
        sets = _tier_sets(counts, len(trains), c1, c2)
        tiers = [t for t in TIERS if t in sets]
        for t in tiers:
            if not sets[t]:
                raise ValueError(f"route {rid}: tier {t} is empty")

        def assigned(times: dict[str, float]) -> str:
            stops = set(times) - {target}
            return next(t for t in tiers if stops <= sets[t])

        home = {code: assigned(times) for code, times in patterns.items()}
        hops = [
            (t1 - t0) / (route.index(s1) - route.index(s0))
            for times in patterns.values()
            for (s0, t0), (s1, t1) in zip(list(times.items()), list(times.items())[1:])
        ]
        pace = sum(hops) / len(hops)

        schedules = []
        for k, tier in enumerate(tiers):
            order = [tier] + tiers[k + 1:] + tiers[:k][::-1]
            pools = [[patterns[c] for c in sorted(patterns) if home[c] == t] for t in order]
            stops = [target] + sorted(sets[tier], key=route.index)
            offsets = [0.0]
            for a, b in zip(stops, stops[1:]):
                run = None
                for pool in pools:
                    runs = [p[b] - p[a] for p in pool if a in p and b in p]
                    if runs:
                        run = sum(runs) / len(runs)
                        break
                if run is None:
                    # nobody runs a->b directly: fall back on mean arrival offsets
                    mean = lambda s: sum(p[s] for p in patterns.values() if s in p) / counts.get(s, 1)
                    run = (mean(b) if b != target else 0.0) - (mean(a) if a != target else 0.0)
                    if run <= 0:
                        # inconsistent means: average pace per route hop instead
                        run = pace * (route.index(b) - route.index(a))
                offsets.append(offsets[-1] + run * _segment_factor(route, route.index(a), route.index(b)))
            schedules.append(StopSchedule(rid, tier, tuple(stops), tuple(o / 60 for o in offsets)))
        out[rid] = schedules
    return out


def arrival_time(schedule: StopSchedule, dispatch_time: float) -> dict[str, float]:
    return {st: dispatch_time + off for st, off in zip(schedule.stops, schedule.offsets)}


@dataclass
class Network:
    """The static instance shared read-only by every episode."""

    target: str
    stations: dict[str, Station]
    routes: dict[int, Route]
    timetable: list[TrainEntry]
    original_stops: dict[str, list[tuple[str, float]]]
    c1: int = 3
    c2: int = 2
    schedules: dict[int, list[StopSchedule]] = field(init=False)

    def __post_init__(self):
        self.timetable = sort_timetable(self.timetable)
        codes = [t.code for t in self.timetable]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate train codes in timetable")
        for tr in self.timetable:
            if tr.route not in self.routes:
                raise ValueError(f"train {tr.code}: unknown route {tr.route}")
        for r in self.routes.values():
            for st in r.ordered_stations:
                if st not in self.stations:
                    raise ValueError(f"route {r.id}: unknown station {st}")
        self.schedules = derive_stop_schedules(
            self.timetable, list(self.routes.values()), self.original_stops, self.target, self.c1, self.c2
        )
        self.trains = {t.code: t for t in self.timetable}
        # plan action k -> (route, tier index)
        self.plans: list[StopSchedule] = [s for rid in sorted(self.schedules) for s in self.schedules[rid]]
        self.disrupted_routes = sorted(self.schedules)
        # one OD slot per (route, downstream station of the all-stops schedule)
        self.od_slots: list[tuple[int, str]] = []
        self.od_block: dict[int, slice] = {}
        for rid in self.disrupted_routes:
            full = self.schedules[rid][-1]
            start = len(self.od_slots)
            self.od_slots.extend((rid, st) for st in full.downstream)
            self.od_block[rid] = slice(start, len(self.od_slots))
        self.od_index = {slot: i for i, slot in enumerate(self.od_slots)}

    @property
    def n_plans(self) -> int:
        return len(self.plans)

    @property
    def n_od(self) -> int:
        return len(self.od_slots)

    def full_schedule(self, route: int) -> StopSchedule:
        return self.schedules[route][-1]

    def train_stops(self, code: str) -> list[str]:
        return [st for st, _ in self.original_stops[code]]

    def attractiveness(self, stations: Iterable[str]) -> dict[str, float]:
        return {s: self.stations[s].attractiveness for s in stations}

    def downstream_share(self, route: int) -> float:
        """Share of the route's total attractiveness lying beyond the target station."""
        r = self.routes[route]
        origin = r.index(self.target)
        alpha = [self.stations[s].attractiveness for s in r.ordered_stations]
        return sum(alpha[origin + 1:]) / sum(alpha)

    @classmethod
    def load(cls, directory: str | Path, c1: int = 3, c2: int = 2) -> "Network":
        d = Path(directory)
        stations = read_stations(d / "stations.csv")
        routes = read_routes(d / "routes.csv")
        timetable = read_timetable(d / "timetable.csv")
        stops = read_original_stops(d / "stops.csv")
        target = (d / "target.txt").read_text().strip()
        return cls(target, stations, routes, timetable, stops, c1, c2)


# --- file formats -----------------------------------------------------------


def read_stations(path: str | Path) -> dict[str, Station]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for row in rows:
        st = Station(row["id"], row["name"], float(row["attractiveness"]), row["in_disrupted_area"] == "1")
        if st.id in out:
            raise ValueError(f"duplicate station id {st.id}")
        out[st.id] = st
    return out


def write_stations(path: str | Path, stations: Iterable[Station]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "name", "attractiveness", "in_disrupted_area"])
        for s in stations:
            w.writerow([s.id, s.name, repr(s.attractiveness), int(s.in_disrupted_area)])


def read_routes(path: str | Path) -> dict[int, Route]:
    """Columns: route, stations ('|'-separated), seg_lo, seg_hi, detour_factor."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            seg = None
            if row["seg_lo"] != "":
                seg = (int(row["seg_lo"]), int(row["seg_hi"]))
            r = Route(int(row["route"]), tuple(row["stations"].split("|")), seg, float(row["detour_factor"]))
            out[r.id] = r
    return out


def write_routes(path: str | Path, routes: Iterable[Route]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["route", "stations", "seg_lo", "seg_hi", "detour_factor"])
        for r in routes:
            lo, hi = r.disrupted_segment if r.disrupted_segment else ("", "")
            w.writerow([r.id, "|".join(r.ordered_stations), lo, hi, r.detour_factor])


def read_timetable(path: str | Path) -> list[TrainEntry]:
    """Columns: code, arrive_time (empty if originating), depart_time, route, disrupted."""
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                arr = row["arrive_time"].strip()
                out.append(
                    TrainEntry(
                        row["code"].strip(),
                        parse_clock(arr) if arr else None,
                        parse_clock(row["depart_time"]),
                        int(row["route"]),
                        row["disrupted"].strip() == "1",
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_timetable(path: str | Path, timetable: Iterable[TrainEntry]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "arrive_time", "depart_time", "route", "disrupted"])
        for t in timetable:
            arr = "" if t.arrive_time is None else format_clock(t.arrive_time)
            w.writerow([t.code, arr, format_clock(t.depart_time), t.route, int(t.disrupted)])


def read_original_stops(path: str | Path) -> dict[str, list[tuple[str, float]]]:
    """Columns: code, station, elapsed (H:MM:SS after leaving the target station)."""
    out: dict[str, list[tuple[str, float]]] = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["code"]].append((row["station"], parse_clock(row["elapsed"])))
    return dict(out)


def write_original_stops(path: str | Path, stops: Mapping[str, Sequence[tuple[str, float]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "station", "elapsed"])
        for code, seq in stops.items():
            for st, minutes in seq:
                w.writerow([code, st, format_clock(minutes)])


def write_stop_schedules(path: str | Path, schedules: Mapping[int, Sequence[StopSchedule]]) -> None:
    """Export as (route, tier, station, offset_minutes) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["route", "tier", "station", "offset_minutes"])
        for rid in sorted(schedules):
            for s in schedules[rid]:
                for st, off in zip(s.stops, s.offsets):
                    w.writerow([rid, s.tier, st, f"{off:.4f}".rstrip("0").rstrip(".")])


def read_stop_schedules(path: str | Path) -> dict[int, list[StopSchedule]]:
    rows: dict[tuple[int, str], list[tuple[str, float]]] = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows[int(row["route"]), row["tier"]].append((row["station"], float(row["offset_minutes"])))
    out: dict[int, list[StopSchedule]] = defaultdict(list)
    for (rid, tier), seq in sorted(rows.items()):
        out[rid].append(StopSchedule(rid, tier, tuple(s for s, _ in seq), tuple(o for _, o in seq)))
    return dict(out)
