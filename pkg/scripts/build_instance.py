"""Write the Xi'an hub instance under src/hubdispatch/data/xian/.

Route 4 is hand-built so that its derived stop schedules come out at
16/21/26 stations with the reference offsets. The other eight routes get
seeded synthetic stop patterns; their station counts add up to 121 downstream
stations in total. Background (route 0) trains are added for normal traffic.

    python scripts/build_instance.py
"""
from pathlib import Path

import numpy as np

from hubdispatch.network import (
    Route,
    Station,
    TrainEntry,
    parse_clock,
    write_original_stops,
    write_routes,
    write_stations,
    write_timetable,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "hubdispatch" / "data" / "xian"
TARGET = "xian"

# (code, arrival or "", departure, route); arrival empty => originates at Xi'an
DISRUPTED = """\
K225 6:33 6:43 6
K1539 6:40 6:50 4
K176 7:54 8:02 1
K4915 9:28 9:38 4
Z271 10:01 10:09 1
K4025 10:17 10:27 1
K362 10:32 10:45 4
Z378 10:44 10:52 4
K4913 - 12:12 1
K247 12:27 12:47 2
K1132 12:41 13:07 1
K608 - 13:23 3
K61 - 14:16 8
K1350 - 14:36 6
K2047 - 16:06 5
Z94 - 16:45 4
K559 16:53 17:13 4
T232 - 17:26 7
K420 18:10 18:20 2
1148 18:17 18:29 9
Z20 - 19:12 7
Z106 19:25 19:33 1
T115 20:15 20:25 4
T57 20:21 20:38 7
Z163 20:34 20:44 4
Z39 20:41 20:50 4
K593 20:57 21:08 3
K2908 - 21:24 3
Z254 - 21:36 4
Z263 21:46 22:00 6
K2188 21:54 22:06 4
K127 22:05 22:28 5
Z136 22:26 22:34 6"""

# route 4 downstream stations with reference offsets per tier (minutes)
R4 = [
    # station, S1, S2, S3
    ("Weinan", 38, 38, 38),
    ("Tongguan", 104, 104, 104),
    ("Lingbao", None, None, 164),
    ("Sanmenxia West", 189, 189, 192),
    ("Sanmenxia", 214, 214, 217),
    ("Mianchi", None, None, 261),
    ("Luoyang", 320, 320, 326),
    ("Zhengzhou", 418, 418, 424),
    ("Kaifeng", None, 464, 470),
    ("Lankao", None, None, 502),
    ("Minquan", None, 516, 525),
    ("Ningling", None, 531, 540),
    ("Shangqiu", 560, 569, 569),
    ("Yucheng", None, 610, 619),
    ("Dangshan", None, 636, 645),
    ("Xuzhou", 679, 694, 703),
    ("Bengbu", 797, 813, 822),
    ("Mingguang", None, None, 846),
    ("Chuzhou North", 894, 909, 918),
    ("Nanjing", 984, 999, 1008),
    ("Zhenjiang", 1031, 1046, 1055),
    ("Changzhou", 1100, 1115, 1124),
    ("Wuxi", 1136, 1151, 1160),
    ("Suzhou", 1168, 1183, 1192),
    ("Kunshan", None, None, 1201),
    ("Shanghai", 1234, 1249, 1258),
]
R4_SEGMENT = ("Luoyang", "Shangqiu")
DETOUR = 1.5

# downstream station counts of the synthetic routes (route 4 has 26)
ROUTE_SIZES = {1: 18, 2: 14, 3: 12, 5: 10, 6: 15, 7: 12, 8: 7, 9: 7}


def slug(name):
    return name.lower().replace(" ", "_").replace("'", "")


def undetour(reference, names, seg):
    """Published (detoured) offsets -> raw seconds, shrinking in-segment runs."""
    lo, hi = names.index(seg[0]), names.index(seg[1])
    raw, prev_pub, prev_idx = [], 0, -1
    acc = 0
    for idx, (name, pub) in enumerate(zip(names, reference)):
        run = (pub - prev_pub) * 60
        # segment (prev_idx, idx) lies inside [lo, hi] exactly when prev_idx >= lo and idx <= hi
        if prev_idx >= lo and idx <= hi:
            assert run % 3 == 0
            run = run * 2 // 3
        acc += run
        raw.append(acc)
        prev_pub, prev_idx = pub, idx
    return raw


def route4(codes, rng):
    names = [r[0] for r in R4]
    stops = {}
    # one all-stops train, two S2-pattern trains, eight S1-pattern trains
    patterns = [3] + [2, 2] + [1] * 8
    shifts = [0, 0, 0, 60, -60, 120, -120, 0, 0, 30, -30]  # seconds, mean zero within each pattern
    for code, tier, shift in zip(codes, patterns, shifts):
        sel = [(n, r[tier]) for n, r in zip(names, R4) if r[tier] is not None]
        raw = undetour([p for _, p in sel], [n for n, _ in sel], R4_SEGMENT)
        # shift only the first run so the mean over the pattern is unchanged
        stops[code] = [(slug(n), (sec + shift) / 60) for (n, _), sec in zip(sel, raw)]
    return stops


def synthetic_route(rid, n_down, codes, rng):
    ids = [f"r{rid}_{k:02d}" for k in range(1, n_down + 1)]
    runs = rng.integers(18, 55, size=n_down) * 60
    base = np.cumsum(runs)
    # stations in the disrupted stretch: roughly the second quarter of the route
    lo = max(1, n_down // 4)
    hi = max(lo + 1, min(n_down - 1, n_down // 2))
    core = {0, lo, hi, n_down - 1}
    popularity = rng.uniform(0.15, 0.95, size=n_down)
    stopsets = []
    for _ in codes:
        chosen = {k for k in range(n_down) if k in core or rng.random() < popularity[k]}
        stopsets.append(chosen)
    for k in range(n_down):
        if not any(k in s for s in stopsets):
            stopsets[int(rng.integers(len(stopsets)))].add(k)
    stops = {}
    dwell = 3 * 60
    for code, chosen in zip(codes, stopsets):
        seq, made = [], 0
        for k in sorted(chosen):
            seq.append((ids[k], (int(base[k]) + dwell * made) / 60))
            made += 1
        stops[code] = seq
    return ids, (lo, hi), stops


def main():
    rng = np.random.default_rng(20210720)
    OUT.mkdir(parents=True, exist_ok=True)

    timetable = []
    by_route = {}
    for line in DISRUPTED.splitlines():
        code, arr, dep, route = line.split()
        rid = int(route)
        timetable.append(TrainEntry(code, None if arr == "-" else parse_clock(arr), parse_clock(dep), rid, True))
        by_route.setdefault(rid, []).append(code)

    stations = {TARGET: Station(TARGET, "Xi'an", 8.0)}
    routes = [Route(0, (TARGET,), None, 1.0)]
    stops = {}

    for rid in sorted(by_route):
        codes = by_route[rid]
        upstream = [f"u{rid}_{k}" for k in (1, 2)]
        for u in upstream:
            stations[u] = Station(u, f"Upstream {rid}-{u[-1]}", float(rng.lognormal(0.0, 0.5)))
        if rid == 4:
            names = [r[0] for r in R4]
            down = [slug(n) for n in names]
            big = {"Zhengzhou": 9.0, "Nanjing": 9.5, "Shanghai": 12.0, "Suzhou": 8.0, "Wuxi": 6.0, "Xuzhou": 5.0}
            lo, hi = names.index(R4_SEGMENT[0]), names.index(R4_SEGMENT[1])
            for k, n in enumerate(names):
                alpha = big.get(n, float(rng.lognormal(0.5, 0.5)))
                stations[down[k]] = Station(down[k], n, alpha, lo <= k <= hi)
            stops.update(route4(codes, rng))
            seg = (lo, hi)
        else:
            down, seg, st = synthetic_route(rid, ROUTE_SIZES[rid], codes, rng)
            for k, sid in enumerate(down):
                stations[sid] = Station(sid, f"Route {rid} stop {k + 1}", float(rng.lognormal(0.5, 0.6)), seg[0] <= k <= seg[1])
            stops.update(st)
        offset = len(upstream) + 1
        routes.append(Route(rid, tuple(upstream + [TARGET] + down), (seg[0] + offset, seg[1] + offset), DETOUR))

    # background traffic on unaffected lines: a departure every 20 minutes
    for k, dep in enumerate(range(5 * 60 + 30, 23 * 60 + 40, 20)):
        timetable.append(TrainEntry(f"N{k + 1:03d}", None, float(dep), 0, False))

    write_stations(OUT / "stations.csv", stations.values())
    write_routes(OUT / "routes.csv", routes)
    write_timetable(OUT / "timetable.csv", timetable)
    write_original_stops(OUT / "stops.csv", stops)
    (OUT / "target.txt").write_text(TARGET + "\n")
    print(f"wrote instance to {OUT}")


if __name__ == "__main__":
    main()
