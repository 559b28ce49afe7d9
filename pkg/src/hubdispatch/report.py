"""Report tables extracted from run directories. Every function reads log files only."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .harness import EpisodeLog, moving_average
from .network import format_clock


def reward_curve(summaries: list[dict], window: int = 100) -> list[dict]:
    rewards = [s["total_reward"] for s in summaries]
    ma = moving_average(rewards, window)
    rows = []
    for i, s in enumerate(summaries):
        rows.append({
            "episode": s.get("episode", i),
            "total_reward": s["total_reward"],
            "satisfied": s["satisfied"],
            "units_used": s["units_used"],
            "steps": s["steps"],
            "max_crowd": s["max_crowd"],
            "reward_ma": float(ma[i - window + 1]) if i >= window - 1 else None,
        })
    return rows


def rescheduled_timetable(log: EpisodeLog) -> list[dict]:
    """One row per station call of every train actually dispatched in the episode."""
    rows = []
    n = 0
    for st in log.steps:
        if "arrivals" not in st:
            continue
        n += 1
        for station, minute in st["arrivals"]:
            rows.append({
                "train": f"R{n:02d}",
                "route": st["route"],
                "tier": st["tier"],
                "depart": format_clock(st["t"]),
                "station": station,
                "arrive": format_clock(minute),
                "arrive_minute": minute,
            })
    return rows


def satisfaction_by_train(log: EpisodeLog, shares: dict[str, int]) -> list[dict]:
    served: dict[str, float] = {}
    for st in log.steps:
        for code, amount in st["by_train"].items():
            served[code] = served.get(code, 0.0) + amount
    codes = list(shares) + sorted(c for c in served if c not in shares)
    return [
        {
            "train": c,
            "demand": shares.get(c),
            "served": served.get(c, 0.0),
            "fraction": served.get(c, 0.0) / shares[c] if shares.get(c) else None,
        }
        for c in codes
    ]


def crowd_trace(log: EpisodeLog) -> list[dict]:
    return [{"t": st["t"], "clock": format_clock(st["t"]), "crowd": st["crowd"], "denied": st["denied"]} for st in log.steps]


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def latest_episode(run_dir: Path) -> Path | None:
    logs = sorted((run_dir / "episodes").glob("episode_*.jsonl")) or sorted(run_dir.glob("episode_*.jsonl"))
    return logs[-1] if logs else None


def build_report(run_dir: str | Path, out_dir: str | Path, plots: bool = False) -> list[Path]:
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = json.loads((run_dir / "manifest.json").read_text()) if (run_dir / "manifest.json").exists() else {}
    summaries_path = run_dir / "summaries.jsonl"
    curve = []
    if summaries_path.exists():
        summaries = [json.loads(x) for x in summaries_path.read_text().splitlines() if x.strip()]
        curve = reward_curve(summaries)
        _write_csv(out_dir / "reward_curve.csv", curve)
        written.append(out_dir / "reward_curve.csv")
    ep = latest_episode(run_dir)
    if ep is not None:
        log = EpisodeLog.read(ep)
        tables = {
            "timetable.csv": rescheduled_timetable(log),
            "satisfaction_by_train.csv": satisfaction_by_train(log, manifest.get("shares", {})),
            "crowd_trace.csv": crowd_trace(log),
        }
        for name, rows in tables.items():
            _write_csv(out_dir / name, rows)
            written.append(out_dir / name)
        if plots:
            written += _plots(out_dir, curve, tables)
    return written


def _plots(out_dir: Path, curve: list[dict], tables: dict) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    if curve:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot([r["episode"] for r in curve], [r["total_reward"] for r in curve], color="0.75", lw=0.5)
        pts = [(r["episode"], r["reward_ma"]) for r in curve if r["reward_ma"] is not None]
        if pts:
            ax.plot(*zip(*pts), color="C0")
        ax.set_xlabel("episode")
        ax.set_ylabel("total reward")
        fig.tight_layout()
        fig.savefig(out_dir / "reward_curve.png", dpi=120)
        plt.close(fig)
        paths.append(out_dir / "reward_curve.png")
    trace = tables["crowd_trace.csv"]
    if trace:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot([r["t"] / 60 for r in trace], [r["crowd"] for r in trace])
        ax.set_xlabel("hour")
        ax.set_ylabel("in-station passengers")
        fig.tight_layout()
        fig.savefig(out_dir / "crowd_trace.png", dpi=120)
        plt.close(fig)
        paths.append(out_dir / "crowd_trace.png")
    return paths
