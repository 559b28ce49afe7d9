"""Run configuration (YAML) and the scenarios built from it."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields, is_dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import datagen
from .agent import AgentConfig, DQNConfig, EpsilonSchedule
from .fleet import FleetConfig
from .mobility import PassengerGroup
from .network import Network, parse_clock
from .rewards import RewardWeights


class ConfigError(ValueError):
    pass


def data_dir(name: str = "xian") -> Path:
    return Path(str(resources.files("hubdispatch") / "data" / name))


@dataclass
class DemandConfig:
    total: int = 1767
    share_seed: int = 11
    sample_seed: int = 19
    share_sigma: float = 0.5
    peak_gain: float = 0.0
    peak_time: float = 20 * 60
    peak_width: float = 90.0
    archetypes: list[str] | None = None
    midpoint: float = 40.0
    tolerance_mean: float = 150.0
    tolerance_shift: float = 60.0
    cohort: tuple[int, int] = (5, 40)
    background_base: float = 30.0
    background_peak: float = 420.0
    background_peak_time: float = 19 * 60 + 30
    background_peak_width: float = 45.0
    groups_file: str | None = None  # ingest instead of generating


@dataclass
class TrainingConfig:
    episodes: int = 3000
    seed: int = 0
    log_steps_every: int = 100  # full step logs every k-th episode (and the last)


@dataclass
class EvalConfig:
    episodes: int = 1000
    epsilon: float = 0.2
    seed: int = 1
    demand_total: int = 2787
    sample_seed: int = 23


@dataclass
class RunConfig:
    instance: str = "xian"
    start: float = 240.0
    end: float = 1440.0
    step: float = 5.0
    c1: int = 3
    c2: int = 2
    demand: DemandConfig = field(default_factory=DemandConfig)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)


_CLOCK_FIELDS = {"start", "end", "cutoff", "background_peak_time", "peak_time"}


def _fill(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs: dict[str, Any] = {}
    defaults = cls()
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        current = getattr(defaults, key)
        if is_dataclass(current):
            kwargs[key] = _fill(type(current), value, f"{where}.{key}")
        elif key in _CLOCK_FIELDS and isinstance(value, str):
            kwargs[key] = parse_clock(value)
        elif isinstance(current, tuple):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return _fill(RunConfig, raw, str(path))


@dataclass
class Scenario:
    network: Network
    groups: list[PassengerGroup]
    fleet: FleetConfig
    weights: RewardWeights
    start: float = 240.0
    end: float = 1440.0
    step: float = 5.0
    name: str = "scenario"
    shares: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.step <= 0 or self.end <= self.start:
            raise ValueError("bad horizon")
        self.fleet = copy.copy(self.fleet)
        self.fleet.step = self.step

    @property
    def n_steps(self) -> int:
        return int(round((self.end - self.start) / self.step))


def load_network(cfg: RunConfig) -> Network:
    path = Path(cfg.instance)
    if not path.is_dir():
        path = data_dir(cfg.instance)
    if not path.is_dir():
        raise ConfigError(f"instance {cfg.instance!r} not found")
    return Network.load(path, cfg.c1, cfg.c2)


def demand_groups(network: Network, d: DemandConfig, total: int | None = None, sample_seed: int | None = None):
    """Generated groups plus the per-train disrupted demand they were drawn from."""
    total = d.total if total is None else total
    profiles = datagen.disrupted_profiles(
        network, total, d.share_seed, d.share_sigma, d.archetypes,
        peak_gain=d.peak_gain, peak_time=d.peak_time, peak_width=d.peak_width,
        midpoint=d.midpoint, tolerance_mean=d.tolerance_mean, tolerance_shift=d.tolerance_shift,
    )
    profiles += datagen.background_profiles(
        network, d.background_base, d.background_peak, d.background_peak_time, d.background_peak_width
    )
    seed = d.sample_seed if sample_seed is None else sample_seed
    groups = datagen.generate(network.timetable, profiles, seed, tuple(d.cohort))
    shares = {p.train: p.demand for p in profiles if network.trains[p.train].disrupted}
    return groups, shares


def build_scenario(cfg: RunConfig, transfer: bool = False, network: Network | None = None) -> Scenario:
    network = network or load_network(cfg)
    if cfg.demand.groups_file and not transfer:
        groups = datagen.ingest(cfg.demand.groups_file, network)
        shares = {}
    elif transfer:
        groups, shares = demand_groups(network, cfg.demand, cfg.evaluation.demand_total, cfg.evaluation.sample_seed)
    else:
        groups, shares = demand_groups(network, cfg.demand)
    return Scenario(network, groups, cfg.fleet, cfg.rewards, cfg.start, cfg.end, cfg.step,
                    "transfer" if transfer else "train", shares)


def config_to_dict(cfg) -> dict:
    from dataclasses import asdict

    return asdict(cfg)
