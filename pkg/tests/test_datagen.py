import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubdispatch import datagen
from hubdispatch.datagen import DemandProfile, GroupFileError
from hubdispatch.mobility import Mobility
from hubdispatch.scenario import build_scenario, demand_groups


def _disrupted_total(groups):
    return sum(g.demand for g in groups if g.route != 0)


def test_training_total(hub_net, hub_cfg):
    groups, shares = demand_groups(hub_net, hub_cfg.demand)
    assert _disrupted_total(groups) == 1767
    assert len(shares) == 33
    assert sum(shares.values()) == 1767


def test_transfer_total(hub_cfg):
    sc = build_scenario(hub_cfg, transfer=True)
    assert _disrupted_total(sc.groups) == 2787


def test_transfer_scales_shares(hub_net, hub_cfg):
    _, base = demand_groups(hub_net, hub_cfg.demand)
    _, big = demand_groups(hub_net, hub_cfg.demand, total=2787)
    ratio = np.array([big[k] for k in base]) / np.array([base[k] for k in base])
    assert np.median(ratio) == pytest.approx(2787 / 1767, rel=0.1)


def test_zero_demand_train_emits_nothing(hub_net):
    code = next(t.code for t in hub_net.timetable if t.disrupted)
    profiles = [DemandProfile(t.code, 0 if t.code == code else 10) for t in hub_net.timetable if t.disrupted]
    groups = datagen.generate(hub_net.timetable, profiles, seed=0)
    assert not any(g.target_train == code for g in groups)


def test_missing_profile_rejected(hub_net):
    with pytest.raises(ValueError, match="no demand profile"):
        datagen.generate(hub_net.timetable, [], seed=0)


def test_unreachable_cohorts_rejected():
    with pytest.raises(ValueError):
        datagen.partition_cohorts(np.random.default_rng(0), 3)


@given(st.integers(5, 3000), st.integers(0, 2**32 - 1))
def test_cohorts_partition(total, seed):
    sizes = datagen.partition_cohorts(np.random.default_rng(seed), total)
    assert sum(sizes) == total
    assert all(5 <= s <= 40 for s in sizes)


def test_same_seed_same_bytes(tmp_path, hub_net, hub_cfg):
    for k in range(2):
        groups, _ = demand_groups(hub_net, hub_cfg.demand)
        datagen.write_groups(tmp_path / f"{k}.csv", groups)
    assert (tmp_path / "0.csv").read_bytes() == (tmp_path / "1.csv").read_bytes()


@pytest.mark.parametrize("archetype", sorted(datagen.ARCHETYPES))
def test_enter_times_follow_sigmoid(archetype):
    p = DemandProfile.preset("X", 1000, archetype)
    depart = 900.0
    x = np.sort(datagen.sample_enter_times(np.random.default_rng(1), 2000, depart, p))
    assert np.all((x >= depart - p.window - 1e-9) & (x <= depart + 1e-9))
    emp = np.arange(1, len(x) + 1) / len(x)
    ks = np.max(np.maximum(np.abs(emp - datagen.accumulation_cdf(x, depart, p)),
                           np.abs(emp - 1 / len(x) - datagen.accumulation_cdf(x, depart, p))))
    assert ks < 0.05
    grid = np.linspace(depart - p.window, depart, 50)
    assert np.all(np.diff(datagen.accumulation_cdf(grid, depart, p)) >= 0)


def test_tolerance_mean():
    p = DemandProfile("X", 10)
    draws = datagen.sample_tolerance(np.random.default_rng(2), 20000, p)
    assert draws.min() > p.tolerance_shift
    assert draws.mean() == pytest.approx(p.tolerance_mean, rel=0.02)


def test_profile_validation():
    with pytest.raises(ValueError):
        DemandProfile("X", -1)
    with pytest.raises(ValueError):
        DemandProfile("X", 5, archetype="zigzag")
    with pytest.raises(ValueError):
        DemandProfile("X", 5, tolerance_mean=10, tolerance_shift=20)


def test_background_below_threshold(hub_net, hub_cfg):
    groups, _ = demand_groups(hub_net, hub_cfg.demand)
    background = [g for g in groups if g.route == 0]
    mob = Mobility(hub_net, background)
    peak = 0.0
    for t in np.arange(241.0, 1441.0):
        mob.advance_clock(t)
        peak = max(peak, mob.crowdedness())
    assert 0 < peak < hub_cfg.rewards.crowd_threshold


# --- ingestion -------------------------------------------------------------------


def test_ingest_round_trip(tmp_path, hub_net, hub_cfg):
    groups, _ = demand_groups(hub_net, hub_cfg.demand)
    path = tmp_path / "g.csv"
    datagen.write_groups(path, groups)
    assert datagen.ingest(path, hub_net) == groups


def _write(tmp_path, *rows):
    path = tmp_path / "g.csv"
    path.write_text("\n".join([",".join(datagen.GROUP_COLUMNS), *rows]) + "\n")
    return path


def test_ingest_inverted_times(tmp_path):
    path = _write(tmp_path, "560,780,1000,K000,1,20", "560,780,700,K000,1,20")
    with pytest.raises(GroupFileError, match=r"g\.csv:3:"):
        datagen.ingest(path)


def test_ingest_unknown_train(tmp_path, hub_net):
    path = _write(tmp_path, "560,780,1000,ZZ99,1,20")
    with pytest.raises(GroupFileError, match="ZZ99"):
        datagen.ingest(path, hub_net)


def test_ingest_bad_schema(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(GroupFileError, match=":1:"):
        datagen.ingest(path)
    path = _write(tmp_path, "560,780,1000,K000,one,20")
    with pytest.raises(GroupFileError, match=":2:"):
        datagen.ingest(path)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_groups_valid(seed):
    from hubdispatch import tiny

    net = tiny.two_routes().network
    profiles = [DemandProfile(t.code, 30, window=60.0, midpoint=15.0) for t in net.timetable]
    for g in datagen.generate(net.timetable, profiles, seed):
        assert g.enter_time <= g.planned_depart <= g.leave_time
