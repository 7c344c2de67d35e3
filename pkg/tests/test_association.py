from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from momct.association import (
    AssociationConfig,
    Matched,
    SpawnNew,
    Track,
    TrackStatus,
    TrackTable,
    apply_decision,
    associate,
    gc_tracks,
)
from momct.geo import EnuPoint
from momct.model import ClassLabel
from momct.particle_filter import FilterConfig, Observation, ParticleFilter, estimate
from oracles import nearest_track_bruteforce

CFG = AssociationConfig()
FCFG = FilterConfig(n_particles=64)


def parked_track(track_id, east, north, t=0.0, status=TrackStatus.CONFIRMED, n=4):
    states = np.tile([north, 0.0, east, 0.0], (n, 1))
    pf = ParticleFilter(states, np.full(n, 1.0 / n), t)
    return Track(track_id, pf, last_obs_time=t, status=status)


def obs(t, east, north):
    return Observation(t, EnuPoint(east, north))


def test_empty_track_set_spawns():
    assert associate([], obs(0, 0, 0), CFG) == SpawnNew()


def test_exact_hit_matches():
    assert associate([parked_track(3, 5, 5)], obs(0, 5, 5), CFG) == Matched(3)


def test_nearest_then_lowest_id():
    tracks = [parked_track(0, 6, 0), parked_track(1, -4, 0)]
    assert associate(tracks, obs(0, 0, 0), CFG) == Matched(1)
    tracks = [parked_track(7, 5, 0), parked_track(2, -5, 0)]
    assert associate(tracks, obs(0, 0, 0), CFG) == Matched(2)


def test_outside_gate_spawns():
    assert associate([parked_track(0, 10.5, 0)], obs(0, 0, 0), CFG) == SpawnNew()
    assert associate([parked_track(0, 10.0, 0)], obs(0, 0, 0), CFG) == Matched(0)


def test_retired_tracks_ignored():
    assert associate([parked_track(0, 0, 0, status=TrackStatus.RETIRED)], obs(0, 0, 0), CFG) == SpawnNew()


def test_gating_uses_extrapolated_estimate():
    track = parked_track(0, 0, 0)
    track.filter.states[:, 3] = 10.0  # 10 m/s east
    # 12 m east after 1.2 s is a direct hit on the prediction, outside the gate of the stale position
    assert associate([track], obs(1.2, 12.0, 0.0), AssociationConfig(gate_radius=1.0)) == Matched(0)


@given(
    st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), max_size=8),
    st.tuples(st.integers(-20, 20), st.integers(-20, 20)),
)
def test_associate_matches_bruteforce(positions, o):
    # integer grid to provoke exact ties
    tracks = [parked_track(i, e, n) for i, (e, n) in enumerate(positions)]
    expected = nearest_track_bruteforce(dict(enumerate(positions)), o, CFG.gate_radius)
    decision = associate(tracks, obs(0, *o), CFG)
    assert decision == (SpawnNew() if expected is None else Matched(expected))


def test_spawn_new_track():
    table = TrackTable()
    track = apply_decision(table, SpawnNew(), obs(1.0, 2, 3), FCFG, CFG, np.random.default_rng(0), ClassLabel.VEHICLE)
    assert len(table.tracks) == 1
    assert track.status is TrackStatus.TENTATIVE and track.obs_count == 1
    assert track.filter.n == 64 and track.last_obs_time == 1.0


def test_ids_monotone():
    table = TrackTable()
    rng = np.random.default_rng(0)
    ids = [apply_decision(table, SpawnNew(), obs(0, 100 * i, 0), FCFG, CFG, rng).track_id for i in range(3)]
    assert ids == [0, 1, 2]


def test_confirmation_threshold():
    table = TrackTable()
    rng = np.random.default_rng(0)
    t = apply_decision(table, SpawnNew(), obs(0.0, 0, 0), FCFG, CFG, rng)
    apply_decision(table, Matched(t.track_id), obs(0.1, 0, 0), FCFG, CFG, rng)
    assert t.status is TrackStatus.TENTATIVE and t.obs_count == 2
    apply_decision(table, Matched(t.track_id), obs(0.2, 0, 0), FCFG, CFG, rng)
    assert t.status is TrackStatus.CONFIRMED and t.obs_count == 3
    assert t.last_obs_time == 0.2


def test_class_vote_majority_and_tie():
    track = parked_track(0, 0, 0)
    track.class_votes = Counter({"vehicle": 2, "pedestrian": 1})
    assert track.class_label is ClassLabel.VEHICLE
    track.class_votes["pedestrian"] += 1
    assert track.class_label is ClassLabel.UNKNOWN


def test_illegal_status_transition():
    track = parked_track(0, 0, 0, status=TrackStatus.RETIRED)
    with pytest.raises(ValueError):
        track.transition(TrackStatus.CONFIRMED)


def test_gc_zero_age_keeps():
    table = TrackTable(tracks={0: parked_track(0, 0, 0, t=4.0)})
    assert gc_tracks(table, 4.0, CFG) == []
    assert 0 in table.tracks


def test_gc_retires_idle():
    table = TrackTable(tracks={0: parked_track(0, 0, 0, t=0.0)})
    retired = gc_tracks(table, 5.0, CFG)
    assert [t.track_id for t in retired] == [0]
    assert retired[0].status is TrackStatus.RETIRED
    assert table.tracks == {} and table.retired == retired


def test_gc_exact_stale_subset():
    ages = {0: 0.0, 1: 2.9, 2: 3.0, 3: 3.01, 4: 10.0}
    now = 20.0
    table = TrackTable(tracks={i: parked_track(i, 0, 0, t=now - a) for i, a in ages.items()})
    retired = {t.track_id for t in gc_tracks(table, now, CFG)}
    assert retired == {i for i, a in ages.items() if a > CFG.stale_after}
    assert set(table.tracks) == {i for i, a in ages.items() if a <= CFG.stale_after}


def test_single_observation_updates_one_track():
    rng = np.random.default_rng(1)
    table = TrackTable()
    for i in range(3):
        apply_decision(table, SpawnNew(), obs(0, 3 * i, 0), FCFG, CFG, rng)
    before = {k: t.obs_count for k, t in table.tracks.items()}
    o = obs(0.1, 3.0, 0.0)
    apply_decision(table, associate(table.live(), o, CFG), o, FCFG, CFG, rng)
    after = {k: t.obs_count for k, t in table.tracks.items()}
    assert sum(after.values()) - sum(before.values()) == 1


def test_infinite_gate_single_object_no_fragmentation():
    cfg = AssociationConfig(gate_radius=1e12)
    rng = np.random.default_rng(3)
    table = TrackTable()
    for k in range(50):
        t = 0.1 * k
        o = obs(t, 8.0 * t + rng.normal(0, 2), -3.0 + rng.normal(0, 2))
        apply_decision(table, associate(table.live(), o, cfg), o, FCFG, cfg, rng)
    assert len(table.tracks) == 1
    assert estimate(table.tracks[0].filter).dx_lon == pytest.approx(8.0, abs=3.0)
