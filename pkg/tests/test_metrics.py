import itertools
import json

import numpy as np
import pytest

from momct.geo import EnuPoint, ReferenceOrigin, enu_to_geo
from momct.metrics import (
    AlertRecord,
    Series,
    align,
    compute_report,
    compute_rmse,
    near_miss_times,
    score_alerts,
)

REF = ReferenceOrigin.at(41.275, 1.987)
T = np.round(0.1 * np.arange(51), 10)


def line_series(p0, v, times=T):
    return Series(times, np.asarray(p0, float) + np.outer(times, v))


def test_perfect_tracks_zero_rmse():
    truth = {1: line_series([0, 0], [5, 0])}
    res = compute_rmse({0: line_series([0, 0], [5, 0])}, truth, burn_in=1.0)
    assert res.overall == 0.0 and res.per_object[1] == 0.0
    assert res.matching == {0: 1} and res.false_tracks == []


def test_constant_offset_rmse():
    truth = {1: line_series([0, 0], [5, 0])}
    res = compute_rmse({0: line_series([0, 1], [5, 0])}, truth, burn_in=1.0)
    assert res.overall == pytest.approx(1.0, abs=1e-12)


def test_burn_in_excludes_early_error():
    truth = {1: line_series([0, 0], [0, 0])}
    xy = np.zeros((len(T), 2))
    xy[T < 1.0 - 1e-9, 0] = 50.0
    res = compute_rmse({0: Series(T, xy)}, truth, burn_in=1.0)
    assert res.overall == 0.0


def test_alignment_tolerance():
    truth = line_series([0, 0], [0, 0], times=np.array([0.0, 1.0]))
    track = Series(np.array([0.04, 0.5, 1.06]), np.zeros((3, 2)))
    i, j = align(track, truth)
    assert list(i) == [0] and list(j) == [0]


def exhaustive_assignment(tracks, truth):
    """Minimum-total mean-distance one-to-one assignment by enumeration."""
    best = None
    for perm in itertools.permutations(truth, len(tracks)):
        cost = 0.0
        for tid, oid in zip(tracks, perm):
            cost += np.mean(np.linalg.norm(tracks[tid].xy - truth[oid].xy, axis=1))
        if best is None or cost < best[0]:
            best = (cost, dict(zip(tracks, perm)))
    return best[1]


def test_crossed_pair_matching_agrees_with_exhaustive():
    truth = {1: line_series([0, 0], [5, 0]), 2: line_series([0, 30], [0, -3])}
    # track ids deliberately in the opposite order of the objects
    tracks = {0: line_series([0.5, 30], [0, -3]), 1: line_series([0, -0.5], [5, 0])}
    res = compute_rmse(tracks, truth)
    assert res.matching == exhaustive_assignment(tracks, truth) == {0: 2, 1: 1}


def test_extra_track_is_false():
    truth = {1: line_series([0, 0], [5, 0])}
    tracks = {0: line_series([0, 0], [5, 0]), 1: line_series([0, 0.3], [5, 0])}
    res = compute_rmse(tracks, truth)
    assert res.false_tracks == [1]


def crossing_truth():
    # both at the origin at t = 2.5
    return {1: line_series([-12.5, 0], [5, 0]), 2: line_series([0, -12.5], [0, 5])}


def test_near_miss_detection():
    misses = near_miss_times(crossing_truth(), 2.5)
    assert list(misses) == [(1, 2)]
    assert misses[(1, 2)].min() >= 2.0 - 1e-9 and misses[(1, 2)].max() <= 3.0 + 1e-9


def test_crossing_alert_full_recall():
    score = score_alerts([AlertRecord(0, 1, 2.5, 0.1)], crossing_truth(), {0: 1, 1: 2}, 2.5, 3.0)
    assert score.precision == 1.0 and score.recall == 1.0
    assert not score.precision_vacuous and not score.recall_vacuous


def test_false_alert_lowers_precision():
    truth = {1: line_series([0, 0], [5, 0]), 2: line_series([0, 100], [5, 0])}
    score = score_alerts([AlertRecord(0, 1, 2.0, 1.0)], truth, {0: 1, 1: 2}, 2.5, 3.0)
    assert score.precision < 1.0
    assert score.recall == 1.0 and score.recall_vacuous


def test_no_alerts_no_misses_vacuous():
    score = score_alerts([], {1: line_series([0, 0], [0, 0])}, {}, 2.5, 3.0)
    assert (score.precision, score.recall) == (1.0, 1.0)
    assert score.precision_vacuous and score.recall_vacuous


def test_missed_collision_zero_recall():
    score = score_alerts([], crossing_truth(), {0: 1, 1: 2}, 2.5, 3.0)
    assert score.recall == 0.0 and score.precision_vacuous


def to_lines(truth, tracks, alerts=()):
    tl, el = [], []
    for oid, s in truth.items():
        for t, (e, n) in zip(s.times, s.xy):
            g = enu_to_geo(EnuPoint(e, n), REF)
            tl.append(json.dumps({"type": "truth", "t": float(t), "id": oid, "lat": g.lat, "lon": g.lon, "vn": 0, "ve": 0}))
    for tid, s in tracks.items():
        for t, (e, n) in zip(s.times, s.xy):
            g = enu_to_geo(EnuPoint(e, n), REF)
            el.append(json.dumps({"type": "track", "id": tid, "t": float(t), "lat": g.lat, "lon": g.lon, "vn": 0, "ve": 0}))
    for a in alerts:
        el.append(json.dumps({"type": "alert", "a": a.a, "b": a.b, "t": a.t, "d": a.d}))
    el.append(json.dumps({"type": "stats", "sent": 10, "delivered": 9, "ingested": 9, "accepted": 9, "late": 0,
                          "applied": 9, "degenerate": 0}))
    return tl, el


def test_report_from_lines():
    truth = crossing_truth()
    tracks = {0: line_series([-12.5, 1], [5, 0]), 1: line_series([0, -12.5], [0, 5])}
    tl, el = to_lines(truth, tracks, [AlertRecord(0, 1, 2.5, 1.0)])
    rep = compute_report(tl, el)
    assert rep.per_object_rmse["1"] == pytest.approx(1.0, abs=1e-6)
    assert rep.per_object_rmse["2"] == pytest.approx(0.0, abs=1e-6)
    # pooled over both objects' samples
    assert rep.overall_rmse == pytest.approx(np.sqrt(0.5), abs=1e-6)
    assert rep.track_count_error == 0
    assert rep.alert_precision == 1.0 and rep.alert_recall == 1.0
    assert (rep.sent, rep.delivered, rep.late_dropped) == (10, 9, 0)


def test_report_recompute_is_identical():
    tl, el = to_lines(crossing_truth(), {0: line_series([-12.5, 0.2], [5, 0])})
    assert compute_report(tl, el).to_line() == compute_report(list(tl), list(el)).to_line()


def test_report_line_omits_runtime():
    tl, el = to_lines(crossing_truth(), {})
    rep = compute_report(tl, el)
    rep.runtime_s = 1.23
    assert "runtime_s" not in json.loads(rep.to_line())
