"""Tracking and alert quality metrics computed from the recorded line streams.

Tracks are matched to true objects greedily on mean distance (each truth
object at most once); this is simpler than per-frame CLEAR-MOT assignment
and adequate for a handful of objects. Metrics read nothing but the truth
and event lines, so re-running them on the written files reproduces the
report exactly.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .geo import GeoPoint, ReferenceOrigin, geo_to_enu

ALIGN_TOLERANCE = 0.05


@dataclass(frozen=True)
class Series:
    """Time-sorted planar samples for one track or one true object."""

    times: np.ndarray
    xy: np.ndarray  # (K, 2) east, north


@dataclass(frozen=True)
class AlertRecord:
    a: int
    b: int
    t: float
    d: float


@dataclass
class Streams:
    truth: dict[int, Series]
    tracks: dict[int, Series]
    alerts: list[AlertRecord]
    stats: dict


def _parse_lines(lines: Iterable[str | bytes]) -> list[dict]:
    out = []
    for line in lines:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if line.strip():
            out.append(json.loads(line))
    return out


def _series(rows: list[tuple[float, float, float]], ref: ReferenceOrigin) -> Series:
    # later rows win for duplicate timestamps
    latest = {}
    for t, lat, lon in rows:
        latest[t] = (lat, lon)
    times = np.array(sorted(latest), dtype=float)
    xy = np.array([[e.east, e.north] for e in (geo_to_enu(GeoPoint(*latest[t]), ref) for t in times)]).reshape(-1, 2)
    return Series(times, xy)


def load_streams(truth_lines: Iterable, event_lines: Iterable) -> Streams:
    truth_rows = [r for r in _parse_lines(truth_lines) if r.get("type") == "truth"]
    events = _parse_lines(event_lines)
    if truth_rows:
        ref = ReferenceOrigin(GeoPoint(truth_rows[0]["lat"], truth_rows[0]["lon"]))
    else:
        ref = ReferenceOrigin(GeoPoint(0.0, 0.0))

    by_obj = defaultdict(list)
    for r in truth_rows:
        by_obj[int(r["id"])].append((float(r["t"]), r["lat"], r["lon"]))
    by_track = defaultdict(list)
    alerts = []
    stats = {}
    for r in events:
        kind = r.get("type")
        if kind == "track":
            by_track[int(r["id"])].append((float(r["t"]), r["lat"], r["lon"]))
        elif kind == "alert":
            alerts.append(AlertRecord(int(r["a"]), int(r["b"]), float(r["t"]), float(r["d"])))
        elif kind == "stats":
            stats = {k: v for k, v in r.items() if k != "type"}
    return Streams(
        truth={k: _series(v, ref) for k, v in sorted(by_obj.items())},
        tracks={k: _series(v, ref) for k, v in sorted(by_track.items())},
        alerts=alerts,
        stats=stats,
    )


def align(track: Series, truth: Series, tol: float = ALIGN_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """Indices (into track, into truth) of samples with a truth sample within ``tol`` seconds."""
    if len(track.times) == 0 or len(truth.times) == 0:
        return np.empty(0, int), np.empty(0, int)
    j = np.searchsorted(truth.times, track.times)
    lo = np.clip(j - 1, 0, len(truth.times) - 1)
    hi = np.clip(j, 0, len(truth.times) - 1)
    nearest = np.where(np.abs(truth.times[lo] - track.times) <= np.abs(truth.times[hi] - track.times), lo, hi)
    ok = np.abs(truth.times[nearest] - track.times) <= tol + 1e-9
    return np.nonzero(ok)[0], nearest[ok]


@dataclass
class RmseResult:
    per_object: dict[int, float | None]
    overall: float | None
    matching: dict[int, int]  # track id -> truth id
    false_tracks: list[int]


def compute_rmse(tracks: dict[int, Series], truth: dict[int, Series], burn_in: float = 1.0) -> RmseResult:
    """Match tracks to truth on mean distance, then RMSE after each track's burn-in."""
    candidates = []
    for tid, tr in tracks.items():
        for oid, gt in truth.items():
            i, j = align(tr, gt)
            if len(i):
                mean = float(np.mean(np.linalg.norm(tr.xy[i] - gt.xy[j], axis=1)))
                candidates.append((mean, tid, oid))
    candidates.sort()
    matching: dict[int, int] = {}
    taken = set()
    for _, tid, oid in candidates:
        if tid in matching or oid in taken:
            continue
        matching[tid] = oid
        taken.add(oid)

    per_object: dict[int, float | None] = {oid: None for oid in truth}
    total_sq = 0.0
    total_n = 0
    for tid, oid in sorted(matching.items()):
        tr, gt = tracks[tid], truth[oid]
        i, j = align(tr, gt)
        keep = tr.times[i] >= tr.times[0] + burn_in - 1e-9
        i, j = i[keep], j[keep]
        if not len(i):
            continue
        sq = np.sum((tr.xy[i] - gt.xy[j]) ** 2, axis=1)
        per_object[oid] = math.sqrt(float(np.mean(sq)))
        total_sq += float(np.sum(sq))
        total_n += len(sq)
    overall = math.sqrt(total_sq / total_n) if total_n else None
    false_tracks = sorted(t for t in tracks if t not in matching)
    return RmseResult(per_object, overall, matching, false_tracks)


def near_miss_times(truth: dict[int, Series], collision_distance: float) -> dict[tuple[int, int], np.ndarray]:
    """Truth-sample times at which each object pair is within ``collision_distance``."""
    out = {}
    ids = sorted(truth)
    for n, a in enumerate(ids):
        for b in ids[n + 1:]:
            ta, tb = truth[a], truth[b]
            common, ia, ib = np.intersect1d(ta.times, tb.times, return_indices=True)
            d = np.linalg.norm(ta.xy[ia] - tb.xy[ib], axis=1)
            close = common[d <= collision_distance]
            if len(close):
                out[(a, b)] = close
    return out


@dataclass
class AlertScore:
    precision: float
    recall: float
    true_positives: int
    precision_vacuous: bool
    recall_vacuous: bool


def score_alerts(
    alerts: list[AlertRecord],
    truth: dict[int, Series],
    matching: dict[int, int],
    collision_distance: float,
    horizon: float,
) -> AlertScore:
    """Precision/recall of alerts against ground-truth near misses.

    Zero denominators give 1.0 and set the corresponding ``*_vacuous`` flag.
    """
    misses = near_miss_times(truth, collision_distance)
    tp = 0
    hit_pairs = set()
    for al in alerts:
        if al.a not in matching or al.b not in matching:
            continue
        pair = tuple(sorted((matching[al.a], matching[al.b])))
        times = misses.get(pair)
        if times is not None and np.any(np.abs(times - al.t) <= horizon + 1e-9):
            tp += 1
            hit_pairs.add(pair)
    precision = tp / len(alerts) if alerts else 1.0
    recall = len(hit_pairs) / len(misses) if misses else 1.0
    return AlertScore(precision, recall, tp, not alerts, not misses)


@dataclass
class MetricsReport:
    per_object_rmse: dict[str, float | None]
    overall_rmse: float | None
    n_true_objects: int
    n_tracks: int
    track_count_error: int
    false_tracks: list[int]
    matching: dict[str, int]
    alerts: int
    alert_precision: float
    alert_recall: float
    precision_vacuous: bool
    recall_vacuous: bool
    sent: int | None
    delivered: int | None
    accepted: int | None
    late_dropped: int | None
    degeneracy_events: int | None
    burn_in: float
    collision_distance: float
    horizon: float
    runtime_s: float | None = field(default=None)

    def to_line(self) -> str:
        """Single-line JSON. Runtime is left out so the file is reproducible."""
        d = asdict(self)
        d.pop("runtime_s")
        return json.dumps(d, separators=(",", ":"), allow_nan=False) + "\n"


def compute_report(
    truth_lines: Iterable,
    event_lines: Iterable,
    burn_in: float = 1.0,
    collision_distance: float = 2.5,
    horizon: float = 3.0,
) -> MetricsReport:
    s = load_streams(truth_lines, event_lines)
    rmse = compute_rmse(s.tracks, s.truth, burn_in)
    score = score_alerts(s.alerts, s.truth, rmse.matching, collision_distance, horizon)
    return MetricsReport(
        per_object_rmse={str(k): v for k, v in rmse.per_object.items()},
        overall_rmse=rmse.overall,
        n_true_objects=len(s.truth),
        n_tracks=len(s.tracks),
        track_count_error=len(s.tracks) - len(s.truth),
        false_tracks=rmse.false_tracks,
        matching={str(k): v for k, v in sorted(rmse.matching.items())},
        alerts=len(s.alerts),
        alert_precision=score.precision,
        alert_recall=score.recall,
        precision_vacuous=score.precision_vacuous,
        recall_vacuous=score.recall_vacuous,
        sent=s.stats.get("sent"),
        delivered=s.stats.get("delivered"),
        accepted=s.stats.get("accepted"),
        late_dropped=s.stats.get("late"),
        degeneracy_events=s.stats.get("degenerate"),
        burn_in=burn_in,
        collision_distance=collision_distance,
        horizon=horizon,
    )


def report_from_files(truth_path: str | Path, events_path: str | Path, **kwargs) -> MetricsReport:
    with open(truth_path, "rb") as ft, open(events_path, "rb") as fe:
        return compute_report(ft, fe, **kwargs)
