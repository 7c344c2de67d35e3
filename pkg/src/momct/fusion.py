"""Edge fusion service.

Tracklet points from any number of cameras enter a reorder buffer keyed by
observation time. Points are released to association once they fall behind
the watermark (``clock - watermark_delay``, where ``clock`` is the latest
``sent_at`` seen), in a total order that does not depend on arrival order.
Points arriving after their slot has been released are dropped and counted.
"""

from __future__ import annotations

import heapq
import json
import math
import threading
from dataclasses import dataclass

import numpy as np

from .association import (
    AssociationConfig,
    Matched,
    TrackStatus,
    TrackTable,
    apply_decision,
    associate,
    gc_tracks,
)
from .geo import EnuPoint, GeoPoint, ReferenceOrigin, enu_to_geo, geo_to_enu
from .model import ClassLabel, TrackletMessage
from .particle_filter import FilterConfig, KinematicState, Observation, estimate


@dataclass(frozen=True)
class FusionConfig:
    watermark_delay: float = 0.5
    prediction_horizon: float = 3.0
    prediction_step: float = 0.25
    collision_distance: float = 2.5

    def __post_init__(self):
        for name in ("watermark_delay", "prediction_horizon", "prediction_step", "collision_distance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if self.prediction_step > self.prediction_horizon:
            raise ValueError("prediction_step must not exceed prediction_horizon")


@dataclass(frozen=True)
class TrajectoryPrediction:
    track_id: int
    times: np.ndarray  # (K,)
    positions: np.ndarray  # (K, 2) as (east, north)

    @property
    def points(self) -> list[tuple[float, EnuPoint]]:
        return [(float(t), EnuPoint(float(e), float(n))) for t, (e, n) in zip(self.times, self.positions)]


@dataclass(frozen=True)
class CollisionAlert:
    track_a: int
    track_b: int
    t_closest: float
    min_distance: float
    # engine clock when the alert was raised; not part of the wire line
    raised_at: float = float("nan")

    def to_line(self) -> str:
        return _dumps({"type": "alert", "a": self.track_a, "b": self.track_b, "t": self.t_closest, "d": self.min_distance})


@dataclass(frozen=True)
class TrackEvent:
    track_id: int
    t: float
    pos: GeoPoint
    vn: float
    ve: float

    def to_line(self) -> str:
        return _dumps(
            {"type": "track", "id": self.track_id, "t": self.t, "lat": self.pos.lat, "lon": self.pos.lon, "vn": self.vn, "ve": self.ve}
        )


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


@dataclass(frozen=True, order=True)
class _Pending:
    # field order is the release order; ties on source ids fall back to position
    t: float
    camera_id: str
    local_object_id: int
    north: float
    east: float
    class_label: str

    @property
    def obs(self) -> Observation:
        return Observation(self.t, EnuPoint(self.east, self.north))


@dataclass(frozen=True)
class AppliedObservation:
    obs: Observation
    track_id: int
    spawned: bool
    status: TrackStatus
    state: KinematicState


@dataclass
class FusionStats:
    ingested: int = 0
    accepted: int = 0
    late_dropped: int = 0
    applied: int = 0
    degeneracy_events: int = 0


class FusionEngine:
    """Reorder buffer plus track table. ``ingest`` is safe from many threads;
    ``advance``/``flush`` must be driven by a single consumer."""

    def __init__(
        self,
        origin: ReferenceOrigin | None = None,
        filter_cfg: FilterConfig | None = None,
        assoc_cfg: AssociationConfig | None = None,
        fusion_cfg: FusionConfig | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.origin = origin
        self.filter_cfg = filter_cfg or FilterConfig()
        self.assoc_cfg = assoc_cfg or AssociationConfig()
        self.fusion_cfg = fusion_cfg or FusionConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.table = TrackTable()
        self.clock = -math.inf
        self.stats = FusionStats()
        self._buffer: list[_Pending] = []
        self._lock = threading.Lock()

    @property
    def horizon(self) -> float:
        return self.clock - self.fusion_cfg.watermark_delay

    @property
    def pending(self) -> int:
        return len(self._buffer)

    def ingest(self, msg: TrackletMessage) -> bool:
        """Buffer the message's points. Returns False if any point was late."""
        tr = msg.tracklet
        with self._lock:
            if self.origin is None:
                self.origin = ReferenceOrigin(tr.points[0].pos)
            # lateness is judged against what may already have been released
            cutoff = self.horizon
            all_on_time = True
            for p in tr.points:
                self.stats.ingested += 1
                if p.t < cutoff:
                    self.stats.late_dropped += 1
                    all_on_time = False
                    continue
                e = geo_to_enu(p.pos, self.origin)
                heapq.heappush(
                    self._buffer,
                    _Pending(p.t, tr.camera_id, tr.local_object_id, e.north, e.east, ClassLabel(tr.class_label).value),
                )
                self.stats.accepted += 1
            self.clock = max(self.clock, msg.sent_at)
        return all_on_time

    def _release(self, limit: float) -> list[_Pending]:
        with self._lock:
            out = []
            while self._buffer and self._buffer[0].t <= limit:
                out.append(heapq.heappop(self._buffer))
            return out

    def advance(self) -> list[AppliedObservation]:
        return self._apply(self._release(self.horizon), self.horizon)

    def flush(self) -> list[AppliedObservation]:
        """Release everything still buffered (end of stream)."""
        released = self._release(math.inf)
        end = released[-1].t if released else -math.inf
        return self._apply(released, end)

    def _apply(self, released: list[_Pending], gc_time: float) -> list[AppliedObservation]:
        applied = []
        for item in released:
            obs = item.obs
            # retire by the observation's own time so results do not depend on drain timing
            gc_tracks(self.table, obs.t, self.assoc_cfg)
            decision = associate(self.table.live(), obs, self.assoc_cfg)
            track = apply_decision(
                self.table, decision, obs, self.filter_cfg, self.assoc_cfg, self.rng, ClassLabel(item.class_label)
            )
            if track.filter.degenerate:
                self.stats.degeneracy_events += 1
            self.stats.applied += 1
            applied.append(
                AppliedObservation(obs, track.track_id, not isinstance(decision, Matched), track.status, estimate(track.filter))
            )
        gc_tracks(self.table, gc_time, self.assoc_cfg)
        return applied

    def track_event(self, applied: AppliedObservation) -> TrackEvent:
        s = applied.state
        return TrackEvent(applied.track_id, applied.obs.t, enu_to_geo(s.position, self.origin), s.dx_lat, s.dx_lon)


def predict_trajectories(engine: FusionEngine, cfg: FusionConfig | None = None) -> list[TrajectoryPrediction]:
    """Constant-velocity extrapolation of each confirmed track's point estimate.

    All predictions share one grid starting at the engine clock.
    """
    cfg = cfg or engine.fusion_cfg
    if not math.isfinite(engine.clock):
        return []
    n_steps = int(math.floor(cfg.prediction_horizon / cfg.prediction_step + 1e-9))
    times = engine.clock + cfg.prediction_step * np.arange(n_steps + 1)
    out = []
    for track in engine.table.confirmed():
        s = estimate(track.filter)
        dt = times - track.filter.last_time
        east = s.x_lon + s.dx_lon * dt
        north = s.x_lat + s.dx_lat * dt
        out.append(TrajectoryPrediction(track.track_id, times, np.column_stack([east, north])))
    return out


def detect_collisions(
    predictions: list[TrajectoryPrediction], cfg: FusionConfig, raised_at: float = float("nan")
) -> list[CollisionAlert]:
    preds = sorted(predictions, key=lambda p: p.track_id)
    alerts = []
    for i, a in enumerate(preds):
        for b in preds[i + 1:]:
            if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
                raise ValueError("predictions must share the same time grid")
            dist = np.hypot(*(a.positions - b.positions).T)
            j = int(np.argmin(dist))  # first index on ties
            if dist[j] <= cfg.collision_distance:
                alerts.append(CollisionAlert(a.track_id, b.track_id, float(a.times[j]), float(dist[j]), raised_at))
    return alerts


def process_message(engine: FusionEngine, msg: TrackletMessage) -> list[TrackEvent | CollisionAlert]:
    """Ingest one message, drain what the watermark allows, and report events."""
    engine.ingest(msg)
    return _events(engine, engine.advance())


def finish(engine: FusionEngine) -> list[TrackEvent | CollisionAlert]:
    return _events(engine, engine.flush())


def _events(engine: FusionEngine, applied: list[AppliedObservation]) -> list[TrackEvent | CollisionAlert]:
    events: list[TrackEvent | CollisionAlert] = [
        engine.track_event(a) for a in applied if a.status is TrackStatus.CONFIRMED
    ]
    if applied:
        events.extend(detect_collisions(predict_trajectories(engine), engine.fusion_cfg, engine.clock))
    return events


def stats_line(stats: FusionStats, sent: int | None = None, delivered: int | None = None) -> str:
    return _dumps(
        {
            "type": "stats",
            "sent": sent,
            "delivered": delivered,
            "ingested": stats.ingested,
            "accepted": stats.accepted,
            "late": stats.late_dropped,
            "applied": stats.applied,
            "degenerate": stats.degeneracy_events,
        }
    )

