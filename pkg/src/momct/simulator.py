"""Scenario simulator standing in for the camera agents and the radio link.

Generates ground-truth motion, per-camera noisy detections wrapped as
tracklets (one point each unless a camera batches more), and a lossy,
jittery delivery schedule. Everything
is a pure function of the :class:`ScenarioConfig` (seed included).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geo import EnuPoint, GeoPoint, ReferenceOrigin, enu_distance, enu_to_geo, geo_to_enu
from .model import ClassLabel, Tracklet, TrackletMessage, TrackPoint

MAX_SPEED = 60.0
TRUTH_PERIOD = 0.1
_GRID_EPS = 1e-9


class ConfigError(ValueError):
    pass


class OutOfSpanError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantVelocity:
    vn: float
    ve: float


@dataclass(frozen=True)
class Waypoints:
    points: tuple[tuple[float, GeoPoint], ...]


@dataclass(frozen=True)
class ObjectSpec:
    object_id: int
    class_label: ClassLabel
    initial_position: GeoPoint
    motion: ConstantVelocity | Waypoints


@dataclass(frozen=True)
class CameraSpec:
    camera_id: str
    position: GeoPoint
    range: float = 150.0
    frame_period: float = 0.1
    p_detect: float = 0.9
    meas_noise_std: float = 2.0
    mounted_on: int | None = None
    # detections of one object batched into each tracklet message
    points_per_message: int = 1


@dataclass(frozen=True)
class ChannelSpec:
    base_latency: float = 0.05
    jitter_std: float = 0.02
    loss_prob: float = 0.01


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    origin: ReferenceOrigin
    objects: tuple[ObjectSpec, ...]
    cameras: tuple[CameraSpec, ...]
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    seed: int = 0


@dataclass(frozen=True)
class GroundTruthSample:
    t: float
    object_id: int
    pos: GeoPoint
    vel: tuple[float, float]  # (vn, ve)

    def to_line(self) -> str:
        return json.dumps(
            {"type": "truth", "t": self.t, "id": self.object_id, "lat": self.pos.lat,
             "lon": self.pos.lon, "vn": self.vel[0], "ve": self.vel[1]},
            separators=(",", ":"),
            allow_nan=False,
        ) + "\n"


@dataclass
class ScenarioResult:
    truth: list[GroundTruthSample]
    messages: list[TrackletMessage]  # in delivery order
    delivery_times: list[float]
    provenance: list[int]  # true object id per delivered message
    sent: int = 0  # messages handed to the channel
    dropped: int = 0


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (detection, channel, fusion) generators derived from one seed."""
    ss = np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _waypoints_enu(obj: ObjectSpec, origin: ReferenceOrigin) -> tuple[np.ndarray, np.ndarray]:
    ts = np.array([t for t, _ in obj.motion.points], dtype=float)
    xy = np.array([(e.east, e.north) for e in (geo_to_enu(g, origin) for _, g in obj.motion.points)])
    return ts, xy


def span(obj: ObjectSpec) -> tuple[float, float]:
    if isinstance(obj.motion, Waypoints):
        return obj.motion.points[0][0], obj.motion.points[-1][0]
    return 0.0, math.inf


def truth_at(obj: ObjectSpec, t: float, origin: ReferenceOrigin) -> tuple[EnuPoint, tuple[float, float]]:
    """True ENU position and (vn, ve) velocity of ``obj`` at time ``t``."""
    if isinstance(obj.motion, ConstantVelocity):
        p0 = geo_to_enu(obj.initial_position, origin)
        v = obj.motion
        return EnuPoint(p0.east + v.ve * t, p0.north + v.vn * t), (v.vn, v.ve)

    ts, xy = _waypoints_enu(obj, origin)
    if not ts[0] <= t <= ts[-1]:
        raise OutOfSpanError(f"object {obj.object_id}: t={t} outside waypoint span [{ts[0]}, {ts[-1]}]")
    # segment starting at t; the final instant belongs to the last segment
    i = min(int(np.searchsorted(ts, t, side="right")) - 1, len(ts) - 2)
    frac = (t - ts[i]) / (ts[i + 1] - ts[i])
    p = xy[i] + frac * (xy[i + 1] - xy[i])
    v = (xy[i + 1] - xy[i]) / (ts[i + 1] - ts[i])
    return EnuPoint(float(p[0]), float(p[1])), (float(v[1]), float(v[0]))


def camera_observe(
    cam: CameraSpec,
    cam_pos: EnuPoint,
    obj_pos: EnuPoint,
    t: float,
    rng: np.random.Generator,
    origin: ReferenceOrigin,
) -> TrackPoint | None:
    # fixed draw count per call keeps the random stream aligned across geometries
    u = rng.random()
    noise = rng.standard_normal(2) * cam.meas_noise_std
    if enu_distance(cam_pos, obj_pos) > cam.range or u >= cam.p_detect:
        return None
    seen = EnuPoint(obj_pos.east + float(noise[0]), obj_pos.north + float(noise[1]))
    return TrackPoint(t, enu_to_geo(seen, origin))


def channel_deliver(send_t: float, spec: ChannelSpec, rng: np.random.Generator) -> float | None:
    """Delivery time for a message sent at ``send_t``, or None if lost."""
    if rng.random() < spec.loss_prob:
        return None
    return send_t + spec.base_latency + abs(float(rng.normal(0.0, 1.0))) * spec.jitter_std


def frame_times(period: float, duration: float) -> np.ndarray:
    n = int(math.floor(duration / period - _GRID_EPS)) + 1
    return period * np.arange(n)


def validate_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    problems = []
    if not (math.isfinite(cfg.duration) and cfg.duration > 0):
        problems.append("duration must be > 0")
    if not cfg.origin.origin.is_valid:
        problems.extend(cfg.origin.origin.problems())
    elif abs(cfg.origin.origin.lat) >= 89:
        problems.append("origin too close to a pole")
    if not cfg.objects:
        problems.append("at least one object required")
    if not cfg.cameras:
        problems.append("at least one camera required")
    ids = [o.object_id for o in cfg.objects]
    if len(set(ids)) != len(ids):
        problems.append("duplicate object ids")
    for o in cfg.objects:
        if isinstance(o.motion, ConstantVelocity):
            if math.hypot(o.motion.vn, o.motion.ve) > MAX_SPEED:
                problems.append(f"object {o.object_id}: speed exceeds {MAX_SPEED} m/s")
        else:
            pts = o.motion.points
            if len(pts) < 2:
                problems.append(f"object {o.object_id}: need at least two waypoints")
                continue
            if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
                problems.append(f"object {o.object_id}: waypoint times must be strictly increasing")
                continue
            ts, xy = _waypoints_enu(o, cfg.origin)
            speeds = np.linalg.norm(np.diff(xy, axis=0), axis=1) / np.diff(ts)
            if np.any(speeds > MAX_SPEED):
                problems.append(f"object {o.object_id}: segment speed exceeds {MAX_SPEED} m/s")
    cam_ids = [c.camera_id for c in cfg.cameras]
    if len(set(cam_ids)) != len(cam_ids):
        problems.append("duplicate camera ids")
    for c in cfg.cameras:
        if not c.range > 0 or not c.frame_period > 0:
            problems.append(f"camera {c.camera_id}: range and frame_period must be > 0")
        if not 0 <= c.p_detect <= 1:
            problems.append(f"camera {c.camera_id}: p_detect must be in [0, 1]")
        if c.meas_noise_std < 0:
            problems.append(f"camera {c.camera_id}: meas_noise_std must be >= 0")
        if isinstance(c.points_per_message, bool) or not isinstance(c.points_per_message, int) or c.points_per_message < 1:
            problems.append(f"camera {c.camera_id}: points_per_message must be a positive integer")
        if c.mounted_on is not None and c.mounted_on not in ids:
            problems.append(f"camera {c.camera_id}: mounted_on unknown object {c.mounted_on}")
    ch = cfg.channel
    if ch.base_latency < 0 or ch.jitter_std < 0 or not 0 <= ch.loss_prob <= 1:
        problems.append("channel: base_latency, jitter_std must be >= 0 and loss_prob in [0, 1]")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        problems.append("seed must be a non-negative integer")
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def _present(obj: ObjectSpec, t: float) -> bool:
    lo, hi = span(obj)
    return lo <= t <= hi


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    validate_scenario(cfg)
    detect_rng, channel_rng, _ = rng_streams(cfg.seed)
    origin = cfg.origin
    by_id = {o.object_id: o for o in cfg.objects}

    truth = []
    n_truth = int(math.floor(cfg.duration / TRUTH_PERIOD + _GRID_EPS)) + 1
    for k in range(n_truth):
        t = TRUTH_PERIOD * k
        for obj in cfg.objects:
            if not _present(obj, t):
                continue
            pos, vel = truth_at(obj, t, origin)
            truth.append(GroundTruthSample(t, obj.object_id, enu_to_geo(pos, origin), vel))

    frames = sorted(
        (float(t), ci)
        for ci, cam in enumerate(cfg.cameras)
        for t in frame_times(cam.frame_period, cfg.duration)
    )
    scheduled = []  # (delivery, send order, message, object id)
    batches: dict[tuple[int, int], list[TrackPoint]] = {}
    sent = dropped = 0

    def send(ci: int, obj: ObjectSpec, points: list[TrackPoint]) -> None:
        nonlocal sent, dropped
        cam = cfg.cameras[ci]
        msg = TrackletMessage(
            sent_at=points[-1].t,
            tracklet=Tracklet(cam.camera_id, obj.object_id, obj.class_label, tuple(points)),
        )
        sent += 1
        delivery = channel_deliver(msg.sent_at, cfg.channel, channel_rng)
        if delivery is None:
            dropped += 1
            return
        scheduled.append((delivery, len(scheduled), msg, obj.object_id))

    for t, ci in frames:
        cam = cfg.cameras[ci]
        if cam.mounted_on is None:
            cam_pos = geo_to_enu(cam.position, origin)
        else:
            carrier = by_id[cam.mounted_on]
            if not _present(carrier, t):
                continue
            cam_pos = truth_at(carrier, t, origin)[0]
        for oi, obj in enumerate(cfg.objects):
            if obj.object_id == cam.mounted_on or not _present(obj, t):
                continue
            point = camera_observe(cam, cam_pos, truth_at(obj, t, origin)[0], t, detect_rng, origin)
            if point is None:
                continue
            batch = batches.setdefault((ci, oi), [])
            batch.append(point)
            if len(batch) == cam.points_per_message:
                send(ci, obj, batch)
                batches[(ci, oi)] = []

    # partial batches go out at the end, in order of their last point
    leftovers = sorted((b[-1].t, ci, oi) for (ci, oi), b in batches.items() if b)
    for _, ci, oi in leftovers:
        send(ci, cfg.objects[oi], batches[(ci, oi)])

    scheduled.sort(key=lambda s: (s[0], s[1]))
    return ScenarioResult(
        truth=truth,
        messages=[s[2] for s in scheduled],
        delivery_times=[s[0] for s in scheduled],
        provenance=[s[3] for s in scheduled],
        sent=sent,
        dropped=dropped,
    )


# --- config file parsing -------------------------------------------------


def _geo(d, what: str) -> GeoPoint:
    if not isinstance(d, dict) or "lat" not in d or "lon" not in d:
        raise ConfigError(f"{what}: expected an object with 'lat' and 'lon'")
    return GeoPoint(float(d["lat"]), float(d["lon"]))


def _motion(d: dict, oid) -> ConstantVelocity | Waypoints:
    kind = d.get("type", "constant_velocity")
    if kind == "constant_velocity":
        return ConstantVelocity(float(d.get("vn", 0.0)), float(d.get("ve", 0.0)))
    if kind == "waypoints":
        pts = tuple((float(p["t"]), _geo(p, f"object {oid} waypoint")) for p in d["points"])
        return Waypoints(pts)
    raise ConfigError(f"object {oid}: unknown motion type {kind!r}")


def scenario_from_dict(d: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from its JSON form. Raises ConfigError."""
    try:
        raw_origin = d["origin"]
        if isinstance(raw_origin, dict) and "origin" in raw_origin:
            raw_origin = raw_origin["origin"]
        objects = []
        for o in d["objects"]:
            motion = _motion(o.get("motion", {}), o.get("object_id"))
            if "initial_position" in o:
                init = _geo(o["initial_position"], f"object {o['object_id']}")
            elif isinstance(motion, Waypoints) and motion.points:
                init = motion.points[0][1]
            else:
                raise ConfigError(f"object {o['object_id']}: initial_position required")
            objects.append(ObjectSpec(int(o["object_id"]), ClassLabel(o.get("class_label", "vehicle")), init, motion))
        cameras = []
        for c in d["cameras"]:
            c = dict(c)
            cam_id = str(c.pop("camera_id"))
            mounted = c.pop("mounted_on", None)
            if "position" in c:
                pos = _geo(c.pop("position"), f"camera {cam_id}")
            elif mounted is not None and any(o.object_id == int(mounted) for o in objects):
                # informational only; mounted cameras follow the carrier's truth
                pos = next(o.initial_position for o in objects if o.object_id == int(mounted))
            else:
                raise ConfigError(f"camera {cam_id}: position required")
            ppm = c.pop("points_per_message", 1)
            cameras.append(CameraSpec(cam_id, pos, mounted_on=None if mounted is None else int(mounted),
                                      points_per_message=ppm, **{k: float(v) for k, v in c.items()}))
        cfg = ScenarioConfig(
            duration=float(d["duration"]),
            origin=ReferenceOrigin(_geo(raw_origin, "origin")),
            objects=tuple(objects),
            cameras=tuple(cameras),
            channel=ChannelSpec(**{k: float(v) for k, v in d.get("channel", {}).items()}),
            seed=d.get("seed", 0),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario config: {exc!r}") from None
    return validate_scenario(cfg)


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read a JSON scenario file. I/O problems surface as OSError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return scenario_from_dict(data)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    def geo(g: GeoPoint) -> dict:
        return {"lat": g.lat, "lon": g.lon}

    def motion(m) -> dict:
        if isinstance(m, ConstantVelocity):
            return {"type": "constant_velocity", "vn": m.vn, "ve": m.ve}
        return {"type": "waypoints", "points": [{"t": t, **geo(g)} for t, g in m.points]}

    return {
        "duration": cfg.duration,
        "origin": geo(cfg.origin.origin),
        "objects": [
            {"object_id": o.object_id, "class_label": ClassLabel(o.class_label).value,
             "initial_position": geo(o.initial_position), "motion": motion(o.motion)}
            for o in cfg.objects
        ],
        "cameras": [
            {"camera_id": c.camera_id, "position": geo(c.position), "range": c.range,
             "frame_period": c.frame_period, "p_detect": c.p_detect,
             "meas_noise_std": c.meas_noise_std, "mounted_on": c.mounted_on,
             "points_per_message": c.points_per_message}
            for c in cfg.cameras
        ],
        "channel": {"base_latency": cfg.channel.base_latency, "jitter_std": cfg.channel.jitter_std,
                    "loss_prob": cfg.channel.loss_prob},
        "seed": cfg.seed,
    }
