"""Tracklet types and the line-oriented wire format carrying them to the edge.

Wire format, one message per line (UTF-8 JSON, LF terminated)::

    {"v":1,"sent_at":3.2,"camera_id":"cam-a","object_id":7,"class":"vehicle",
     "points":[{"t":3.2,"lat":41.38,"lon":2.17}]}

Encoders always emit keys in that order; decoders accept any order.
Floats are rendered with Python's shortest round-trip repr, so encoding is
byte-deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geo import GeoPoint, ReferenceOrigin, geo_to_enu

SCHEMA_VERSION = 1
MAX_TRACKLET_SPAN_M = 100_000.0


class ClassLabel(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CAMERA = "camera"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class TrackPoint:
    t: float
    pos: GeoPoint


@dataclass(frozen=True)
class Tracklet:
    camera_id: str
    local_object_id: int
    class_label: ClassLabel
    points: tuple[TrackPoint, ...]


@dataclass(frozen=True)
class TrackletMessage:
    sent_at: float
    tracklet: Tracklet
    schema_version: int = SCHEMA_VERSION


class InvalidTracklet(ValueError):
    """Raised with the complete list of invariant violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DecodeError(ValueError):
    pass


def tracklet_violations(t: Tracklet) -> list[str]:
    violations = []
    if not t.points:
        return ["empty points"]

    times = [p.t for p in t.points]
    if not all(math.isfinite(x) for x in times):
        violations.append("non-finite timestamps")
    elif any(x < 0 for x in times):
        violations.append("negative timestamps")
    if any(b <= a for a, b in zip(times, times[1:])):
        violations.append("non-increasing timestamps")

    bad = [p.pos for p in t.points if not p.pos.is_valid]
    if bad:
        violations.append(
            "out-of-range coordinates: " + ", ".join(f"({g.lat}, {g.lon})" for g in bad)
        )
    elif len(t.points) > 1:
        ref = ReferenceOrigin(t.points[0].pos)
        xy = np.array([(e.east, e.north) for e in (geo_to_enu(p.pos, ref) for p in t.points)])
        span = np.max(np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1))
        if span > MAX_TRACKLET_SPAN_M:
            violations.append(f"points span {span:.0f} m exceeds {MAX_TRACKLET_SPAN_M:.0f} m")
    return violations


def validate_tracklet(t: Tracklet) -> Tracklet:
    """Return ``t`` unchanged, or raise :class:`InvalidTracklet` listing every violation."""
    violations = tracklet_violations(t)
    if violations:
        raise InvalidTracklet(violations)
    return t


def message_violations(m: TrackletMessage) -> list[str]:
    violations = []
    if m.schema_version != SCHEMA_VERSION:
        violations.append(f"unknown schema version {m.schema_version}")
    if not math.isfinite(m.sent_at):
        violations.append("non-finite sent_at")
    violations.extend(tracklet_violations(m.tracklet))
    if m.tracklet.points and m.sent_at < m.tracklet.points[-1].t:
        violations.append("sent_at precedes last point timestamp")
    return violations


def encode_message(m: TrackletMessage) -> bytes:
    tr = m.tracklet
    payload = {
        "v": m.schema_version,
        "sent_at": float(m.sent_at),
        "camera_id": tr.camera_id,
        "object_id": int(tr.local_object_id),
        "class": ClassLabel(tr.class_label).value,
        "points": [
            {"t": float(p.t), "lat": float(p.pos.lat), "lon": float(p.pos.lon)}
            for p in tr.points
        ],
    }
    line = json.dumps(payload, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    return (line + "\n").encode("utf-8")


def _number(obj: dict, key: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DecodeError(f"field {key!r} must be a number, got {type(value).__name__}")
    return float(value)


def decode_message(data: bytes | str) -> TrackletMessage:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"not valid UTF-8: {exc}") from None
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed message: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("message must be a JSON object")

    try:
        version = obj["v"]
        if isinstance(version, bool) or not isinstance(version, int):
            raise DecodeError("field 'v' must be an integer")
        if version != SCHEMA_VERSION:
            raise DecodeError(f"unknown schema version {version}")

        camera_id = obj["camera_id"]
        if not isinstance(camera_id, str):
            raise DecodeError("field 'camera_id' must be a string")
        object_id = obj["object_id"]
        if isinstance(object_id, bool) or not isinstance(object_id, int):
            raise DecodeError("field 'object_id' must be an integer")
        try:
            label = ClassLabel(obj["class"])
        except ValueError:
            raise DecodeError(f"unknown class {obj['class']!r}") from None

        raw_points = obj["points"]
        if not isinstance(raw_points, list):
            raise DecodeError("field 'points' must be a list")
        points = []
        for rp in raw_points:
            if not isinstance(rp, dict):
                raise DecodeError("each point must be an object")
            points.append(TrackPoint(_number(rp, "t"), GeoPoint(_number(rp, "lat"), _number(rp, "lon"))))
        sent_at = _number(obj, "sent_at")
    except KeyError as exc:
        raise DecodeError(f"missing field {exc.args[0]!r}") from None

    msg = TrackletMessage(
        sent_at=sent_at,
        tracklet=Tracklet(camera_id, object_id, label, tuple(points)),
        schema_version=version,
    )
    violations = message_violations(msg)
    if violations:
        raise DecodeError("invalid message: " + "; ".join(violations))
    return msg
