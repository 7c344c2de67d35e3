"""Multi-camera tracklet fusion with per-object particle filters."""

from .geo import EnuPoint, GeoPoint, ReferenceOrigin, enu_distance, enu_to_geo, geo_to_enu
from .model import ClassLabel, Tracklet, TrackletMessage, TrackPoint, decode_message, encode_message
from .particle_filter import FilterConfig, KinematicState, Observation, ParticleFilter

__all__ = [
    "ClassLabel",
    "EnuPoint",
    "FilterConfig",
    "GeoPoint",
    "KinematicState",
    "Observation",
    "ParticleFilter",
    "ReferenceOrigin",
    "TrackPoint",
    "Tracklet",
    "TrackletMessage",
    "decode_message",
    "encode_message",
    "enu_distance",
    "enu_to_geo",
    "geo_to_enu",
]

__version__ = "0.1.0"
