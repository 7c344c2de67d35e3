"""Greedy nearest-neighbour gating of observations onto tracks.

Association looks only at geometry: an :class:`Observation` carries a time
and a position, nothing about which camera produced it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geo import EnuPoint, enu_distance
from .model import ClassLabel
from .particle_filter import (
    FilterConfig,
    Observation,
    ParticleFilter,
    estimate,
    init_filter,
    propagate_state,
    step,
)


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    RETIRED = "retired"


_ALLOWED = {
    (TrackStatus.TENTATIVE, TrackStatus.CONFIRMED),
    (TrackStatus.TENTATIVE, TrackStatus.RETIRED),
    (TrackStatus.CONFIRMED, TrackStatus.RETIRED),
}


@dataclass(frozen=True)
class AssociationConfig:
    gate_radius: float = 10.0
    confirm_after: int = 3
    stale_after: float = 3.0

    def __post_init__(self):
        if not self.gate_radius > 0:
            raise ValueError(f"gate_radius must be > 0, got {self.gate_radius}")
        if isinstance(self.confirm_after, bool) or not isinstance(self.confirm_after, int) or self.confirm_after < 1:
            raise ValueError(f"confirm_after must be a positive integer, got {self.confirm_after!r}")
        if not self.stale_after > 0:
            raise ValueError(f"stale_after must be > 0, got {self.stale_after}")


@dataclass
class Track:
    track_id: int
    filter: ParticleFilter
    last_obs_time: float
    obs_count: int = 1
    class_votes: Counter = field(default_factory=Counter)
    status: TrackStatus = TrackStatus.TENTATIVE

    def transition(self, new: TrackStatus) -> None:
        if (self.status, new) not in _ALLOWED:
            raise ValueError(f"track {self.track_id}: illegal transition {self.status.value} -> {new.value}")
        self.status = new

    @property
    def class_label(self) -> ClassLabel:
        """Majority vote over contributing observations; ties give UNKNOWN."""
        ranked = self.class_votes.most_common()
        if not ranked:
            return ClassLabel.UNKNOWN
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            return ClassLabel.UNKNOWN
        return ClassLabel(ranked[0][0])

    def predicted_position(self, t: float) -> EnuPoint:
        """Noise-free extrapolation of the filter estimate to ``t``."""
        dt = max(0.0, t - self.filter.last_time)
        return propagate_state(estimate(self.filter), dt).position


@dataclass(frozen=True)
class Matched:
    track_id: int


@dataclass(frozen=True)
class SpawnNew:
    pass


Decision = Matched | SpawnNew


@dataclass
class TrackTable:
    """Live tracks keyed by id plus the retired archive. Single writer."""

    tracks: dict[int, Track] = field(default_factory=dict)
    retired: list[Track] = field(default_factory=list)
    next_id: int = 0

    def live(self) -> list[Track]:
        return [self.tracks[k] for k in sorted(self.tracks)]

    def confirmed(self) -> list[Track]:
        return [t for t in self.live() if t.status is TrackStatus.CONFIRMED]


def associate(tracks, obs: Observation, cfg: AssociationConfig) -> Decision:
    """Nearest live track within the gate, or spawn.

    Track estimates are extrapolated to ``obs.t`` with the noise-free motion
    model before measuring; this equals the mean of a predicted particle
    cloud without spending random draws on tracks that will not be updated.
    """
    best = None
    for track in tracks:
        if track.status is TrackStatus.RETIRED:
            continue
        d = enu_distance(track.predicted_position(obs.t), obs.pos)
        if d > cfg.gate_radius:
            continue
        key = (d, track.track_id)
        if best is None or key < best:
            best = key
    if best is None:
        return SpawnNew()
    return Matched(best[1])


def apply_decision(
    table: TrackTable,
    decision: Decision,
    obs: Observation,
    filter_cfg: FilterConfig,
    assoc_cfg: AssociationConfig,
    rng: np.random.Generator,
    class_label: ClassLabel = ClassLabel.UNKNOWN,
) -> Track:
    """Apply ``decision`` in place and return the touched track."""
    if isinstance(decision, Matched):
        track = table.tracks[decision.track_id]
        track.filter = step(track.filter, obs, filter_cfg, rng)
        track.obs_count += 1
        track.last_obs_time = obs.t
        track.class_votes[ClassLabel(class_label).value] += 1
        if track.status is TrackStatus.TENTATIVE and track.obs_count >= assoc_cfg.confirm_after:
            track.transition(TrackStatus.CONFIRMED)
        return track

    track = Track(
        track_id=table.next_id,
        filter=init_filter(obs, filter_cfg, rng),
        last_obs_time=obs.t,
        class_votes=Counter({ClassLabel(class_label).value: 1}),
    )
    if assoc_cfg.confirm_after <= 1:
        track.transition(TrackStatus.CONFIRMED)
    table.tracks[track.track_id] = track
    table.next_id += 1
    return track


def gc_tracks(table: TrackTable, now: float, cfg: AssociationConfig) -> list[Track]:
    """Retire every live track idle for more than ``stale_after`` seconds."""
    if not math.isfinite(now):
        return []
    retired = []
    for track in table.live():
        if now - track.last_obs_time > cfg.stale_after:
            track.transition(TrackStatus.RETIRED)
            del table.tracks[track.track_id]
            table.retired.append(track)
            retired.append(track)
    return retired
