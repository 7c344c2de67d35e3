"""Per-object particle filter over a planar constant-velocity state.

State columns follow the order ``[x_lat, dx_lat, x_lon, dx_lon]`` where the
"lat" axis is meters north and the "lon" axis is meters east of the local
reference origin. Weights are kept normalized to sum to one, so the point
estimate is the plain weighted sum of particle states.

Every function returns a new :class:`ParticleFilter`; inputs are never
mutated. All randomness comes from an explicitly passed
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geo import EnuPoint

X_LAT, DX_LAT, X_LON, DX_LON = range(4)
POS_COLS = [X_LAT, X_LON]
VEL_COLS = [DX_LAT, DX_LON]

# update() must follow predict() to the same instant
TIME_EPS = 1e-6


class TimeRegressionError(ValueError):
    pass


class TimeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class KinematicState:
    x_lat: float
    dx_lat: float
    x_lon: float
    dx_lon: float

    @property
    def position(self) -> EnuPoint:
        return EnuPoint(east=self.x_lon, north=self.x_lat)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_lat, self.dx_lat, self.x_lon, self.dx_lon], dtype=float)

    @classmethod
    def from_array(cls, a) -> "KinematicState":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class Particle:
    state: KinematicState
    weight: float


@dataclass(frozen=True)
class Observation:
    t: float
    pos: EnuPoint


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 1000
    meas_variance: float = 4.0
    process_noise_pos: float = 0.5
    process_noise_vel: float = 1.0
    init_pos_std: float = 3.0
    init_vel_std: float = 5.0
    ess_threshold_fraction: float = 0.5

    def __post_init__(self):
        if isinstance(self.n_particles, bool) or not isinstance(self.n_particles, int) or self.n_particles < 1:
            raise ValueError(f"n_particles must be a positive integer, got {self.n_particles!r}")
        if not self.meas_variance > 0:
            raise ValueError(f"meas_variance must be > 0, got {self.meas_variance}")
        for name in ("process_noise_pos", "process_noise_vel", "init_pos_std", "init_vel_std"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not 0 < self.ess_threshold_fraction <= 1:
            raise ValueError(
                f"ess_threshold_fraction must be in (0, 1], got {self.ess_threshold_fraction}"
            )


@dataclass(frozen=True, eq=False)
class ParticleFilter:
    states: np.ndarray  # (N, 4)
    weights: np.ndarray  # (N,)
    last_time: float
    # set by the most recent update() when every weight underflowed to zero
    degenerate: bool = field(default=False)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(KinematicState.from_array(s), float(w))
            for s, w in zip(self.states, self.weights)
        ]


def init_filter(obs: Observation, cfg: FilterConfig, rng: np.random.Generator) -> ParticleFilter:
    n = cfg.n_particles
    states = np.zeros((n, 4))
    states[:, X_LAT] = obs.pos.north
    states[:, X_LON] = obs.pos.east
    noise = rng.standard_normal((n, 4))
    states[:, POS_COLS] += cfg.init_pos_std * noise[:, POS_COLS]
    states[:, VEL_COLS] = cfg.init_vel_std * noise[:, VEL_COLS]
    return ParticleFilter(states, np.full(n, 1.0 / n), float(obs.t))


def transition_matrix(dt: float) -> np.ndarray:
    """Constant-velocity transition acting on ``[x_lat, dx_lat, x_lon, dx_lon]``."""
    m = np.eye(4)
    m[X_LAT, DX_LAT] = dt
    m[X_LON, DX_LON] = dt
    return m


def propagate_state(state: KinematicState, dt: float) -> KinematicState:
    """Noise-free constant-velocity propagation of a single state."""
    return KinematicState(
        state.x_lat + state.dx_lat * dt,
        state.dx_lat,
        state.x_lon + state.dx_lon * dt,
        state.dx_lon,
    )


def predict(
    pf: ParticleFilter,
    t_now: float,
    rng: np.random.Generator,
    cfg: FilterConfig | None = None,
) -> ParticleFilter:
    """Advance every particle to ``t_now``.

    Process noise is white in continuous time, so its standard deviation
    grows with sqrt(dt). ``cfg=None`` uses the default config noise levels.
    """
    if t_now < pf.last_time:
        raise TimeRegressionError(f"cannot predict backwards from {pf.last_time} to {t_now}")
    cfg = cfg or FilterConfig()
    dt = t_now - pf.last_time
    states = pf.states.copy()
    states[:, X_LAT] += states[:, DX_LAT] * dt
    states[:, X_LON] += states[:, DX_LON] * dt
    if dt > 0:
        noise = rng.standard_normal(states.shape)
        scale = math.sqrt(dt)
        states[:, POS_COLS] += cfg.process_noise_pos * scale * noise[:, POS_COLS]
        states[:, VEL_COLS] += cfg.process_noise_vel * scale * noise[:, VEL_COLS]
    return ParticleFilter(states, pf.weights.copy(), float(t_now))


def likelihood(state: KinematicState, obs: Observation, k: float) -> float:
    """Gaussian density of the particle-to-observation distance, variance ``k``."""
    d2 = (state.x_lat - obs.pos.north) ** 2 + (state.x_lon - obs.pos.east) ** 2
    return math.exp(-d2 / (2.0 * k)) / math.sqrt(2.0 * math.pi * k)


def _likelihoods(states: np.ndarray, obs: Observation, k: float) -> np.ndarray:
    d2 = (states[:, X_LAT] - obs.pos.north) ** 2 + (states[:, X_LON] - obs.pos.east) ** 2
    return np.exp(-d2 / (2.0 * k)) / math.sqrt(2.0 * math.pi * k)


def update(pf: ParticleFilter, obs: Observation, cfg: FilterConfig | None = None) -> ParticleFilter:
    if abs(obs.t - pf.last_time) > TIME_EPS:
        raise TimeMismatchError(
            f"observation at {obs.t} does not match filter time {pf.last_time}; predict first"
        )
    cfg = cfg or FilterConfig()
    w = pf.weights * _likelihoods(pf.states, obs, cfg.meas_variance)
    total = w.sum()
    if total > 0 and math.isfinite(total):
        return ParticleFilter(pf.states.copy(), w / total, pf.last_time)
    n = pf.n
    return ParticleFilter(pf.states.copy(), np.full(n, 1.0 / n), pf.last_time, degenerate=True)


def estimate(pf: ParticleFilter) -> KinematicState:
    # centred on the first particle: exact for a collapsed cloud
    ref = pf.states[0]
    return KinematicState.from_array(ref + pf.weights @ (pf.states - ref))


def effective_sample_size(pf: ParticleFilter) -> float:
    return float(1.0 / np.sum(pf.weights**2))


def systematic_indices(weights: np.ndarray, u: float) -> np.ndarray:
    """Indices picked by systematic resampling with offset ``u`` in [0, 1).

    The N sample positions are ``(u + i) / N``; particle j is picked once for
    every position falling in its slice of the cumulative weight.
    """
    n = len(weights)
    positions = (u + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    idx = np.searchsorted(cumulative, positions, side="right")
    # cumulative[-1] may land a hair below 1.0
    return np.minimum(idx, n - 1)


def resample(pf: ParticleFilter, rng: np.random.Generator) -> ParticleFilter:
    idx = systematic_indices(pf.weights, rng.random())
    n = pf.n
    return ParticleFilter(pf.states[idx].copy(), np.full(n, 1.0 / n), pf.last_time, pf.degenerate)


def step(
    pf: ParticleFilter, obs: Observation, cfg: FilterConfig, rng: np.random.Generator
) -> ParticleFilter:
    pf = update(predict(pf, obs.t, rng, cfg), obs, cfg)
    if effective_sample_size(pf) < cfg.ess_threshold_fraction * pf.n:
        pf = resample(pf, rng)
    return pf
