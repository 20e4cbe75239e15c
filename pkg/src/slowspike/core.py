"""Domain types shared across the pipeline.

Voltages are millivolts and times are seconds everywhere. The eight
differential channels form an ordered ring of compass directions, with
N at index 0 and indices increasing clockwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "Direction",
    "DIRECTIONS",
    "InputError",
    "ConfigError",
    "InvariantError",
    "ChannelSeries",
    "Recording",
    "SpikeEvent",
    "Burst",
    "AnalysisConfig",
    "direction_of_label",
    "separation",
]


class InputError(ValueError):
    """Malformed or insufficient input data."""

    def __init__(self, message, *, module=None, session=None, channel=None):
        self.module = module
        self.session = session
        self.channel = channel
        context = [
            f"{k}={v}"
            for k, v in (("module", module), ("session", session), ("channel", channel))
            if v is not None
        ]
        super().__init__(message + (f" [{', '.join(context)}]" if context else ""))


class ConfigError(ValueError):
    """Invalid analysis or generator configuration."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


class Direction(IntEnum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    @property
    def label(self) -> str:
        return self.name

    @property
    def index(self) -> int:
        return int(self)

    @property
    def angle(self) -> float:
        """Compass angle in degrees, clockwise from North."""
        return 45.0 * int(self)

    def __str__(self):
        return self.name


DIRECTIONS: tuple[Direction, ...] = tuple(Direction)


def direction_of_label(label: str) -> Direction:
    """Look up a direction by its compass label (case-insensitive)."""
    try:
        return Direction[str(label).strip().upper()]
    except KeyError:
        raise InputError(f"unknown compass label {label!r}; expected one of "
                         f"{', '.join(d.label for d in DIRECTIONS)}") from None


def separation(a: Direction, b: Direction, metric: str = "linear") -> int:
    """Index distance between two directions.

    ``linear`` treats the channels as an ordered array (|i - j|); ``circular``
    measures distance around the star ring.
    """
    d = abs(int(a) - int(b))
    if metric == "linear":
        return d
    if metric == "circular":
        return min(d, len(DIRECTIONS) - d)
    raise ConfigError(f"unknown separation metric {metric!r}")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    direction: Direction
    samples: np.ndarray
    validity_mask: np.ndarray

    def __post_init__(self):
        samples = _frozen_array(self.samples, float)
        mask = _frozen_array(self.validity_mask, bool)
        if samples.ndim != 1 or samples.shape != mask.shape:
            raise InputError("samples and validity_mask must be 1-D of equal length",
                             channel=Direction(self.direction).label)
        if not np.all(np.isfinite(samples[mask])):
            raise InputError("valid samples must be finite", channel=Direction(self.direction).label)
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "validity_mask", mask)

    def __len__(self):
        return len(self.samples)

    @property
    def n_valid(self) -> int:
        return int(self.validity_mask.sum())


@dataclass(frozen=True, eq=False)
class Recording:
    """Time-aligned eight-channel recording."""

    session_id: str
    channels: tuple[ChannelSeries, ...]
    sample_rate: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        channels = tuple(self.channels)
        object.__setattr__(self, "channels", channels)
        if len(channels) != len(DIRECTIONS):
            raise InputError(f"expected {len(DIRECTIONS)} channels, got {len(channels)}",
                             session=self.session_id)
        for d, ch in zip(DIRECTIONS, channels):
            if ch.direction != d:
                raise InputError(f"channel {ch.direction.label} found at position of {d.label}",
                                 session=self.session_id)
        n = {len(ch) for ch in channels}
        if len(n) != 1:
            raise InputError("channels differ in length", session=self.session_id)
        if n.pop() < 2:
            raise InputError("recording needs at least 2 samples", session=self.session_id)
        if not (self.sample_rate > 0 and np.isfinite(self.sample_rate)):
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}",
                             session=self.session_id)

    @classmethod
    def from_arrays(cls, session_id, samples, valid=None, sample_rate=1.0, t0=0.0):
        """Build a recording from an ``(8, n)`` array; NaN marks invalid samples."""
        samples = np.asarray(samples, dtype=float)
        if valid is None:
            valid = np.isfinite(samples)
        valid = np.asarray(valid, dtype=bool)
        if samples.ndim != 2 or samples.shape[0] != len(DIRECTIONS) or valid.shape != samples.shape:
            raise InputError(f"expected an (8, n) sample array, got shape {samples.shape}",
                             session=session_id)
        samples = np.where(valid, samples, np.nan)
        channels = [ChannelSeries(d, samples[i], valid[i]) for i, d in enumerate(DIRECTIONS)]
        return cls(session_id, tuple(channels), float(sample_rate), float(t0))

    def __len__(self):
        return len(self.channels[0])

    @property
    def n_samples(self) -> int:
        return len(self)

    @property
    def times(self) -> np.ndarray:
        """Elapsed seconds of each sample, relative to ``t0``."""
        return np.arange(len(self)) / self.sample_rate

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    @property
    def values(self) -> np.ndarray:
        """``(8, n)`` sample matrix with NaN at invalid samples."""
        return np.stack([np.where(ch.validity_mask, ch.samples, np.nan) for ch in self.channels])

    @property
    def valid(self) -> np.ndarray:
        return np.stack([ch.validity_mask for ch in self.channels])

    def channel(self, direction) -> ChannelSeries:
        return self.channels[int(direction)]


@dataclass(frozen=True)
class SpikeEvent:
    direction: Direction
    onset_s: float
    peak_s: float
    offset_s: float
    amplitude_mV: float

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s

    def shifted(self, dt: float) -> "SpikeEvent":
        return SpikeEvent(self.direction, self.onset_s + dt, self.peak_s + dt,
                          self.offset_s + dt, self.amplitude_mV)


@dataclass(frozen=True)
class Burst:
    """A train of spikes on one channel with no quiescent interval above the burst gap."""

    direction: Direction
    spikes: tuple[SpikeEvent, ...]

    def __post_init__(self):
        if not self.spikes:
            raise InvariantError("a burst holds at least one spike")

    @property
    def onset_s(self) -> float:
        return self.spikes[0].onset_s

    @property
    def offset_s(self) -> float:
        return max(s.offset_s for s in self.spikes)

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s

    @property
    def size(self) -> int:
        return len(self.spikes)


SEPARATION_METRICS = ("linear", "circular")


@dataclass(frozen=True)
class AnalysisConfig:
    detrend_window_s: float = 3600.0
    dispersion_k: float = 4.0
    min_spike_duration_s: float = 30.0
    merge_gap_s: float = 10.0
    burst_gap_s: float = 600.0
    propagation_window_s: float = 3600.0
    reference_direction: Direction = Direction.E
    separation_metric: str = "linear"
    max_gap_interp_samples: int = 5

    def __post_init__(self):
        ref = self.reference_direction
        if not isinstance(ref, Direction):
            ref = direction_of_label(ref) if isinstance(ref, str) else Direction(ref)
            object.__setattr__(self, "reference_direction", ref)
        for name in ("detrend_window_s", "min_spike_duration_s", "merge_gap_s",
                     "burst_gap_s", "propagation_window_s", "dispersion_k"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.separation_metric not in SEPARATION_METRICS:
            raise ConfigError(f"separation_metric must be one of {SEPARATION_METRICS}, "
                              f"got {self.separation_metric!r}")
        if int(self.max_gap_interp_samples) != self.max_gap_interp_samples \
                or self.max_gap_interp_samples < 0:
            raise ConfigError("max_gap_interp_samples must be a non-negative integer")

    def as_dict(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["reference_direction"] = self.reference_direction.label
        return out
