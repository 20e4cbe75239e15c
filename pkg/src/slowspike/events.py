"""Spike detection, per-direction statistics and burst grouping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (DIRECTIONS, AnalysisConfig, Burst, Direction, InputError, SpikeEvent)
from .ingest import DetrendedRecording

__all__ = [
    "MAD_TO_SIGMA",
    "MIN_DISPERSION_SAMPLES",
    "SpikeTrain",
    "DirectionStats",
    "IsiHistogram",
    "estimate_dispersion",
    "find_excursions",
    "detect_spikes",
    "direction_stats",
    "pooled_direction_stats",
    "group_bursts",
    "isi_histogram",
]

MAD_TO_SIGMA = 1.4826
MIN_DISPERSION_SAMPLES = 100


@dataclass(frozen=True)
class SpikeTrain:
    direction: Direction
    spikes: tuple[SpikeEvent, ...]
    observed_duration_s: float
    threshold_mV: float = float("nan")
    flat: bool = False

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(self.spikes))
        onsets = [s.onset_s for s in self.spikes]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise InputError("spike onsets must be strictly increasing",
                             module="events", channel=Direction(self.direction).label)

    def __len__(self):
        return len(self.spikes)

    @property
    def onsets(self) -> np.ndarray:
        return np.array([s.onset_s for s in self.spikes], dtype=float)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([s.amplitude_mV for s in self.spikes], dtype=float)


@dataclass(frozen=True)
class DirectionStats:
    direction: Direction
    spike_count: int
    observed_duration_s: float
    rate_per_min: float
    amplitude_quartiles_mV: tuple[float, float, float]
    amplitude_max_mV: float
    isi_list_s: tuple[float, ...] = field(repr=False)


def estimate_dispersion(residuals) -> float:
    """Robust noise scale: 1.4826 times the median absolute deviation.

    NaN entries are treated as invalid and ignored.
    """
    x = np.asarray(residuals, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < MIN_DISPERSION_SAMPLES:
        raise InputError(f"dispersion needs at least {MIN_DISPERSION_SAMPLES} valid samples, "
                         f"got {x.size}", module="events")
    return MAD_TO_SIGMA * float(np.median(np.abs(x - np.median(x))))


def find_excursions(residual, threshold, merge_gap_samples, min_samples):
    """Index spans ``[start, stop)`` where ``|residual| >= threshold``.

    Spans separated by fewer than ``merge_gap_samples`` sub-threshold samples
    are merged, then spans shorter than ``min_samples`` are dropped. NaN never
    counts as supra-threshold.
    """
    above = np.abs(np.nan_to_num(residual, nan=0.0)) >= threshold
    if not above.any():
        return np.empty((0, 2), dtype=int)
    edges = np.diff(np.concatenate(([0], above.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    if len(starts) > 1:
        keep = (starts[1:] - stops[:-1]) >= merge_gap_samples
        starts = starts[np.concatenate(([True], keep))]
        stops = stops[np.concatenate((keep, [True]))]
    long_enough = (stops - starts) >= min_samples
    return np.column_stack((starts[long_enough], stops[long_enough]))


def _detect_channel(direction, residual, rate, cfg):
    valid = np.isfinite(residual)
    observed = valid.sum() / rate
    sigma = estimate_dispersion(residual)
    theta = cfg.dispersion_k * sigma
    if theta <= 0:
        return SpikeTrain(direction, (), observed, theta, flat=True)
    # durations are counted in whole samples; the epsilon guards float rounding
    merge = int(np.ceil(cfg.merge_gap_s * rate - 1e-9))
    min_len = int(np.ceil(cfg.min_spike_duration_s * rate - 1e-9))
    spans = find_excursions(residual, theta, merge, min_len)
    mag = np.abs(np.nan_to_num(residual, nan=0.0))
    spikes = []
    for a, b in spans:
        p = a + int(np.argmax(mag[a:b]))
        spikes.append(SpikeEvent(direction, a / rate, p / rate, b / rate, float(mag[p])))
    return SpikeTrain(direction, tuple(spikes), observed, theta)


def detect_spikes(det: DetrendedRecording, cfg: AnalysisConfig | None = None) -> list[SpikeTrain]:
    """Detect slow excursions beyond ``dispersion_k`` robust sigmas on every channel.

    A spike is a contiguous run with ``|residual| >= threshold`` (short
    sub-threshold dips merged) lasting at least ``min_spike_duration_s``.
    Onset is the first supra-threshold sample, offset the end of the last
    one, peak the earliest sample of maximal magnitude. Times are seconds
    from the first sample.
    """
    cfg = cfg or AnalysisConfig()
    trains = []
    for d in DIRECTIONS:
        try:
            trains.append(_detect_channel(d, det.detrended[int(d)], det.sample_rate, cfg))
        except InputError as exc:
            raise InputError(str(exc).split(" [")[0], module="events",
                             session=det.session_id, channel=d.label) from None
    return trains


def _quartiles(x):
    if len(x) == 0:
        return (float("nan"),) * 3
    q = np.quantile(np.asarray(x, dtype=float), [0.25, 0.5, 0.75])
    return tuple(float(v) for v in q)


def _stats(direction, amplitudes, isis, observed):
    count = len(amplitudes)
    rate = count / (observed / 60.0) if observed > 0 else 0.0
    return DirectionStats(
        direction=direction,
        spike_count=count,
        observed_duration_s=float(observed),
        rate_per_min=float(rate),
        amplitude_quartiles_mV=_quartiles(amplitudes),
        amplitude_max_mV=float(np.max(amplitudes)) if count else float("nan"),
        isi_list_s=tuple(float(v) for v in isis),
    )


def direction_stats(train: SpikeTrain) -> DirectionStats:
    """Count, rate (events/min), amplitude quartiles and onset-to-onset ISIs."""
    return _stats(train.direction, train.amplitudes, np.diff(train.onsets),
                  train.observed_duration_s)


def pooled_direction_stats(trains: Sequence[SpikeTrain]) -> DirectionStats:
    """Event-level pooling of several sessions' trains for one direction.

    ISIs are taken within each session only.
    """
    if not trains:
        raise InputError("nothing to pool", module="events")
    directions = {t.direction for t in trains}
    if len(directions) != 1:
        raise InputError("cannot pool trains of different directions", module="events")
    amplitudes = np.concatenate([t.amplitudes for t in trains])
    isis = np.concatenate([np.diff(t.onsets) for t in trains])
    observed = sum(t.observed_duration_s for t in trains)
    return _stats(directions.pop(), amplitudes, isis, observed)


def group_bursts(train, burst_gap_s: float = 600.0) -> list[Burst]:
    """Partition a train into bursts.

    A new burst starts whenever the quiescent interval from the previous
    spike's offset to the next spike's onset exceeds ``burst_gap_s``.
    """
    if not burst_gap_s > 0:
        raise InputError("burst_gap_s must be positive", module="events")
    spikes = train.spikes if isinstance(train, SpikeTrain) else tuple(train)
    if not spikes:
        return []
    direction = spikes[0].direction
    bursts, current = [], [spikes[0]]
    last_offset = spikes[0].offset_s
    for s in spikes[1:]:
        if s.onset_s - last_offset > burst_gap_s:
            bursts.append(Burst(direction, tuple(current)))
            current = []
        current.append(s)
        last_offset = max(last_offset, s.offset_s)
    bursts.append(Burst(direction, tuple(current)))
    return bursts


@dataclass(frozen=True)
class IsiHistogram:
    bin_edges_s: np.ndarray
    counts: np.ndarray
    overflow: int


def isi_histogram(isis, bin_width_s: float, max_s: float) -> IsiHistogram:
    """Uniform histogram of ISIs in ``[0, max_s)``; longer ISIs go to ``overflow``."""
    if not bin_width_s > 0:
        raise InputError("bin_width_s must be positive", module="events")
    n_bins = int(np.ceil(max_s / bin_width_s - 1e-9))
    edges = np.arange(n_bins + 1) * float(bin_width_s)
    x = np.asarray(isis, dtype=float)
    inside = x[(x >= 0) & (x < max_s)]
    idx = np.minimum((inside // bin_width_s).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return IsiHistogram(edges, counts, int(np.count_nonzero(x >= max_s)))
