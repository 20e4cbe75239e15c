"""Event-based propagation: first-spike delays after reference burst onsets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import DIRECTIONS, Burst, Direction, InputError

__all__ = [
    "DelayTable",
    "DirectionSummary",
    "burst_onsets",
    "match_delays",
    "concat_delay_tables",
    "summarize_propagation",
    "polar_summary",
]


@dataclass(frozen=True, eq=False)
class DelayTable:
    """Delays from each reference onset to the first spike in every other direction.

    ``delays[d][k]`` is the delay for onset ``k`` in direction ``d``, NaN when
    nothing arrived within the window.
    """

    reference: Direction
    window_s: float
    onsets_s: np.ndarray
    delays: Mapping[Direction, np.ndarray]

    @property
    def n_events(self) -> int:
        return len(self.onsets_s)

    def matched(self, direction) -> np.ndarray:
        return np.isfinite(self.delays[Direction(direction)])


@dataclass(frozen=True)
class DirectionSummary:
    direction: Direction
    n_events: int
    n_matched: int
    match_rate: float
    median_delay_s: float | None
    iqr_s: tuple[float, float] | None


def burst_onsets(bursts: Sequence[Burst]) -> list[float]:
    """Sorted onset times of bursts from a single direction."""
    if len({b.direction for b in bursts}) > 1:
        raise InputError("burst onsets must come from one direction", module="propagation")
    return sorted(b.onset_s for b in bursts)


def match_delays(ref_onsets, trains, window_s: float = 3600.0,
                 reference: Direction = Direction.E) -> DelayTable:
    """For every reference onset ``t`` and direction ``d != reference``, the delay
    to the first spike onset of ``d`` in ``[t, t + window_s]``.

    ``trains`` is either a sequence of spike trains or a mapping from
    direction to spike onset times. Each onset is matched independently, so
    one spike may serve several overlapping windows.
    """
    if not window_s > 0:
        raise InputError("window_s must be positive", module="propagation")
    reference = Direction(reference)
    onsets = np.sort(np.asarray(ref_onsets, dtype=float))
    if isinstance(trains, Mapping):
        spike_onsets = {Direction(d): np.sort(np.asarray(v, float)) for d, v in trains.items()}
    else:
        spike_onsets = {t.direction: t.onsets for t in trains}
    delays = {}
    for d in DIRECTIONS:
        if d == reference:
            continue
        times = spike_onsets.get(d, np.empty(0))
        out = np.full(len(onsets), np.nan)
        if len(times):
            idx = np.searchsorted(times, onsets, side="left")
            hit = idx < len(times)
            first = times[np.minimum(idx, len(times) - 1)]
            delay = first - onsets
            ok = hit & (delay <= window_s)
            out[ok] = delay[ok]
        out.setflags(write=False)
        delays[d] = out
    onsets.setflags(write=False)
    return DelayTable(reference, float(window_s), onsets, delays)


def concat_delay_tables(tables: Sequence[DelayTable]) -> DelayTable:
    """Event-level pooling of delay tables that share reference and window."""
    if not tables:
        raise InputError("no delay tables to pool", module="propagation")
    ref = {t.reference for t in tables}
    win = {t.window_s for t in tables}
    if len(ref) != 1 or len(win) != 1:
        raise InputError("pooled delay tables must share reference and window",
                         module="propagation")
    reference = ref.pop()
    onsets = np.concatenate([t.onsets_s for t in tables])
    delays = {d: np.concatenate([t.delays[d] for t in tables])
              for d in DIRECTIONS if d != reference}
    return DelayTable(reference, win.pop(), onsets, delays)


def summarize_propagation(table: DelayTable) -> dict[Direction, DirectionSummary]:
    """Per-direction match rate and median/quartiles of matched delays.

    Quartiles use linear interpolation between order statistics.
    """
    if table.n_events < 1:
        raise InputError("propagation summary needs at least one reference onset",
                         module="propagation")
    out = {}
    for d, delays in table.delays.items():
        matched = delays[np.isfinite(delays)]
        k = len(matched)
        if k:
            q1, med, q3 = np.quantile(matched, [0.25, 0.5, 0.75])
            median, iqr = float(med), (float(q1), float(q3))
        else:
            median, iqr = None, None
        out[d] = DirectionSummary(d, table.n_events, k, k / table.n_events, median, iqr)
    return out


def polar_summary(values: Mapping) -> list[tuple[float, Direction, float | None]]:
    """Order per-direction values by compass angle; missing directions give None."""
    keyed = {Direction(d) if not isinstance(d, str) else Direction[d.upper()]: v
             for d, v in values.items()}
    return [(d.angle, d, keyed.get(d)) for d in DIRECTIONS]
