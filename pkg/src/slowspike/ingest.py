"""Loading, gap repair, detrending and normalisation of recordings."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import ndimage

from .core import DIRECTIONS, ConfigError, Direction, InputError, Recording, direction_of_label

__all__ = [
    "ColumnSpec",
    "DetrendedRecording",
    "Normalised",
    "load_recording",
    "write_recording",
    "repair_gaps",
    "detrend",
    "moving_median",
    "normalise",
]


@dataclass(frozen=True)
class ColumnSpec:
    """How columns of a delimited export map onto the eight directions.

    ``channels`` maps compass labels to file column names; labels that are
    not listed are looked up under their own name.
    """

    time_column: str = "t"
    channels: dict = field(default_factory=dict)
    units: str = "mV"

    def __post_init__(self):
        if self.units not in ("mV", "V"):
            raise ConfigError(f"units must be 'mV' or 'V', got {self.units!r}")
        mapping = {direction_of_label(k): str(v) for k, v in dict(self.channels).items()}
        object.__setattr__(self, "channels", mapping)

    def column_for(self, direction: Direction) -> str:
        direction = Direction(direction)
        return self.channels.get(direction, direction.label)

    def as_dict(self) -> dict:
        return {
            "time_column": self.time_column,
            "units": self.units,
            "channels": {d.label: self.column_for(d) for d in DIRECTIONS},
        }


def _sniff_delimiter(path) -> str:
    with open(path, "r", newline="") as fh:
        header = fh.readline()
    if not header.strip():
        raise InputError(f"{path}: missing header row", module="ingest")
    return "\t" if "\t" in header else ","


def _elapsed_seconds(column: pd.Series, path) -> tuple[np.ndarray, float]:
    numeric = pd.to_numeric(column, errors="coerce")
    if numeric.notna().all():
        t = numeric.to_numpy(dtype=float)
        return t - t[0], float(t[0])
    try:
        stamps = pd.to_datetime(column, errors="raise")
    except (ValueError, TypeError):
        bad = int(np.flatnonzero(numeric.isna().to_numpy())[0])
        raise InputError(f"{path}: unparseable time value {column.iloc[bad]!r} at row {bad}",
                         module="ingest") from None
    ns = stamps.to_numpy(dtype="datetime64[ns]").astype(np.int64)
    t = (ns - ns[0]) / 1e9
    return t, ns[0] / 1e9


def load_recording(path, spec: ColumnSpec | None = None, session_id: str | None = None) -> Recording:
    """Read a comma- or tab-delimited export into a :class:`Recording`.

    The time column may hold elapsed seconds or absolute timestamps. Empty
    cells become invalid samples. The sample rate is taken from the median
    time step.
    """
    spec = spec or ColumnSpec()
    if session_id is None:
        session_id = os.path.splitext(os.path.basename(str(path)))[0]
    if not os.path.exists(path):
        raise InputError(f"{path}: file not found", module="ingest", session=session_id)
    sep = _sniff_delimiter(path)
    try:
        df = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False, na_values=[""])
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: cannot parse delimited text ({exc})",
                         module="ingest", session=session_id) from None
    df.columns = [c.strip() for c in df.columns]

    wanted = [spec.time_column] + [spec.column_for(d) for d in DIRECTIONS]
    for name in wanted:
        if name not in df.columns:
            raise InputError(f"{path}: missing column {name!r}", module="ingest",
                             session=session_id)
    if len(df) < 2:
        raise InputError(f"{path}: need at least 2 data rows", module="ingest", session=session_id)
    if df[spec.time_column].isna().any():
        bad = int(np.flatnonzero(df[spec.time_column].isna().to_numpy())[0])
        raise InputError(f"{path}: empty time value at row {bad}", module="ingest",
                         session=session_id)

    t, t0 = _elapsed_seconds(df[spec.time_column].str.strip(), path)
    steps = np.diff(t)
    if np.any(steps <= 0):
        bad = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise InputError(f"{path}: time column not strictly increasing at row {bad}",
                         module="ingest", session=session_id)
    rate = 1.0 / float(np.median(steps))

    scale = 1000.0 if spec.units == "V" else 1.0
    samples = np.empty((len(DIRECTIONS), len(df)))
    for d in DIRECTIONS:
        col = df[spec.column_for(d)]
        try:
            # exact decimal parsing; to_numeric's fast path can be off by one ulp
            values = col.astype(float).to_numpy()
        except ValueError:
            values = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
            junk = np.isnan(values) & col.notna().to_numpy()
            bad = int(np.flatnonzero(junk)[0]) if junk.any() else 0
            raise InputError(f"{path}: non-numeric value {col.iloc[bad]!r} at row {bad}",
                             module="ingest", session=session_id, channel=d.label)
        values[~np.isfinite(values)] = np.nan
        if np.count_nonzero(np.isfinite(values)) < 2:
            raise InputError(f"{path}: fewer than 2 valid samples", module="ingest",
                             session=session_id, channel=d.label)
        samples[int(d)] = values * scale
    return Recording.from_arrays(session_id, samples, sample_rate=rate, t0=t0)


def write_recording(rec: Recording, path) -> None:
    """Write a recording in the format :func:`load_recording` reads."""
    data = {"t": rec.t0 + rec.times}
    for ch in rec.channels:
        data[ch.direction.label] = np.where(ch.validity_mask, ch.samples, np.nan)
    pd.DataFrame(data).to_csv(path, index=False, na_rep="")


def repair_gaps(rec: Recording, max_gap_interp_samples: int = 5) -> Recording:
    """Linearly interpolate runs of at most ``max_gap_interp_samples`` invalid samples.

    Runs touching either end of the recording have only one neighbour and are
    left invalid, as are longer runs.
    """
    if max_gap_interp_samples <= 0 or all(ch.validity_mask.all() for ch in rec.channels):
        return rec
    values = rec.values
    valid = rec.valid
    for i in range(values.shape[0]):
        bad = ~valid[i]
        if not bad.any():
            continue
        edges = np.diff(np.concatenate(([0], bad.view(np.int8), [0])))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        for a, b in zip(starts, stops):
            if b - a > max_gap_interp_samples or a == 0 or b == len(bad):
                continue
            left, right = values[i, a - 1], values[i, b]
            frac = np.arange(1, b - a + 1) / (b - a + 1)
            values[i, a:b] = left + (right - left) * frac
            valid[i, a:b] = True
    return Recording.from_arrays(rec.session_id, values, valid, rec.sample_rate, rec.t0)


def moving_median(x: np.ndarray, half_width: int) -> np.ndarray:
    """Centred moving median over ``2*half_width + 1`` samples, ignoring NaN.

    Near the ends the window shrinks symmetrically so it stays centred. Output
    is NaN where a window holds no finite sample.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    h = int(half_width)
    out = np.full(n, np.nan)
    if n == 0:
        return out
    has_nan = bool(np.isnan(x).any())
    if n > 2 * h:
        if has_nan:
            rolled = pd.Series(x).rolling(2 * h + 1, center=True, min_periods=1).median()
            rolled = rolled.to_numpy()
        else:
            rolled = ndimage.median_filter(x, size=2 * h + 1, mode="nearest")
        out[h:n - h] = rolled[h:n - h]
        edge = np.r_[0:h, n - h:n]
    else:
        edge = np.arange(n)
    with np.errstate(all="ignore"):
        for i in edge:
            k = min(h, i, n - 1 - i)
            window = x[i - k:i + k + 1]
            if has_nan:
                window = window[~np.isnan(window)]
                if window.size == 0:
                    continue
            out[i] = np.median(window)
    return out


@dataclass(frozen=True, eq=False)
class DetrendedRecording:
    base: Recording
    detrended: np.ndarray
    window_s: float

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.detrended)

    @property
    def sample_rate(self) -> float:
        return self.base.sample_rate

    @property
    def session_id(self) -> str:
        return self.base.session_id

    def scaled(self, factor: float) -> "DetrendedRecording":
        return DetrendedRecording(self.base, self.detrended * factor, self.window_s)


def detrend(rec: Recording, window_s: float = 3600.0) -> DetrendedRecording:
    """Subtract a centred moving-median baseline from every channel."""
    if window_s < 3.0 / rec.sample_rate:
        raise ConfigError(f"detrend window {window_s} s is shorter than 3 samples")
    half = int(round(window_s * rec.sample_rate)) // 2
    values = rec.values
    out = np.empty_like(values)
    for i, row in enumerate(values):
        out[i] = row - moving_median(row, half)
    out.setflags(write=False)
    return DetrendedRecording(rec, out, float(window_s))


@dataclass(frozen=True, eq=False)
class Normalised:
    """Z-scored channels; ``excluded`` holds channels with no usable variance."""

    values: np.ndarray
    excluded: frozenset

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)


def normalise(det) -> Normalised:
    """Z-score each channel over its valid samples (population variance)."""
    x = det.detrended if isinstance(det, DetrendedRecording) else np.atleast_2d(np.asarray(det, float))
    out = np.full(x.shape, np.nan)
    excluded = set()
    for i, row in enumerate(x):
        ok = np.isfinite(row)
        direction = Direction(i) if x.shape[0] == len(DIRECTIONS) else i
        if ok.sum() < 2:
            excluded.add(direction)
            continue
        v = row[ok]
        mu = v.mean()
        sd = np.sqrt(np.mean((v - mu) ** 2))
        if not sd > 1e-12 * max(1.0, np.abs(v).max()):
            excluded.add(direction)
            continue
        z = (v - mu) / sd
        # second pass trims rounding residue
        z = (z - z.mean()) / np.sqrt(np.mean((z - z.mean()) ** 2))
        out[i, ok] = z
    return Normalised(out, frozenset(excluded))
