"""Zero-lag Pearson coupling between channels and its decay with separation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DIRECTIONS, Direction, InputError, separation
from .ingest import Normalised

__all__ = [
    "MIN_OVERLAP",
    "CorrelationMatrix",
    "SeparationDecay",
    "correlation_matrix",
    "separation_decay",
    "mean_matrix",
]

MIN_OVERLAP = 100


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Pairwise coefficients; NaN marks excluded channels and undefined pairs."""

    values: np.ndarray
    n_overlap: np.ndarray
    excluded: frozenset = frozenset()


@dataclass(frozen=True)
class SeparationDecay:
    metric: str
    separations: tuple[int, ...]
    mean_r: tuple[float, ...]
    sd_r: tuple[float, ...]
    n_pairs: tuple[int, ...]

    def as_dict(self):
        return {s: (m, sd, n) for s, m, sd, n in
                zip(self.separations, self.mean_r, self.sd_r, self.n_pairs)}


def _pearson(x, y):
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0:
        return np.nan
    return float(np.clip(np.dot(x, y) / denom, -1.0, 1.0))


def correlation_matrix(norm: Normalised, min_overlap: int = MIN_OVERLAP) -> CorrelationMatrix:
    """Pearson coefficient over jointly valid samples for every channel pair.

    Pairs with fewer than ``min_overlap`` jointly valid samples are left
    undefined (NaN).
    """
    x = norm.values
    valid = np.isfinite(x)
    n = x.shape[0]
    excluded = {int(d) for d in norm.excluded}
    values = np.full((n, n), np.nan)
    overlap = valid.astype(np.int64) @ valid.T.astype(np.int64)
    for i in range(n):
        if i in excluded:
            continue
        values[i, i] = 1.0
        for j in range(i + 1, n):
            if j in excluded or overlap[i, j] < min_overlap:
                continue
            both = valid[i] & valid[j]
            values[i, j] = values[j, i] = _pearson(x[i, both], x[j, both])
    off = values[~np.eye(n, dtype=bool)]
    if not np.isfinite(off).any():
        raise InputError("insufficient joint coverage: no channel pair has a defined "
                         "correlation", module="coupling")
    values.setflags(write=False)
    overlap.setflags(write=False)
    return CorrelationMatrix(values, overlap, frozenset(Direction(i) for i in excluded))


def separation_decay(m, metric: str = "linear") -> SeparationDecay:
    """Mean and population SD of the defined coefficients at each separation."""
    values = m.values if isinstance(m, CorrelationMatrix) else np.asarray(m, dtype=float)
    n = values.shape[0]
    groups: dict[int, list[float]] = {}
    for i in range(n):
        for j in range(i + 1, n):
            s = separation(Direction(i), Direction(j), metric) if n == len(DIRECTIONS) \
                else (abs(i - j) if metric == "linear" else min(abs(i - j), n - abs(i - j)))
            groups.setdefault(s, [])
            if np.isfinite(values[i, j]):
                groups[s].append(values[i, j])
    seps = tuple(sorted(groups))
    means, sds, counts = [], [], []
    for s in seps:
        r = np.asarray(groups[s])
        counts.append(len(r))
        means.append(float(r.mean()) if len(r) else float("nan"))
        sds.append(float(r.std()) if len(r) else float("nan"))
    return SeparationDecay(metric, seps, tuple(means), tuple(sds), tuple(counts))


def mean_matrix(matrices) -> CorrelationMatrix:
    """Average per-session matrices entrywise, skipping undefined entries."""
    stack = np.stack([m.values for m in matrices])
    overlap = np.sum([m.n_overlap for m in matrices], axis=0)
    defined = np.isfinite(stack)
    with np.errstate(invalid="ignore"):
        mean = np.where(defined.any(0), np.nansum(stack, 0) / np.maximum(defined.sum(0), 1), np.nan)
    mean = (mean + mean.T) / 2
    excluded = frozenset.intersection(*[m.excluded for m in matrices])
    return CorrelationMatrix(mean, overlap, excluded)
