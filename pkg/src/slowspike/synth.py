"""Synthetic recordings with planted ground truth, and detection scoring.

Each planted spike is a raised-cosine bump of full support ``width_s``. Its
``onset_s`` is the half-maximum point of the leading edge, which is where a
threshold at half the peak height first trips, so planted and detected
onsets are directly comparable. The peak sits ``width_s / 4`` after onset.

Randomness is drawn from independent streams keyed by ``(seed, purpose,
channel)``. Adding or changing one channel's parameters leaves the draws of
the other channels untouched.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from .core import DIRECTIONS, ConfigError, Direction, Recording, direction_of_label, separation

__all__ = [
    "DirectionParams",
    "SynthParams",
    "PlantedSpike",
    "PlantedBurst",
    "PlantedDelay",
    "GroundTruth",
    "Score",
    "generate",
    "raised_cosine",
    "score_detection",
    "anisotropic_regime",
    "propagation_regime",
    "noise_only",
    "coupled_noise",
]

# stream purposes
_NOISE, _DRIFT, _SPONT, _RECRUIT, _SPIKES_SPONT, _SPIKES_REC = range(6)


@dataclass(frozen=True)
class DirectionParams:
    """Activity of one channel.

    ``burst_rate_per_hr`` drives spontaneous bursts (a Poisson process with an
    optional dead time ``refractory_s`` after each burst ends). For the
    reference direction these are the bursts that recruit other channels.
    """

    burst_rate_per_hr: float = 0.0
    spikes_per_burst_mean: float = 1.0
    within_burst_isi_s: float = 200.0
    min_isi_s: float = 150.0
    amplitude_log_mu: float = float(np.log(8.0))
    amplitude_log_sigma: float = 1.0
    spike_width_s: tuple[float, float] = (90.0, 120.0)
    refractory_s: float = 0.0
    match_prob: float = 0.0
    delay_log_mu: float = float(np.log(300.0))
    delay_log_sigma: float = 0.5

    def validate(self):
        for name in ("burst_rate_per_hr", "within_burst_isi_s", "min_isi_s",
                     "amplitude_log_sigma", "refractory_s", "delay_log_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.spikes_per_burst_mean < 1:
            raise ConfigError("spikes_per_burst_mean must be >= 1")
        if self.within_burst_isi_s < self.min_isi_s:
            raise ConfigError("within_burst_isi_s (mean) must be >= min_isi_s")
        lo, hi = self.spike_width_s
        if not 0 < lo <= hi:
            raise ConfigError("spike_width_s must be a range 0 < lo <= hi")
        if not 0 <= self.match_prob <= 1:
            raise ConfigError("match_prob must lie in [0, 1]")


@dataclass(frozen=True)
class SynthParams:
    duration_s: float = 86400.0
    sample_rate: float = 1.0
    noise_sigma_mV: float = 0.5
    drift_amplitude_mV: float = 0.0
    drift_period_s: float = 86400.0
    drift_walk_mV_per_hr: float = 0.0
    directions: tuple[DirectionParams, ...] = tuple(DirectionParams() for _ in DIRECTIONS)
    reference: Direction = Direction.E
    amplitude_floor_mV: float = 0.0
    coupling_mix: Mapping[int, float] = field(default_factory=dict)
    coupling_metric: str = "linear"
    seed: int = 0
    session_id: str = "synth"

    def __post_init__(self):
        ref = self.reference
        if not isinstance(ref, Direction):
            ref = direction_of_label(ref) if isinstance(ref, str) else Direction(ref)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "directions", tuple(self.directions))
        object.__setattr__(self, "coupling_mix",
                           {int(k): float(v) for k, v in dict(self.coupling_mix).items()})

    def validate(self):
        if len(self.directions) != len(DIRECTIONS):
            raise ConfigError(f"need parameters for {len(DIRECTIONS)} directions")
        for name in ("duration_s", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("noise_sigma_mV", "drift_amplitude_mV", "drift_walk_mV_per_hr",
                     "amplitude_floor_mV"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.drift_period_s > 0:
            raise ConfigError("drift_period_s must be positive")
        for p in self.directions:
            p.validate()
        widest = max(p.spike_width_s[1] for p in self.directions)
        if self.duration_s < 10 * widest:
            raise ConfigError("duration_s must be at least 10 times the widest spike")
        _mixing_matrix(self)

    def with_direction(self, direction, **changes) -> "SynthParams":
        dirs = list(self.directions)
        dirs[int(direction)] = replace(dirs[int(direction)], **changes)
        return replace(self, directions=tuple(dirs))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["reference"] = self.reference.label
        out["directions"] = {d.label: asdict(p) for d, p in zip(DIRECTIONS, self.directions)}
        for p in out["directions"].values():
            p["spike_width_s"] = list(p["spike_width_s"])
        out["coupling_mix"] = {str(k): v for k, v in sorted(self.coupling_mix.items())}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynthParams":
        data = dict(data)
        dirs = data.pop("directions")
        directions = []
        for d in DIRECTIONS:
            p = dict(dirs[d.label])
            p["spike_width_s"] = tuple(p["spike_width_s"])
            directions.append(DirectionParams(**p))
        data["coupling_mix"] = {int(k): v for k, v in data.get("coupling_mix", {}).items()}
        return cls(directions=tuple(directions), **data)


@dataclass(frozen=True)
class PlantedSpike:
    direction: Direction
    onset_s: float
    peak_s: float
    amplitude_mV: float
    width_s: float
    burst_id: int


@dataclass(frozen=True)
class PlantedBurst:
    burst_id: int
    direction: Direction
    onset_s: float
    n_spikes: int
    recruited_by: int | None = None


@dataclass(frozen=True)
class PlantedDelay:
    reference_burst_id: int
    direction: Direction
    recruited: bool
    delay_s: float | None


@dataclass(frozen=True)
class GroundTruth:
    spikes: tuple[PlantedSpike, ...]
    bursts: tuple[PlantedBurst, ...]
    delays: tuple[PlantedDelay, ...]
    params: SynthParams
    warnings: tuple[str, ...] = ()

    def spikes_of(self, direction) -> list[PlantedSpike]:
        return [s for s in self.spikes if s.direction == Direction(direction)]

    def onsets_of(self, direction) -> np.ndarray:
        return np.array([s.onset_s for s in self.spikes_of(direction)], dtype=float)

    def as_dict(self) -> dict:
        def row(obj):
            r = asdict(obj)
            r["direction"] = obj.direction.label
            return r
        return {
            "spikes": [row(s) for s in self.spikes],
            "bursts": [row(b) for b in self.bursts],
            "delays": [row(d) for d in self.delays],
            "params": self.params.as_dict(),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GroundTruth":
        def fix(r):
            r = dict(r)
            r["direction"] = Direction[r["direction"]]
            return r
        return cls(
            spikes=tuple(PlantedSpike(**fix(r)) for r in data["spikes"]),
            bursts=tuple(PlantedBurst(**fix(r)) for r in data["bursts"]),
            delays=tuple(PlantedDelay(**fix(r)) for r in data["delays"]),
            params=SynthParams.from_dict(data["params"]),
            warnings=tuple(data.get("warnings", ())),
        )


def _rng(seed, purpose, *keys):
    return np.random.default_rng([int(seed), purpose, *keys])


def raised_cosine(t, start, width, amplitude):
    """Raised-cosine bump with support ``[start, start + width]``."""
    phase = (np.asarray(t, dtype=float) - start) / width
    inside = (phase >= 0) & (phase <= 1)
    return np.where(inside, 0.5 * amplitude * (1 - np.cos(2 * np.pi * phase)), 0.0)


def _mixing_matrix(p: SynthParams) -> np.ndarray:
    n = len(DIRECTIONS)
    corr = np.eye(n)
    for i in range(n):
        for j in range(n):
            if i != j:
                corr[i, j] = p.coupling_mix.get(
                    separation(Direction(i), Direction(j), p.coupling_metric), 0.0)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise ConfigError("coupling_mix does not define a valid correlation structure "
                          "(matrix not positive definite)") from None


def _burst_starts(rng, rate_per_hr, refractory_s, duration_s, burst_span):
    """Poisson burst starts.

    With ``refractory_s > 0`` the process is dead from each burst's start
    until ``refractory_s`` after its last spike ends; otherwise bursts arrive
    as a plain Poisson process and may overlap.
    """
    if rate_per_hr <= 0:
        return []
    scale = 3600.0 / rate_per_hr
    starts, t = [], rng.exponential(scale)
    while t < duration_s:
        starts.append(t)
        span = burst_span(len(starts) - 1)
        dead = span + refractory_s if refractory_s > 0 else 0.0
        t = t + dead + rng.exponential(scale)
    return starts


def _burst_spikes(rng, p: DirectionParams, floor):
    n = int(rng.geometric(1.0 / p.spikes_per_burst_mean))
    extra = p.within_burst_isi_s - p.min_isi_s
    gaps = p.min_isi_s + (rng.exponential(extra, n - 1) if extra > 0 else np.zeros(n - 1))
    offsets = np.concatenate(([0.0], np.cumsum(gaps)))
    amps = np.exp(rng.normal(p.amplitude_log_mu, p.amplitude_log_sigma, n))
    amps = np.maximum(amps, floor)
    widths = rng.uniform(p.spike_width_s[0], p.spike_width_s[1], n)
    return offsets, amps, widths


def generate(p: SynthParams) -> tuple[Recording, GroundTruth]:
    """Simulate a recording and return it with its ground truth.

    Per channel the trace is drift + correlated Gaussian noise + planted
    spikes. Reference-direction bursts recruit each other direction with
    probability ``match_prob`` after a lognormal delay; recruited bursts start
    with a spike whose onset is the reference onset plus that delay.
    """
    p.validate()
    n = int(round(p.duration_s * p.sample_rate))
    t = np.arange(n) / p.sample_rate
    notes = []

    # burst schedules: spontaneous per channel, then recruitment from reference
    ref = p.reference
    bursts = []   # (direction, start, offsets, amps, widths, recruited_by)
    schedules = {}
    for d in DIRECTIONS:
        dp = p.directions[int(d)]
        rng_b = _rng(p.seed, _SPONT, int(d))
        rng_s = _rng(p.seed, _SPIKES_SPONT, int(d))
        drawn = []

        def span(k, drawn=drawn, dp=dp, rng_s=rng_s):
            offsets, amps, widths = _burst_spikes(rng_s, dp, p.amplitude_floor_mV)
            drawn.append((offsets, amps, widths))
            return offsets[-1] + widths[-1]

        starts = _burst_starts(rng_b, dp.burst_rate_per_hr, dp.refractory_s, p.duration_s, span)
        schedules[d] = list(zip(starts, drawn))

    ref_bursts = []
    for start, (offsets, amps, widths) in schedules[ref]:
        ref_bursts.append(len(bursts))
        bursts.append((ref, start, offsets, amps, widths, None))
    for d in DIRECTIONS:
        if d == ref:
            continue
        for start, (offsets, amps, widths) in schedules[d]:
            bursts.append((d, start, offsets, amps, widths, None))

    delays = []
    for d in DIRECTIONS:
        if d == ref:
            continue
        dp = p.directions[int(d)]
        rng_r = _rng(p.seed, _RECRUIT, int(d))
        rng_s = _rng(p.seed, _SPIKES_REC, int(d))
        for k in ref_bursts:
            hit = rng_r.random() < dp.match_prob
            delay = float(np.exp(rng_r.normal(dp.delay_log_mu, dp.delay_log_sigma)))
            if not hit:
                delays.append((k, d, False, None))
                continue
            delays.append((k, d, True, delay))
            offsets, amps, widths = _burst_spikes(rng_s, dp, p.amplitude_floor_mV)
            bursts.append((d, bursts[k][1] + delay, offsets, amps, widths, k))

    # keep only spikes whose whole support fits in the record; renumber bursts
    trace = np.zeros((len(DIRECTIONS), n))
    spikes, planted_bursts, id_map = [], [], {}
    order = sorted(range(len(bursts)), key=lambda i: (bursts[i][1], int(bursts[i][0])))
    for i in order:
        d, start, offsets, amps, widths, parent = bursts[i]
        onsets = start + offsets
        fits = (onsets - widths / 4 >= 0) & (onsets + 3 * widths / 4 <= t[-1])
        if not fits[0]:
            continue
        fits &= np.cumprod(fits).astype(bool)  # truncate the burst at the first misfit
        bid = len(planted_bursts)
        id_map[i] = bid
        planted_bursts.append(PlantedBurst(bid, d, float(onsets[0]), int(fits.sum()),
                                           id_map.get(parent)))
        for on, a, w in zip(onsets[fits], amps[fits], widths[fits]):
            s0 = on - w / 4
            lo = int(np.ceil(s0 * p.sample_rate))
            hi = int(np.floor((s0 + w) * p.sample_rate)) + 1
            trace[int(d), lo:hi] += raised_cosine(t[lo:hi], s0, w, a)
            spikes.append(PlantedSpike(d, float(on), float(on + w / 4), float(a), float(w), bid))

    planted_delays = []
    for k, d, hit, delay in delays:
        if k in id_map:
            planted_delays.append(PlantedDelay(id_map[k], d, hit, delay))
    spikes.sort(key=lambda s: (int(s.direction), s.onset_s))

    if all(dp.burst_rate_per_hr == 0 for dp in p.directions):
        notes.append("no_events: all burst rates are zero; trace holds noise and drift only")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    # noise with the requested cross-channel correlation
    if p.noise_sigma_mV > 0:
        mix = _mixing_matrix(p)
        z = np.stack([_rng(p.seed, _NOISE, int(d)).standard_normal(n) for d in DIRECTIONS])
        trace += p.noise_sigma_mV * (mix @ z)

    for d in DIRECTIONS:
        rng = _rng(p.seed, _DRIFT, int(d))
        phase = rng.uniform(0, 2 * np.pi)
        if p.drift_amplitude_mV > 0:
            trace[int(d)] += p.drift_amplitude_mV * np.sin(2 * np.pi * t / p.drift_period_s + phase)
        if p.drift_walk_mV_per_hr > 0:
            step = p.drift_walk_mV_per_hr * np.sqrt(1.0 / (3600.0 * p.sample_rate))
            trace[int(d)] += np.cumsum(rng.normal(0.0, step, n))

    rec = Recording.from_arrays(p.session_id, trace, sample_rate=p.sample_rate)
    truth = GroundTruth(tuple(spikes), tuple(planted_bursts), tuple(planted_delays), p,
                        tuple(notes))
    return rec, truth


# ---------------------------------------------------------------- scoring

@dataclass(frozen=True)
class Score:
    n_detected: int
    n_truth: int
    n_matched: int

    @property
    def precision(self) -> float:
        return self.n_matched / self.n_detected if self.n_detected else float("nan")

    @property
    def recall(self) -> float:
        return self.n_matched / self.n_truth if self.n_truth else float("nan")

    @property
    def f1(self) -> float:
        denom = self.n_detected + self.n_truth
        return 2 * self.n_matched / denom if denom else float("nan")

    def as_dict(self) -> dict:
        return {"n_detected": self.n_detected, "n_truth": self.n_truth,
                "n_matched": self.n_matched, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def _greedy_match(detected, truth, tol):
    detected = np.sort(np.asarray(detected, dtype=float))
    truth = np.sort(np.asarray(truth, dtype=float))
    pairs = []
    for i, on in enumerate(detected):
        lo = np.searchsorted(truth, on - tol, side="left")
        hi = np.searchsorted(truth, on + tol, side="right")
        for j in range(lo, hi):
            pairs.append((abs(truth[j] - on), i, j))
    pairs.sort()
    used_d, used_t = set(), set()
    for _, i, j in pairs:
        if i not in used_d and j not in used_t:
            used_d.add(i)
            used_t.add(j)
    return len(used_d)


def score_detection(detected, truth: GroundTruth, tol_s: float = 30.0) -> dict:
    """Precision/recall/F1 of detected onsets against planted onsets.

    Matching is greedy one-to-one by nearest onset within ``tol_s``; among
    equally near candidates the earliest detection wins. ``detected`` is a
    sequence of spike trains or a mapping direction -> onset times. Returns a
    dict of :class:`Score` per direction plus ``"pooled"``.
    """
    if not tol_s > 0:
        raise ConfigError("tol_s must be positive")
    if isinstance(detected, Mapping):
        det = {Direction(d): np.asarray(v, float) for d, v in detected.items()}
    else:
        det = {t.direction: t.onsets for t in detected}
    out = {}
    totals = np.zeros(3, dtype=int)
    for d in DIRECTIONS:
        on_d = det.get(d, np.empty(0))
        on_t = truth.onsets_of(d)
        s = Score(len(on_d), len(on_t), _greedy_match(on_d, on_t, tol_s))
        out[d] = s
        totals += (s.n_detected, s.n_truth, s.n_matched)
    out["pooled"] = Score(*map(int, totals))
    return out


# ---------------------------------------------------------------- presets

# spontaneous spike rates (events/min) per direction, N..NW, spanning a factor 20
ANISO_RATES_PER_MIN = (0.08, 0.02, 0.05, 0.01, 0.004, 0.006, 0.03, 0.012)
ANISO_MATCH_PROB = (0.3, 0.2, 0.0, 0.3, 0.0, 0.05, 0.4, 0.2)
ANISO_DELAY_MEDIAN_S = (20.0, 300.0, 0.0, 60.0, 3000.0, 1500.0, 10.0, 600.0)


def anisotropic_regime(seed: int = 0, duration_s: float = 432000.0, noise_sigma_mV: float = 0.5,
                       snr_floor: float = 8.0, session_id: str | None = None) -> SynthParams:
    """Anisotropic rates, lognormal amplitudes (median 8 mV, log-sigma 1), slow delays.

    Amplitudes are floored at ``snr_floor`` noise sigmas so every planted
    spike is detectable in principle.
    """
    spikes_per_burst = 3.0
    directions = []
    for d in DIRECTIONS:
        rate = ANISO_RATES_PER_MIN[int(d)]
        directions.append(DirectionParams(
            burst_rate_per_hr=rate * 60.0 / spikes_per_burst,
            spikes_per_burst_mean=spikes_per_burst,
            within_burst_isi_s=220.0,
            min_isi_s=150.0,
            amplitude_log_mu=float(np.log(8.0)),
            amplitude_log_sigma=1.0,
            spike_width_s=(90.0, 120.0),
            refractory_s=900.0,
            match_prob=ANISO_MATCH_PROB[int(d)],
            delay_log_mu=float(np.log(max(ANISO_DELAY_MEDIAN_S[int(d)], 1.0))),
            delay_log_sigma=0.5,
        ))
    return SynthParams(
        duration_s=duration_s,
        noise_sigma_mV=noise_sigma_mV,
        drift_amplitude_mV=5.0,
        drift_period_s=86400.0,
        drift_walk_mV_per_hr=0.2,
        directions=tuple(directions),
        reference=Direction.E,
        amplitude_floor_mV=snr_floor * noise_sigma_mV,
        coupling_mix={1: 0.3, 2: 0.1},
        seed=seed,
        session_id=session_id or f"aniso-{seed}",
    )


PROPAGATION_MATCH_PROB = (0.6, 0.8, 0.0, 0.9, 0.5, 0.7, 0.85, 0.65)
PROPAGATION_DELAY_MEDIAN_S = (3000.0, 300.0, 0.0, 10.0, 1000.0, 100.0, 30.0, 600.0)


def propagation_regime(seed: int = 0, duration_s: float = 7 * 86400.0,
                       session_id: str | None = None) -> SynthParams:
    """Reference (East) bursts recruit silent directions with planted delays.

    Delay medians span 10 s to 3000 s. A dead time between reference bursts
    longer than any plausible delay keeps consecutive events from bleeding
    into each other's windows; analyse with a window of about 7200 s.
    """
    directions = []
    for d in DIRECTIONS:
        is_ref = d == Direction.E
        directions.append(DirectionParams(
            burst_rate_per_hr=1.0 if is_ref else 0.0,
            spikes_per_burst_mean=2.0,
            within_burst_isi_s=220.0,
            min_isi_s=150.0,
            amplitude_log_mu=float(np.log(12.0)),
            amplitude_log_sigma=0.0,
            spike_width_s=(100.0, 100.0),
            refractory_s=8000.0 if is_ref else 0.0,
            match_prob=PROPAGATION_MATCH_PROB[int(d)],
            delay_log_mu=float(np.log(max(PROPAGATION_DELAY_MEDIAN_S[int(d)], 1.0))),
            delay_log_sigma=0.25,
        ))
    return SynthParams(
        duration_s=duration_s,
        noise_sigma_mV=0.5,
        directions=tuple(directions),
        reference=Direction.E,
        seed=seed,
        session_id=session_id or f"propagation-{seed}",
    )


def noise_only(seed: int = 0, duration_s: float = 100000.0, noise_sigma_mV: float = 1.0,
               session_id: str | None = None) -> SynthParams:
    return SynthParams(duration_s=duration_s, noise_sigma_mV=noise_sigma_mV,
                       directions=tuple(DirectionParams(spike_width_s=(1.0, 1.0))
                                        for _ in DIRECTIONS),
                       seed=seed, session_id=session_id or f"noise-{seed}")


def coupled_noise(coupling_mix: Mapping[int, float], seed: int = 0, duration_s: float = 100000.0,
                  metric: str = "linear", session_id: str | None = None) -> SynthParams:
    """Spike-free noise whose channel correlations follow ``coupling_mix`` by separation."""
    return replace(noise_only(seed, duration_s, 1.0, session_id or f"coupled-{seed}"),
                   coupling_mix=dict(coupling_mix), coupling_metric=metric)


def planted_rates_per_min(truth: GroundTruth) -> dict[Direction, float]:
    minutes = truth.params.duration_s / 60.0
    return {d: len(truth.spikes_of(d)) / minutes for d in DIRECTIONS}


def summarize_truth(truth: GroundTruth) -> dict:
    amps = np.array([s.amplitude_mV for s in truth.spikes])
    return {
        "n_spikes": len(truth.spikes),
        "n_bursts": len(truth.bursts),
        "rates_per_min": {d.label: r for d, r in planted_rates_per_min(truth).items()},
        "amplitude_median_mV": float(np.median(amps)) if amps.size else None,
    }


def to_trains(truth: GroundTruth) -> dict[Direction, np.ndarray]:
    """Planted onsets as a direction -> onset-times mapping."""
    return {d: truth.onsets_of(d) for d in DIRECTIONS}

