"""
Spike statistics, bursts and inter-spike intervals
==================================================

From detected spikes compute per-direction rates and amplitude summaries,
group spikes into bursts separated by quiet periods, and bin inter-spike
intervals at the one-hour and ten-hour scales.
"""
# %%
import numpy as np
from scipy import stats

from slowspike import synth
from slowspike.events import detect_spikes, direction_stats, group_bursts, isi_histogram
from slowspike.ingest import detrend

rec, truth = synth.generate(synth.anisotropic_regime(seed=1, duration_s=3 * 86400))
trains = detect_spikes(detrend(rec, 3600.0))

# %%
print("dir  count  rate/min  amplitude q1 / median / q3 / max (mV)")
for t in trains:
    s = direction_stats(t)
    q1, med, q3 = s.amplitude_quartiles_mV
    print(f"{s.direction.label:>3}  {s.spike_count:5d}  {s.rate_per_min:8.4f}  "
          f"{q1:5.1f} / {med:5.1f} / {q3:5.1f} / {s.amplitude_max_mV:5.1f}")

rates = [direction_stats(t).rate_per_min for t in trains]
print(f"fastest / slowest direction: {max(rates) / min(rates):.1f}x")

# %%
# Amplitudes are heavy-tailed: most events are a few mV, a handful are
# much larger.
amps = np.concatenate([t.amplitudes for t in trains])
print(f"skewness {stats.skew(amps):.2f}, max/median {amps.max() / np.median(amps):.1f}")

# %%
# Bursts: a new burst begins when more than ten minutes pass between one
# spike's end and the next spike's start.
for t in trains[:3]:
    bursts = group_bursts(t, burst_gap_s=600.0)
    sizes = np.bincount([b.size for b in bursts])
    print(f"{t.direction.label:>3}: {len(bursts)} bursts, size counts {sizes[1:].tolist()}")

# %%
isis = np.concatenate([np.diff(t.onsets) for t in trains])
short = isi_histogram(isis, bin_width_s=300.0, max_s=3600.0)
long = isi_histogram(isis, bin_width_s=3600.0, max_s=36000.0)
print("ISI < 1 h, 5-min bins:", short.counts.tolist(), "overflow", short.overflow)
print("ISI < 10 h, 1-h bins: ", long.counts.tolist(), "overflow", long.overflow)
