import numpy as np
import pytest

from slowspike import synth
from slowspike.core import Direction, SpikeEvent, direction_of_label


def make_spikes(direction, onsets, duration=60.0, amplitude=5.0):
    d = direction_of_label(direction) if isinstance(direction, str) else Direction(direction)
    return tuple(SpikeEvent(d, float(t), float(t) + duration / 2, float(t) + duration, amplitude)
                 for t in onsets)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def aniso_runs():
    """Anisotropic-regime recordings (5 days, 8 channels) for seeds 0, 1, 2."""
    return {seed: synth.generate(synth.anisotropic_regime(seed)) for seed in (0, 1, 2)}


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome.upper(), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, outcome, detail in sorted(lines):
            status = "PASS" if outcome == "PASSED" else "FAIL"
            terminalreporter.write_line(f"criterion {crit}: {status}  {detail}")
