import numpy as np
import pytest
from hypothesis import given, strategies as st

from slowspike.core import (DIRECTIONS, AnalysisConfig, Burst, ConfigError, Direction, InputError,
                            InvariantError, Recording, direction_of_label, separation)

directions = st.sampled_from(DIRECTIONS)
metrics = st.sampled_from(["linear", "circular"])


def test_direction_examples():
    assert direction_of_label("N") is Direction.N
    assert Direction.N.index == 0 and Direction.N.angle == 0.0
    e = direction_of_label("E")
    assert e.index == 2 and e.angle == 90.0
    assert direction_of_label("nw") is Direction.NW


def test_unknown_label_names_offending_text():
    with pytest.raises(InputError, match="XY"):
        direction_of_label("XY")


def test_eight_directions_bijective():
    assert len(DIRECTIONS) == 8
    assert [d.angle for d in DIRECTIONS] == [45.0 * i for i in range(8)]
    assert len({d.label for d in DIRECTIONS}) == 8
    for d in DIRECTIONS:
        assert direction_of_label(d.label) is d
        assert Direction(d.index) is d


@pytest.mark.parametrize("a, b, metric, expected", [
    ("N", "N", "linear", 0),
    ("N", "NW", "linear", 7),
    ("N", "NW", "circular", 1),
    ("NE", "SW", "circular", 4),
    ("E", "W", "linear", 4),
])
def test_separation_examples(a, b, metric, expected):
    assert separation(Direction[a], Direction[b], metric) == expected


@given(directions, directions, metrics)
def test_separation_symmetric(a, b, metric):
    assert separation(a, b, metric) == separation(b, a, metric)


@given(directions, directions)
def test_circular_bounded_by_linear_and_four(a, b):
    c = separation(a, b, "circular")
    assert c <= separation(a, b, "linear")
    assert c <= 4


def test_separation_rejects_unknown_metric():
    with pytest.raises(ConfigError):
        separation(Direction.N, Direction.E, "manhattan")


def test_recording_invariants():
    rec = Recording.from_arrays("s", np.zeros((8, 5)))
    assert rec.n_samples == 5 and rec.sample_rate == 1.0
    assert [c.direction for c in rec.channels] == list(DIRECTIONS)
    with pytest.raises(InputError):
        Recording.from_arrays("s", np.zeros((7, 5)))
    with pytest.raises(InputError):
        Recording.from_arrays("s", np.zeros((8, 1)))
    with pytest.raises(InputError):
        Recording.from_arrays("s", np.zeros((8, 5)), sample_rate=0)


def test_recording_is_immutable():
    rec = Recording.from_arrays("s", np.zeros((8, 5)))
    with pytest.raises(ValueError):
        rec.channels[0].samples[0] = 1.0


def test_nan_marks_invalid():
    x = np.zeros((8, 4))
    x[3, 1] = np.nan
    rec = Recording.from_arrays("s", x)
    assert rec.valid.sum() == 31
    assert not rec.channel(Direction.SE).validity_mask[1]


def test_empty_burst_rejected():
    with pytest.raises(InvariantError):
        Burst(Direction.N, ())


def test_config_defaults_and_validation():
    cfg = AnalysisConfig()
    assert cfg.reference_direction is Direction.E
    assert cfg.dispersion_k == 4.0 and cfg.burst_gap_s == 600.0
    assert AnalysisConfig(reference_direction="w").reference_direction is Direction.W
    with pytest.raises(ConfigError):
        AnalysisConfig(burst_gap_s=0)
    with pytest.raises(ConfigError):
        AnalysisConfig(separation_metric="ring")
    with pytest.raises(ConfigError):
        AnalysisConfig(max_gap_interp_samples=-1)
