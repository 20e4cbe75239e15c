"""Analysis of slow multichannel electrophysiological recordings from a star electrode array."""
from .core import (DIRECTIONS, AnalysisConfig, Burst, ChannelSeries, ConfigError, Direction,
                   InputError, InvariantError, Recording, SpikeEvent, direction_of_label,
                   separation)

__version__ = "0.1.0"

__all__ = [
    "DIRECTIONS",
    "AnalysisConfig",
    "Burst",
    "ChannelSeries",
    "ConfigError",
    "Direction",
    "InputError",
    "InvariantError",
    "Recording",
    "SpikeEvent",
    "direction_of_label",
    "separation",
]
