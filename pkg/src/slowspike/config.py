"""Pipeline configuration: INI file with one section per module.

Values resolve as command-line flags > config file > built-in defaults, and
the echo records which of the three supplied each value.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .core import DIRECTIONS, AnalysisConfig, ConfigError, InputError, direction_of_label
from .ingest import ColumnSpec

__all__ = ["ReportOptions", "PipelineConfig", "DEFAULTS", "CONVENTIONS", "load_config"]


@dataclass(frozen=True)
class ReportOptions:
    isi_bin_short_s: float = 60.0
    isi_max_short_s: float = 3600.0
    isi_bin_long_s: float = 600.0
    isi_max_long_s: float = 36000.0
    amplitude_bin_mV: float = 5.0
    score_tol_s: float = 30.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"{f.name} must be positive")


# section -> key -> (default, parser)
DEFAULTS = {
    "ingest": {
        "time_column": ("t", str),
        "units": ("mV", str),
        "detrend_window_s": (3600.0, float),
        "max_gap_interp_samples": (5, int),
    },
    "events": {
        "dispersion_k": (4.0, float),
        "min_spike_duration_s": (30.0, float),
        "merge_gap_s": (10.0, float),
        "burst_gap_s": (600.0, float),
    },
    "coupling": {
        "separation_metric": ("linear", str),
    },
    "propagation": {
        "reference_direction": ("E", str),
        "propagation_window_s": (3600.0, float),
    },
    "report": {f.name: (f.default, float) for f in fields(ReportOptions)},
}

# fixed analysis choices, echoed so reports can be interpreted
CONVENTIONS = {
    "baseline": "centred moving median, symmetric shrinking window at edges, invalid samples excluded",
    "variance": "population (divide by n)",
    "dispersion": "1.4826 * median absolute deviation of valid detrended samples",
    "polarity": "magnitude: |residual| compared with threshold, amplitude reported as magnitude",
    "spike_onset": "first supra-threshold sample; offset = end of last supra-threshold sample",
    "peak_ties": "earliest sample of maximal |residual|",
    "isi": "onset-to-onset, within a session",
    "burst_rule": "new burst when onset(next) - offset(previous) > burst_gap_s",
    "correlation": "zero-lag Pearson on normalised detrended series over jointly valid samples",
    "correlation_min_overlap": 100,
    "propagation_match": "first spike onset in [t, t + window]; lower bound inclusive",
    "propagation_overlap": "each reference onset matched independently",
    "quartiles": "linear interpolation between order statistics",
    "pooling": "event-level concatenation across sessions; correlation pooled as entrywise mean",
    "gap_repair": "linear interpolation of interior invalid runs up to max_gap_interp_samples",
}


@dataclass(frozen=True)
class PipelineConfig:
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    columns: ColumnSpec = field(default_factory=ColumnSpec)
    report: ReportOptions = field(default_factory=ReportOptions)
    sources: dict = field(default_factory=dict)

    def echo(self) -> dict:
        values = self.flat_values()
        out = {}
        for section, keys in DEFAULTS.items():
            out[section] = {k: {"value": values[k], "source": self.sources.get(k, "default")}
                            for k in keys}
        out["columns"] = {d.label: {"value": self.columns.column_for(d),
                                    "source": self.sources.get(f"columns.{d.label}", "default")}
                          for d in DIRECTIONS}
        out["conventions"] = dict(CONVENTIONS)
        return out

    def flat_values(self) -> dict:
        values = self.analysis.as_dict()
        values.update(time_column=self.columns.time_column, units=self.columns.units)
        values.update({f.name: getattr(self.report, f.name) for f in fields(ReportOptions)})
        return values


def _parse(section, key, raw):
    default, kind = DEFAULTS[section][key]
    try:
        value = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None
    if key == "reference_direction":
        try:
            value = direction_of_label(value).label
        except InputError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return value


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Resolve the pipeline configuration.

    ``overrides`` maps flat key names (e.g. ``"propagation_window_s"``) or
    ``"columns.<LABEL>"`` to values given on the command line; ``None`` values
    are ignored.
    """
    values, sources = {}, {}
    for section, keys in DEFAULTS.items():
        for key, (default, _) in keys.items():
            values[key] = default
    columns = {}

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section == "columns":
                for label, column in parser.items(section):
                    try:
                        d = direction_of_label(label)
                    except InputError as exc:
                        raise ConfigError(f"[columns] {exc}") from None
                    columns[d.label] = column.strip()
                    sources[f"columns.{d.label}"] = "file"
                continue
            if section not in DEFAULTS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                values[key] = _parse(section, key, raw.strip())
                sources[key] = "file"

    section_of = {k: s for s, keys in DEFAULTS.items() for k in keys}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("columns."):
            label = direction_of_label(key.split(".", 1)[1]).label
            columns[label] = str(value)
            sources[f"columns.{label}"] = "flag"
            continue
        if key not in section_of:
            raise ConfigError(f"unknown configuration key {key!r}")
        values[key] = _parse(section_of[key], key, value)
        sources[key] = "flag"

    analysis = AnalysisConfig(**{f.name: values[f.name] for f in fields(AnalysisConfig)})
    column_spec = ColumnSpec(values["time_column"], columns, values["units"])
    report = ReportOptions(**{f.name: values[f.name] for f in fields(ReportOptions)})
    return PipelineConfig(analysis, column_spec, report, sources)
