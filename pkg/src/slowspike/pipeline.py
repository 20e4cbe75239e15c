"""End-to-end orchestration and the serialized stage formats.

Every stage reads and writes JSON documents tagged with a schema name and
version. The monolithic :func:`run_pipeline` pushes each payload through a
JSON round trip before handing it on, so running the stages one at a time
from files gives byte-identical results.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from . import __version__
from .core import DIRECTIONS, Direction, InputError, InvariantError, SpikeEvent
from .config import PipelineConfig
from .coupling import CorrelationMatrix, correlation_matrix, mean_matrix, separation_decay
from .events import (SpikeTrain, detect_spikes, direction_stats, group_bursts, isi_histogram,
                     pooled_direction_stats)
from .ingest import detrend, load_recording, normalise, repair_gaps
from .propagation import (DelayTable, burst_onsets, concat_delay_tables, match_delays,
                          polar_summary, summarize_propagation)
from .synth import GroundTruth, score_detection

SCHEMA_VERSION = 1
SCHEMAS = ("detect", "analysis", "propagation", "report", "score")


# ---------------------------------------------------------------- json helpers

def jsonable(obj):
    """Plain JSON types; NaN and infinities become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, Direction):
        return obj.label
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(payload) -> str:
    return json.dumps(jsonable(payload), sort_keys=True, indent=1, allow_nan=False) + "\n"


def canonical(payload):
    return json.loads(dumps(payload))


def _tag(kind, body):
    return {"schema": f"slowspike.{kind}", "schema_version": SCHEMA_VERSION, **body}


def check_schema(payload, kind, source="<memory>"):
    expected = f"slowspike.{kind}"
    found = payload.get("schema") if isinstance(payload, dict) else None
    version = payload.get("schema_version") if isinstance(payload, dict) else None
    if found != expected or version != SCHEMA_VERSION:
        raise InputError(f"{source}: expected schema {expected} v{SCHEMA_VERSION}, "
                         f"found {found} v{version}", module="cli")
    return payload


def read_payload(path, kind):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: file not found", module="cli") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})", module="cli") from None
    return check_schema(payload, kind, path)


def _nan(x):
    return float("nan") if x is None else float(x)


# ---------------------------------------------------------------- stage payloads

def detect_payload(rec, cfg: PipelineConfig) -> dict:
    """Signal-level stage: repair, detrend, detect spikes, correlate channels."""
    a = cfg.analysis
    rec = repair_gaps(rec, a.max_gap_interp_samples)
    det = detrend(rec, a.detrend_window_s)
    trains = detect_spikes(det, a)
    norm = normalise(det)
    try:
        corr = correlation_matrix(norm)
        coupling = {"values": corr.values, "n_overlap": corr.n_overlap,
                    "excluded": sorted(d.label for d in corr.excluded)}
    except InputError:
        coupling = None
    channels = []
    for t in trains:
        channels.append({
            "direction": t.direction.label,
            "threshold_mV": t.threshold_mV,
            "flat": t.flat,
            "observed_duration_s": t.observed_duration_s,
            "spikes": [[s.onset_s, s.peak_s, s.offset_s, s.amplitude_mV] for s in t.spikes],
        })
    return _tag("detect", {
        "session_id": rec.session_id,
        "sample_rate": rec.sample_rate,
        "t0": rec.t0,
        "n_samples": rec.n_samples,
        "config": cfg.echo(),
        "channels": channels,
        "coupling": coupling,
    })


def trains_from_payload(detect: dict) -> list[SpikeTrain]:
    trains = []
    for ch in detect["channels"]:
        d = Direction[ch["direction"]]
        spikes = tuple(SpikeEvent(d, *row) for row in ch["spikes"])
        trains.append(SpikeTrain(d, spikes, ch["observed_duration_s"],
                                 _nan(ch["threshold_mV"]), ch["flat"]))
    return trains


def matrix_from_payload(detect: dict) -> CorrelationMatrix | None:
    c = detect.get("coupling")
    if c is None:
        return None
    values = np.array([[_nan(v) for v in row] for row in c["values"]])
    return CorrelationMatrix(values, np.array(c["n_overlap"]),
                             frozenset(Direction[x] for x in c["excluded"]))


def _stats_dict(s):
    q1, med, q3 = s.amplitude_quartiles_mV
    return {
        "direction": s.direction.label,
        "angle_deg": s.direction.angle,
        "spike_count": s.spike_count,
        "observed_duration_s": s.observed_duration_s,
        "rate_per_min": s.rate_per_min,
        "amplitude_q1_mV": q1,
        "amplitude_median_mV": med,
        "amplitude_q3_mV": q3,
        "amplitude_max_mV": s.amplitude_max_mV,
        "isi_s": list(s.isi_list_s),
    }


def _isi_dict(isis, width, max_s):
    h = isi_histogram(isis, width, max_s)
    return {"bin_width_s": width, "max_s": max_s, "bin_edges_s": h.bin_edges_s,
            "counts": h.counts, "overflow": h.overflow}


def _burst_rows(trains, gap):
    rows = []
    for t in trains:
        for k, b in enumerate(group_bursts(t, gap)):
            rows.append({"direction": t.direction.label, "burst_id": k, "onset_s": b.onset_s,
                         "offset_s": b.offset_s, "duration_s": b.duration_s, "size": b.size})
    return rows


def _decay_dict(matrix, metric):
    if matrix is None:
        return None
    dec = separation_decay(matrix, metric)
    return {"metric": metric, "separation": dec.separations, "mean_r": dec.mean_r,
            "sd_r": dec.sd_r, "n_pairs": dec.n_pairs}


def _event_sections(stats, isis, bursts, matrix, cfg):
    r = cfg.report
    return {
        "direction_stats": [_stats_dict(s) for s in stats],
        "isi_histograms": {
            "short": _isi_dict(isis, r.isi_bin_short_s, r.isi_max_short_s),
            "long": _isi_dict(isis, r.isi_bin_long_s, r.isi_max_long_s),
        },
        "bursts": bursts,
        "correlation": None if matrix is None else {
            "values": matrix.values, "n_overlap": matrix.n_overlap,
            "excluded": sorted(d.label for d in matrix.excluded)},
        "decay": _decay_dict(matrix, cfg.analysis.separation_metric),
        "rates_polar": [{"angle_deg": a, "direction": d.label, "rate_per_min": v}
                        for a, d, v in polar_summary({s.direction: s.rate_per_min
                                                      for s in stats})],
    }


def analysis_payload(detect: dict, cfg: PipelineConfig) -> dict:
    """Per-direction statistics, ISI histograms, bursts and correlation decay."""
    detect = check_schema(detect, "detect")
    trains = trains_from_payload(detect)
    stats = [direction_stats(t) for t in trains]
    isis = np.concatenate([np.diff(t.onsets) for t in trains])
    body = _event_sections(stats, isis, _burst_rows(trains, cfg.analysis.burst_gap_s),
                           matrix_from_payload(detect), cfg)
    body["session_id"] = detect["session_id"]
    body["config"] = cfg.echo()
    return _tag("analysis", body)


def _propagation_sections(table: DelayTable | None):
    if table is None or table.n_events == 0:
        return {"n_reference_onsets": 0, "summary": [], "delays": [], "polar": []}
    summary = summarize_propagation(table)
    rows = []
    for k, onset in enumerate(table.onsets_s):
        for d in DIRECTIONS:
            if d in table.delays:
                delay = table.delays[d][k]
                rows.append({"event": k, "onset_s": onset, "direction": d.label,
                             "matched": bool(np.isfinite(delay)), "delay_s": delay})
    summ_rows = []
    for d, s in summary.items():
        summ_rows.append({"direction": d.label, "angle_deg": d.angle,
                          "median_delay_s": s.median_delay_s,
                          "q1_delay_s": s.iqr_s[0] if s.iqr_s else None,
                          "q3_delay_s": s.iqr_s[1] if s.iqr_s else None,
                          "match_rate": s.match_rate, "n_matched": s.n_matched,
                          "n_events": s.n_events})
    polar = [{"angle_deg": a, "direction": d.label,
              "median_delay_s": None if v is None else v.median_delay_s}
             for a, d, v in polar_summary(summary)]
    return {"n_reference_onsets": table.n_events, "summary": summ_rows, "delays": rows,
            "polar": polar}


def _delay_table(trains, cfg):
    a = cfg.analysis
    ref = trains[int(a.reference_direction)]
    onsets = burst_onsets(group_bursts(ref, a.burst_gap_s))
    return match_delays(onsets, trains, a.propagation_window_s, a.reference_direction)


def propagation_payload(detect: dict, cfg: PipelineConfig) -> dict:
    """Reference burst onsets matched against first spikes in the other directions."""
    detect = check_schema(detect, "detect")
    trains = trains_from_payload(detect)
    table = _delay_table(trains, cfg)
    body = _propagation_sections(table)
    body.update(session_id=detect["session_id"], config=cfg.echo(),
                reference_direction=cfg.analysis.reference_direction.label,
                window_s=cfg.analysis.propagation_window_s,
                onsets_s=list(table.onsets_s))
    return _tag("propagation", body)


def delay_table_from_payload(prop: dict) -> DelayTable:
    ref = Direction[prop["reference_direction"]]
    onsets = np.array(prop["onsets_s"], dtype=float)
    delays = {d: np.full(len(onsets), np.nan) for d in DIRECTIONS if d != ref}
    for row in prop["delays"]:
        if row["matched"]:
            delays[Direction[row["direction"]]][row["event"]] = row["delay_s"]
    return DelayTable(ref, float(prop["window_s"]), onsets, delays)


def score_payload(detect: dict, truth: GroundTruth, tol_s: float) -> dict:
    detect = check_schema(detect, "detect")
    scores = score_detection(trains_from_payload(detect), truth, tol_s)
    return _tag("score", {
        "session_id": detect["session_id"],
        "tol_s": tol_s,
        "scores": {(k.label if isinstance(k, Direction) else k): v.as_dict()
                   for k, v in scores.items()},
    })


# ---------------------------------------------------------------- report

def build_report(sessions: Sequence[dict], cfg: PipelineConfig) -> dict:
    """Assemble per-session sections and event-level pooled sections.

    Each element of ``sessions`` is a dict with ``detect``, ``analysis`` and
    ``propagation`` payloads and optionally ``score``.
    """
    if not sessions:
        raise InputError("report needs at least one session", module="cli")
    ids = [s["detect"]["session_id"] for s in sessions]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate session ids: {ids}", module="cli")
    per_session, all_trains, matrices, tables, scores = {}, [], [], [], {}
    for s in sessions:
        detect = check_schema(s["detect"], "detect")
        analysis = check_schema(s["analysis"], "analysis")
        prop = check_schema(s["propagation"], "propagation")
        sid = detect["session_id"]
        if analysis["session_id"] != sid or prop["session_id"] != sid:
            raise InputError(f"stage outputs disagree on session id for {sid}", module="cli",
                             session=sid)
        per_session[sid] = {
            k: analysis[k] for k in ("direction_stats", "isi_histograms", "bursts",
                                     "correlation", "decay", "rates_polar")}
        per_session[sid]["propagation"] = {
            k: prop[k] for k in ("n_reference_onsets", "summary", "delays", "polar")}
        all_trains.append(trains_from_payload(detect))
        m = matrix_from_payload(detect)
        if m is not None:
            matrices.append(m)
        if prop["n_reference_onsets"]:
            tables.append(delay_table_from_payload(prop))
        if s.get("score") is not None:
            scores[sid] = check_schema(s["score"], "score")["scores"]

    pooled_stats = [pooled_direction_stats([trains[int(d)] for trains in all_trains])
                    for d in DIRECTIONS]
    isis = np.concatenate([list(st.isi_list_s) for st in pooled_stats])
    bursts = []
    for sid, sess in per_session.items():
        bursts += [{"session_id": sid, **row} for row in sess["bursts"]]
    pooled_matrix = mean_matrix(matrices) if matrices else None
    pooled = _event_sections(pooled_stats, isis, bursts, pooled_matrix, cfg)
    pooled["sessions"] = ids
    pooled["propagation"] = _propagation_sections(concat_delay_tables(tables) if tables else None)
    rate_rows = []
    for d in DIRECTIONS:
        rates = [sess["direction_stats"][int(d)]["rate_per_min"] for sess in per_session.values()]
        rate_rows.append({"direction": d.label, "angle_deg": d.angle,
                          "mean_rate_per_min": float(np.mean(rates)),
                          "sd_rate_per_min": float(np.std(rates)), "n_sessions": len(rates)})
    pooled["rates_across_sessions"] = rate_rows

    report = _tag("report", {
        "metadata": {"tool": "slowspike", "tool_version": __version__,
                     "config": cfg.echo(), "sessions": ids},
        "sessions": per_session,
        "pooled": pooled,
    })
    if scores:
        report["detection_quality"] = scores
    return report


# ---------------------------------------------------------------- tables

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            values = [row[h] for h in header] if isinstance(row, dict) else row
            w.writerow([_fmt(v) for v in values])


def spike_rows(detect: dict):
    sid = detect["session_id"]
    for ch in detect["channels"]:
        for on, pk, off, amp in ch["spikes"]:
            yield {"session_id": sid, "direction": ch["direction"], "onset_s": on, "peak_s": pk,
                   "offset_s": off, "amplitude_mV": amp, "duration_s": off - on}


SPIKE_COLUMNS = ["session_id", "direction", "onset_s", "peak_s", "offset_s", "amplitude_mV",
                 "duration_s"]
BURST_COLUMNS = ["session_id", "direction", "burst_id", "onset_s", "offset_s", "duration_s",
                 "size"]


def write_tables(report: dict, spikes: Sequence[dict], outdir) -> list[str]:
    """One delimited table per figure-equivalent; returns the file names."""
    os.makedirs(outdir, exist_ok=True)
    scopes = list(report["sessions"].items()) + [("pooled", report["pooled"])]
    written = []

    def table(name, header, rows):
        write_table(os.path.join(outdir, name), header, rows)
        written.append(name)

    rate_cols = ["session_id", "direction", "angle_deg", "spike_count", "observed_duration_s",
                 "rate_per_min"]
    table("spike_rates.csv", rate_cols,
          [{"session_id": sid, **r} for sid, sec in scopes for r in sec["direction_stats"]])
    table("spike_rates_across_sessions.csv",
          ["direction", "angle_deg", "mean_rate_per_min", "sd_rate_per_min", "n_sessions"],
          report["pooled"]["rates_across_sessions"])
    table("spike_rates_polar.csv", ["session_id", "angle_deg", "direction", "rate_per_min"],
          [{"session_id": sid, **r} for sid, sec in scopes for r in sec["rates_polar"]])
    table("amplitude_summary.csv",
          ["session_id", "direction", "spike_count", "amplitude_q1_mV", "amplitude_median_mV",
           "amplitude_q3_mV", "amplitude_max_mV"],
          [{"session_id": sid, **r} for sid, sec in scopes for r in sec["direction_stats"]])
    table("spikes.csv", SPIKE_COLUMNS, spikes)

    amps = np.array([s["amplitude_mV"] for s in spikes], dtype=float)
    width = report["metadata"]["config"]["report"]["amplitude_bin_mV"]["value"]
    n_bins = max(1, int(np.ceil(amps.max() / width))) if amps.size else 1
    counts = np.bincount(np.minimum((amps // width).astype(int), n_bins - 1), minlength=n_bins)
    table("amplitude_histogram.csv", ["bin_lo_mV", "bin_hi_mV", "count"],
          [(k * width, (k + 1) * width, int(c)) for k, c in enumerate(counts)])

    for key, name in (("short", "isi_histogram_short.csv"), ("long", "isi_histogram_long.csv")):
        rows = []
        for sid, sec in scopes:
            h = sec["isi_histograms"][key]
            edges = h["bin_edges_s"]
            rows += [(sid, "bin", lo, hi, c) for lo, hi, c in zip(edges, edges[1:], h["counts"])]
            rows.append((sid, "overflow", h["max_s"], None, h["overflow"]))
        table(name, ["session_id", "kind", "bin_lo_s", "bin_hi_s", "count"], rows)

    table("bursts.csv", BURST_COLUMNS,
          [r if "session_id" in r else {"session_id": sid, **r}
           for sid, sec in scopes[:-1] for r in sec["bursts"]])

    rows = []
    for sid, sec in scopes:
        c = sec["correlation"]
        if c is None:
            continue
        for i, di in enumerate(DIRECTIONS):
            for j, dj in enumerate(DIRECTIONS):
                rows.append((sid, di.label, dj.label, c["values"][i][j], c["n_overlap"][i][j]))
    table("correlation_matrix.csv", ["session_id", "i_label", "j_label", "r", "n_overlap"], rows)
    rows = []
    for sid, sec in scopes:
        dec = sec["decay"]
        if dec is None:
            continue
        rows += [(sid, s, m, sd, n) for s, m, sd, n in
                 zip(dec["separation"], dec["mean_r"], dec["sd_r"], dec["n_pairs"])]
    table("correlation_decay.csv", ["session_id", "s", "mean_r", "sd_r", "n_pairs"], rows)

    props = [(sid, sec["propagation"]) for sid, sec in scopes]
    table("propagation_summary.csv",
          ["session_id", "direction", "angle_deg", "median_delay_s", "q1_delay_s", "q3_delay_s",
           "match_rate", "n_matched", "n_events"],
          [{"session_id": sid, **r} for sid, p in props for r in p["summary"]])
    table("propagation_delays.csv",
          ["session_id", "event", "onset_s", "direction", "matched", "delay_s"],
          [{"session_id": sid, **r} for sid, p in props[:-1] for r in p["delays"]])
    table("propagation_polar.csv", ["session_id", "angle_deg", "direction", "median_delay_s"],
          [{"session_id": sid, **r} for sid, p in props for r in p["polar"]])
    table("match_rates.csv", ["session_id", "direction", "angle_deg", "match_rate", "n_events"],
          [{"session_id": sid, **r} for sid, p in props for r in p["summary"]])
    return written


# ---------------------------------------------------------------- output handling

@contextmanager
def staged_output(outdir):
    """Write into a scratch directory and move files into ``outdir`` only on success."""
    parent = os.path.dirname(os.path.abspath(outdir)) or "."
    os.makedirs(parent, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=".slowspike-", dir=parent)
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    os.makedirs(outdir, exist_ok=True)
    for root, _, files in os.walk(scratch):
        rel = os.path.relpath(root, scratch)
        target = os.path.normpath(os.path.join(outdir, rel))
        os.makedirs(target, exist_ok=True)
        for f in files:
            os.replace(os.path.join(root, f), os.path.join(target, f))
    shutil.rmtree(scratch, ignore_errors=True)


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dumps(payload))


def write_session(dirpath, detect=None, analysis=None, propagation=None, score=None):
    os.makedirs(dirpath, exist_ok=True)
    for name, payload in (("detect", detect), ("analysis", analysis),
                          ("propagation", propagation), ("score", score)):
        if payload is not None:
            write_json(os.path.join(dirpath, f"{name}.json"), payload)
    if detect is not None:
        write_table(os.path.join(dirpath, "spikes.csv"), SPIKE_COLUMNS, spike_rows(detect))
    if analysis is not None:
        write_table(os.path.join(dirpath, "bursts.csv"), BURST_COLUMNS,
                    [{"session_id": analysis["session_id"], **r} for r in analysis["bursts"]])


def load_session(dirpath) -> dict:
    session = {kind: read_payload(os.path.join(dirpath, f"{kind}.json"), kind)
               for kind in ("detect", "analysis", "propagation")}
    score = os.path.join(dirpath, "score.json")
    session["score"] = read_payload(score, "score") if os.path.exists(score) else None
    return session


def write_report(report, sessions, outdir):
    spikes = [row for s in sessions for row in spike_rows(s["detect"])]
    write_json(os.path.join(outdir, "report.json"), report)
    write_tables(report, spikes, os.path.join(outdir, "tables"))
    write_json(os.path.join(outdir, "run_info.json"), {
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "tool_version": __version__,
        "note": "volatile header; report.json holds the reproducible payload",
    })


def _session_stages(path, cfg, truth_path=None):
    try:
        rec = load_recording(path, cfg.columns)
        detect = canonical(detect_payload(rec, cfg))
        analysis = canonical(analysis_payload(detect, cfg))
        prop = canonical(propagation_payload(detect, cfg))
        score = None
        if truth_path is not None:
            with open(truth_path) as fh:
                truth = GroundTruth.from_dict(json.load(fh))
            score = canonical(score_payload(detect, truth, cfg.report.score_tol_s))
    except InputError as exc:
        if exc.session is None:
            raise InputError(str(exc), module=exc.module, session=os.path.basename(str(path)),
                             channel=exc.channel) from None
        raise
    return {"detect": detect, "analysis": analysis, "propagation": prop, "score": score}


def run_pipeline(cfg: PipelineConfig, inputs: Sequence, outdir, truths=None,
                 max_workers: int | None = None) -> dict:
    """Run every stage on each input recording and write the full report bundle.

    Sessions are processed concurrently; the report is assembled afterwards
    in input order. Nothing is left in ``outdir`` if any stage fails.
    """
    if not inputs:
        raise InputError("no input recordings given", module="cli")
    truths = list(truths or [None] * len(inputs))
    if len(truths) != len(inputs):
        raise InputError("need one ground-truth file per input when any is given", module="cli")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        sessions = list(pool.map(lambda a: _session_stages(a[0], cfg, a[1]),
                                 zip(inputs, truths)))
    report = canonical(build_report(sessions, cfg))
    _check_report(report)
    with staged_output(outdir) as scratch:
        for s in sessions:
            write_session(os.path.join(scratch, "sessions", s["detect"]["session_id"]),
                          s["detect"], s["analysis"], s["propagation"], s["score"])
        write_report(report, sessions, scratch)
    return report


def _check_report(report):
    for sid, sec in report["sessions"].items():
        c = sec["correlation"]
        if c is None:
            continue
        v = np.array([[_nan(x) for x in row] for row in c["values"]])
        if not np.array_equal(np.isnan(v), np.isnan(v.T)) or \
                not np.array_equal(np.nan_to_num(v), np.nan_to_num(v.T)):
            raise InvariantError(f"correlation matrix of session {sid} is not symmetric")
    for st in report["pooled"]["direction_stats"]:
        if st["spike_count"] and not (st["amplitude_q1_mV"] <= st["amplitude_median_mV"]
                                      <= st["amplitude_q3_mV"] <= st["amplitude_max_mV"]):
            raise InvariantError(f"amplitude quartiles out of order for {st['direction']}")
