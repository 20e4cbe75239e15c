"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 config error, 3 internal invariant
violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__, pipeline, synth
from .config import load_config
from .core import ConfigError, InputError, InvariantError
from .ingest import load_recording, write_recording

log = logging.getLogger("slowspike")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

PRESETS = {
    "anisotropic": synth.anisotropic_regime,
    "propagation": synth.propagation_regime,
    "noise": synth.noise_only,
}


def _add_config_flags(p):
    p.add_argument("-c", "--config", help="INI configuration file")
    p.add_argument("--reference", dest="reference_direction",
                   help="reference direction for propagation (compass label)")
    p.add_argument("--window-s", dest="propagation_window_s", type=float,
                   help="propagation analysis window in seconds")
    p.add_argument("--detrend-window-s", type=float)
    p.add_argument("--burst-gap-s", type=float)
    p.add_argument("--dispersion-k", type=float)
    p.add_argument("--min-spike-duration-s", type=float)
    p.add_argument("--separation-metric", choices=["linear", "circular"])
    p.add_argument("--units", choices=["mV", "V"])


def _config(args):
    keys = ("reference_direction", "propagation_window_s", "detrend_window_s", "burst_gap_s",
            "dispersion_k", "min_spike_duration_s", "separation_metric", "units")
    return load_config(args.config, {k: getattr(args, k, None) for k in keys})


def build_parser():
    parser = argparse.ArgumentParser(prog="slowspike", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording with ground truth")
    p.add_argument("--preset", choices=sorted(PRESETS), default="anisotropic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-s", type=float)
    p.add_argument("--session-id")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("detect", help="detect spikes and channel coupling in recordings")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out", required=True, help="directory receiving one folder per session")
    _add_config_flags(p)

    for name, help_ in (("analyze", "direction statistics, ISIs and bursts from detect output"),
                        ("propagate", "propagation delays from detect output")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("detect_files", nargs="+")
        p.add_argument("-o", "--out", help="output directory (default: next to each input)")
        _add_config_flags(p)

    p = sub.add_parser("score", help="score detect output against synthetic ground truth")
    p.add_argument("detect_file")
    p.add_argument("truth_file")
    p.add_argument("--tol-s", type=float, default=30.0)
    p.add_argument("-o", "--out", help="output directory (default: next to detect file)")

    p = sub.add_parser("report", help="assemble session outputs into the report bundle")
    p.add_argument("session_dirs", nargs="+")
    p.add_argument("-o", "--out", required=True)
    _add_config_flags(p)

    p = sub.add_parser("run", help="full pipeline from recordings to report")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--truth", action="append", help="ground-truth file per input, in order")
    _add_config_flags(p)
    return parser


def _cmd_synth(args):
    factory = PRESETS[args.preset]
    kwargs = {"seed": args.seed}
    if args.duration_s is not None:
        kwargs["duration_s"] = args.duration_s
    if args.session_id:
        kwargs["session_id"] = args.session_id
    params = factory(**kwargs)
    rec, truth = synth.generate(params)
    with pipeline.staged_output(args.out) as scratch:
        sid = params.session_id
        write_recording(rec, os.path.join(scratch, f"{sid}.csv"))
        pipeline.write_json(os.path.join(scratch, f"{sid}.truth.json"), truth.as_dict())
    log.info("wrote %s (%d planted spikes)", sid, len(truth.spikes))


def _cmd_detect(args):
    cfg = _config(args)
    with pipeline.staged_output(args.out) as scratch:
        for path in args.inputs:
            rec = load_recording(path, cfg.columns)
            payload = pipeline.detect_payload(rec, cfg)
            pipeline.write_session(os.path.join(scratch, rec.session_id), detect=payload)
            log.info("%s: %d spikes", rec.session_id,
                     sum(len(c["spikes"]) for c in payload["channels"]))


def _stage_cmd(builder, kind):
    def run(args):
        cfg = _config(args)
        for path in args.detect_files:
            detect = pipeline.read_payload(path, "detect")
            payload = builder(detect, cfg)
            outdir = args.out or os.path.dirname(os.path.abspath(path))
            with pipeline.staged_output(outdir) as scratch:
                if kind == "analysis":
                    pipeline.write_session(scratch, analysis=payload)
                else:
                    pipeline.write_json(os.path.join(scratch, f"{kind}.json"), payload)
    return run


def _cmd_score(args):
    detect = pipeline.read_payload(args.detect_file, "detect")
    try:
        with open(args.truth_file) as fh:
            truth = synth.GroundTruth.from_dict(json.load(fh))
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.truth_file}: unreadable ground truth ({exc})",
                         module="synth") from None
    payload = pipeline.score_payload(detect, truth, args.tol_s)
    outdir = args.out or os.path.dirname(os.path.abspath(args.detect_file))
    with pipeline.staged_output(outdir) as scratch:
        pipeline.write_json(os.path.join(scratch, "score.json"), payload)
    pooled = payload["scores"]["pooled"]
    print(f"precision={pooled['precision']} recall={pooled['recall']} f1={pooled['f1']}")


def _cmd_report(args):
    cfg = _config(args)
    sessions = [pipeline.load_session(d) for d in args.session_dirs]
    report = pipeline.canonical(pipeline.build_report(sessions, cfg))
    pipeline._check_report(report)
    with pipeline.staged_output(args.out) as scratch:
        pipeline.write_report(report, sessions, scratch)


def _cmd_run(args):
    cfg = _config(args)
    pipeline.run_pipeline(cfg, args.inputs, args.out, truths=args.truth)


COMMANDS = {
    "synth": _cmd_synth,
    "detect": _cmd_detect,
    "analyze": _stage_cmd(pipeline.analysis_payload, "analysis"),
    "propagate": _stage_cmd(pipeline.propagation_payload, "propagation"),
    "score": _cmd_score,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except InputError as exc:
        print(f"slowspike {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"slowspike {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"slowspike {args.command}: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"slowspike {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - unexpected failures map to exit code 3
        log.debug("internal failure", exc_info=True)
        print(f"slowspike {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
