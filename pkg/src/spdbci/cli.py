"""Command-line entry point.

Subcommands: ``synth`` writes a synthetic session (EEG containers plus a
ground-truth sidecar), ``calibrate`` fits a model from one, ``replay`` runs a
session through the decoder under a recentering mode and writes a log,
``analyze`` turns logs and sessions into CSV/JSON reports, and ``defaults``
prints the full configuration in the accepted file format. Structured
failures print a JSON error object to stderr and exit with status 2.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import DEFAULTS, config_hash, load_config
from .errors import PipelineError
from .io import read_json, read_session, write_json, write_session
from .pipeline import CalibratedModel, SessionLog, analyze, calibrate, replay
from .synth import generate_session, make_default_spec


def _split_session_handle(handle):
    p = Path(handle)
    if not p.name:
        raise PipelineError(f"bad session handle {handle!r}")
    return p.parent if str(p.parent) else Path("."), p.name


def _spec_from_config(cfg):
    return make_default_spec(
        subject_seed=cfg["synth.subject_seed"],
        n_runs=cfg["synth.n_runs"],
        trials_per_run=cfg["synth.trials_per_run"],
        online=cfg["synth.online"],
        n_channels=cfg["synth.n_channels"],
        noise_floor=cfg["synth.noise_floor"],
        drift_strength=cfg["synth.drift_strength"],
        movement_broadband=cfg["synth.movement_broadband"],
    )


def cmd_synth(args, cfg):
    spec = _spec_from_config(cfg)
    runs, truth = generate_session(spec, args.seed)
    paths, truth_path = write_session(args.out_dir, args.prefix, runs, truth)
    for p in paths:
        print(f"wrote {p}")
    print(f"wrote {truth_path}")
    return 0


def cmd_calibrate(args, cfg):
    in_dir, prefix = _split_session_handle(args.session)
    runs, truth = read_session(in_dir, prefix)
    model = calibrate(runs, truth, cfg)
    out = Path(args.out_dir) / args.model_name
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, model.to_dict())
    print(f"wrote {out}")
    print(f"cv onset_auc={model.cv['onset_auc']:.4f} "
          f"offset_auc={model.cv['offset_auc']:.4f}")
    print(f"theta onset={model.theta_onset:.4f} offset={model.theta_offset:.4f}")
    return 0


def cmd_replay(args, cfg, mode):
    in_dir, prefix = _split_session_handle(args.session)
    runs, truth = read_session(in_dir, prefix)
    model = CalibratedModel.from_dict(read_json(args.model))
    log = replay(runs, truth, model, mode, cfg=cfg)
    name = args.log_name or f"replay_{prefix}_{mode}.json"
    out = Path(args.out_dir) / name
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, log.to_dict())
    print(f"wrote {out}")
    hits = sum(t["onset_outcome"] == "hit" for r in log.runs for t in r.trials)
    total = sum(len(r.trials) for r in log.runs)
    print(f"mode={mode} trials={total} onset_hits={hits}")
    return 0


def cmd_analyze(args, cfg):
    logs = [SessionLog.from_dict(read_json(p)) for p in args.log]
    labels = args.label or [Path(p).stem for p in args.log]
    if len(labels) != len(logs):
        raise PipelineError("need exactly one --label per --log")
    session = None
    if args.session:
        in_dir, prefix = _split_session_handle(args.session)
        session = read_session(in_dir, prefix)
    summary = analyze(args.out_dir, logs=logs, labels=labels,
                      session=session, cfg=cfg)
    print(f"wrote {Path(args.out_dir) / 'summary.json'}")
    for label in summary.get("labels", []):
        for row in summary.get("runs", {}).get(label, []):
            print(f"{label} run {row['run_id']}: "
                  f"onset_auc={row['onset_auc']:.4f} "
                  f"offset_auc={row['offset_auc']:.4f}")
    return 0


def cmd_defaults(args, cfg):
    for key in sorted(DEFAULTS):
        value = cfg[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        print(f"{key} = {value}")
    print(f"# hash {config_hash(cfg)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spdbci",
        description="Riemannian motor-imagery decoding: synthesis, "
                    "calibration, replay, analysis.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", default=None, help="key = value file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--mode", choices=["identity", "task", "fixation"],
                        default=None, help="recentering mode (replay)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic session")
    p.add_argument("--prefix", default="session")

    p = sub.add_parser("calibrate", help="fit a model from a labeled session")
    p.add_argument("--session", required=True,
                   help="session handle: <dir>/<prefix>")
    p.add_argument("--model-name", default="model.json")

    p = sub.add_parser("replay", help="stream a session through the decoder")
    p.add_argument("--session", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--log-name", default=None)

    p = sub.add_parser("analyze", help="reports from replay logs and sessions")
    p.add_argument("--log", action="append", default=[],
                   help="replay log (repeatable; first is the baseline)")
    p.add_argument("--label", action="append", default=None)
    p.add_argument("--session", default=None,
                   help="session handle for the ERD/ERS spectrogram")

    sub.add_parser("defaults", help="print the effective configuration")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        mode = args.mode or cfg["recenter.mode"]
        if args.command == "synth":
            return cmd_synth(args, cfg)
        if args.command == "calibrate":
            return cmd_calibrate(args, cfg)
        if args.command == "replay":
            return cmd_replay(args, cfg, mode)
        if args.command == "analyze":
            return cmd_analyze(args, cfg)
        if args.command == "defaults":
            return cmd_defaults(args, cfg)
        raise PipelineError(f"unknown command {args.command!r}")
    except PipelineError as exc:
        payload = {"error": exc.code, "message": str(exc)}
        payload.update(exc.payload())
        print(json.dumps(payload, sort_keys=True, default=str),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
