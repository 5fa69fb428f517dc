"""Command-line interface.

Every subcommand exits 0 on success. On failure it writes one JSON line
``{"error": <kind>, "message": <text>}`` to stderr and exits 1 (2 for
usage errors, which argparse reports itself).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .errors import ConfigError, HeadprintError
from .fingerprint import SynthSpec, load_library, save_library
from .geometry import Frame, camera_to_vr, offset_angle
from .harness import ExperimentConfig, _build, emit_report, run_experiment, synth_library
from .matcher import Calibrator, MatchConfig, identify_topk
from .openworld import open_world_report
from .simulate import (
    DriftModel,
    NoiseSpec,
    VictimParams,
    fit_yaw_drift,
    inject_estimation_noise,
    inject_yaw_drift,
    remove_yaw_drift,
    simulate_victim,
)
from .trace import dumps_trace, load_trace, save_trace


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _emit_trace(trace, out):
    if out:
        save_trace(trace, out)
    else:
        sys.stdout.write(dumps_trace(trace))


def cmd_synth_library(args):
    d = _read_json(args.spec)
    size = int(d.pop("library_size", 1))
    master_seed = int(d.pop("master_seed", 0))
    spec = _build(SynthSpec, d.get("synth", d), "synth")
    lib = synth_library(spec, size, master_seed)
    save_library(lib, args.out)
    print(json.dumps({"library": str(args.out), "videos": lib.video_ids}))


def cmd_simulate_victim(args):
    lib = load_library(args.library)
    try:
        fp = lib.get(args.video)
    except KeyError:
        raise ConfigError(f"video {args.video!r} not in library") from None
    params = _build(VictimParams, _read_json(args.params), "params") if args.params else VictimParams()
    trace = simulate_victim(fp, replace(params, seed=args.seed), fp.video_id)
    _emit_trace(trace, args.out)


def cmd_inject_noise(args):
    trace = load_trace(args.trace)
    spec = _build(NoiseSpec, _read_json(args.noise), "noise")
    noisy = inject_yaw_drift(inject_estimation_noise(trace, spec), spec.drift)
    _emit_trace(noisy, args.out)


def cmd_drift_fit(args):
    try:
        t0, y0, t1, y1 = (float(x) for x in args.anchors.split(","))
    except ValueError:
        raise ConfigError("--anchors expects t0,y0,t1,y1") from None
    m = fit_yaw_drift((t0, y0), (t1, y1))
    print(json.dumps({"theta": m.theta_deg_per_s, "theta0": m.theta0_deg}))


def cmd_drift_remove(args):
    trace = load_trace(args.trace)
    _emit_trace(remove_yaw_drift(trace, DriftModel(args.theta, args.theta0)), args.out)


def cmd_convert_trace(args):
    trace = load_trace(args.trace)
    if trace.frame == Frame.VR:
        out = trace
    else:
        a1 = offset_angle(trace.vectors[0])
        out = trace.replace(vectors=camera_to_vr(trace.vectors, a1), frame=Frame.VR)
    _emit_trace(out, args.out)


def cmd_match(args):
    trace = load_trace(args.trace)
    lib = load_library(args.library)
    cal = Calibrator.load(args.cal) if args.cal else Calibrator()
    fp0 = lib.entries[0]
    cfg = MatchConfig(args.tau, args.smoothing, fp0.width, fp0.height)
    ranking = identify_topk(trace, lib, cfg, cal, args.k)
    report = {
        "trace_id": trace.session_id,
        "k": args.k,
        "top": [r.video_id for r in ranking.top],
        "ranking": [asdict(r) for r in ranking.results],
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.csv:
        write_match_csv(args.csv, [(trace.session_id, args.true_video or "", ranking)])


def write_match_csv(path, entries) -> None:
    """Summary rows ``trace_id,true_video,top1,top2,top3,rank_of_truth``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trace_id", "true_video", "top1", "top2", "top3", "rank_of_truth"])
    for trace_id, truth, ranking in entries:
        ids = [r.video_id for r in ranking.results[:3]] + [""] * 3
        rank = ranking.rank_of(truth) if truth else ""
        w.writerow([trace_id, truth, *ids[:3], rank])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def cmd_train_calibrator(args):
    from .harness import Pipeline

    d = _read_json(args.config)
    cfg = ExperimentConfig.from_dict(d)
    cal = Pipeline(cfg).calibrate()
    cal.save(args.out)
    print(cal.to_json(), end="")


def cmd_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    out = args.out or cfg.output_dir
    if not out:
        raise ConfigError("no output directory: set output_dir in the config or pass --out")
    report = run_experiment(cfg)
    files = emit_report(report, out)
    print(json.dumps({"output_dir": str(out), "files": [p.name for p in files],
                      "cells": report.cells()}))


def cmd_bdr(args):
    rep = open_world_report(args.tpr, args.base, fpr=args.fpr, P=args.P, N=args.N,
                            in_lib=args.in_lib, total=args.total)
    print(json.dumps(rep.as_dict()))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="headprint", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-library", help="synthesize a fingerprint library")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_library)

    s = sub.add_parser("simulate-victim", help="simulate a ground-truth VR trace")
    s.add_argument("--library", required=True)
    s.add_argument("--video", required=True)
    s.add_argument("--params")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate_victim)

    s = sub.add_parser("inject-noise", help="add estimation noise and yaw drift")
    s.add_argument("--trace", required=True)
    s.add_argument("--noise", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_inject_noise)

    s = sub.add_parser("drift-fit", help="fit linear yaw drift from two anchors")
    s.add_argument("--anchors", required=True, help="t0,y0,t1,y1 (seconds, degrees)")
    s.set_defaults(func=cmd_drift_fit)

    s = sub.add_parser("drift-remove", help="remove a linear yaw drift from a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--theta0", type=float, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_drift_remove)

    s = sub.add_parser("convert-trace", help="convert a camera-frame trace to the VR frame")
    s.add_argument("--trace", required=True)
    s.add_argument("--to", choices=["vr"], default="vr")
    s.add_argument("--out")
    s.set_defaults(func=cmd_convert_trace)

    s = sub.add_parser("match", help="rank library videos for a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--library", required=True)
    s.add_argument("--cal")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--tau", type=float, default=0.8)
    s.add_argument("--smoothing", type=float, default=None)
    s.add_argument("--report", help="write the JSON ranking here instead of stdout")
    s.add_argument("--csv", help="also write a one-row CSV summary")
    s.add_argument("--true-video", help="true video id for rank_of_truth in --csv")
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("train-calibrator", help="fit a calibrator from an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_calibrator)

    s = sub.add_parser("experiment", help="run a full attack experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("bdr", help="Bayesian detection rate for open-world identification")
    s.add_argument("--tpr", type=float, required=True)
    s.add_argument("--fpr", type=float)
    s.add_argument("--P", type=int)
    s.add_argument("--N", type=int)
    s.add_argument("--base", type=float, required=True)
    s.add_argument("--in-lib", type=int)
    s.add_argument("--total", type=int)
    s.set_defaults(func=cmd_bdr)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (HeadprintError, OSError) as exc:
        kind = type(exc).__name__
        msg = str(exc)
        sys.stderr.write(json.dumps({"error": kind, "message": msg}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
