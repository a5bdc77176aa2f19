"""Command-line entry point: ``carefulness {run,train,eval,gen,flow-check}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import build_configs, describe_defaults, load_config
from .datafiles import (read_dataset, read_truth_csv, write_dataset, write_events_csv,
                        write_truth_csv)
from .errors import CarefulnessError, ConfigError, DataError
from .flowcore import compute_flow
from .frames import Frame, open_stream, write_cfvid, write_pgm_dir
from .kinefeat import VelocitySeries, write_series_csv
from .pipeline import boundary_errors, match_events, resolve_model, run_stream
from .seqnet import load_model, save_model, train
from . import report as reporting
from . import synthgen

log = logging.getLogger("carefulness")


def _configs(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return build_configs("")


# -- run ------------------------------------------------------------------------------

def cmd_run(args) -> int:
    pipe, _ = _configs(args)
    changes = {k: v for k, v in (("model_path", args.model), ("realtime", args.realtime or None),
                                 ("parallel", args.parallel or None), ("timing", args.timing or None))
               if v is not None}
    pipe = dataclasses.replace(pipe, **changes)
    params = resolve_model(None, pipe)
    source = open_stream(args.stream)
    series = VelocitySeries()
    events = list(run_stream(source, pipe, params, series_out=series))
    out = args.output or pipe.events_path or "events.csv"
    write_events_csv(out, events, timing=pipe.timing or pipe.realtime)
    series_path = args.series or pipe.series_path
    if series_path:
        write_series_csv(series_path, series)
    if args.figure:
        from .plotting import velocity_figure

        velocity_figure(series, [e.segment for e in events], args.figure, pipe.segmenter.tau, events)
    log.info("%d events -> %s", len(events), out)
    return 0


# -- train ----------------------------------------------------------------------------

def write_train_log(path, tlog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "lr", "train_loss", "val_loss", "best"))
        for e in tlog.epochs:
            w.writerow((e.epoch, f"{e.lr:.9g}", f"{e.train_loss:.9g}", f"{e.val_loss:.9g}",
                        int(e.epoch == tlog.best_epoch)))


def cmd_train(args) -> int:
    _, tcfg = _configs(args)
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    data = read_dataset(args.dataset)
    if not data.segments:
        raise DataError(f"{args.dataset}: empty dataset")

    def progress(rec):
        log.info("epoch %3d  lr %.2e  train %.5f  val %.5f", rec.epoch, rec.lr, rec.train_loss, rec.val_loss)

    t0 = time.perf_counter()
    params, tlog = train(data.segments, data.labels, tcfg, progress if args.verbose else None)
    elapsed = time.perf_counter() - t0
    save_model(args.output, params)
    out_dir = Path(args.report_dir or Path(args.output).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_train_log(out_dir / "train_log.csv", tlog)

    test = tlog.split_indices["test"]
    if test.size:
        segs = [data.segments[i] for i in test]
        labs = [data.labels[i] for i in test]
        subj = [data.subjects[i] for i in test]
        res = reporting.evaluate(params, segs, labs, subj)
        res.extra.update({"best_epoch": tlog.best_epoch, "stopped_epoch": tlog.stopped_epoch,
                          "stop_reason": tlog.stop_reason})
        reporting.write_outputs(out_dir / "test_report", res, names=[data.files[i] for i in test],
                                figures=not args.no_figures, title="Test split")
        print(f"test accuracy {res.report.accuracy:.4f} on {test.size} segments")
    print(f"best epoch {tlog.best_epoch}, stopped at {tlog.stopped_epoch} ({tlog.stop_reason}), "
          f"{elapsed:.1f} s")
    return 0


# -- eval -----------------------------------------------------------------------------

def cmd_eval(args) -> int:
    pipe, _ = _configs(args)
    params = load_model(args.model)
    rate = pipe.segmenter.rate
    if args.dataset:
        data = read_dataset(args.dataset)
        res = reporting.evaluate(params, data.segments, data.labels, data.subjects,
                                 pairing=args.pairing, rate=rate)
        names = data.files
    else:
        if not args.truth:
            raise ConfigError("--stream needs --truth")
        truths = read_truth_csv(args.truth)
        pipe = dataclasses.replace(pipe, realtime=args.realtime, parallel=args.parallel)
        events = list(run_stream(open_stream(args.stream), pipe, params))
        matches, unmatched = match_events(events, truths, rate)
        found = [(k, j) for k, j in enumerate(matches) if j is not None]
        if not found:
            raise DataError("no detected motion matches the ground truth")
        segs = [events[j].segment for _, j in found]
        res = reporting.evaluate(params, segs, [truths[k].label for k, _ in found],
                                 [truths[k].subject for k, _ in found], pairing=args.pairing,
                                 latencies=[events[j].recognition_time for _, j in found],
                                 rate=rate, predictions=[events[j].prediction for _, j in found])
        names = [f"motion_{k}" for k, _ in found]
        errs = np.array([boundary_errors(events[j].segment, truths[k], rate) for k, j in found])
        others = [events[j] for j in unmatched]
        res.extra.update({
            "motions": len(truths),
            "missed": len(truths) - len(found),
            "max_boundary_error_samples": int(np.abs(errs).max()),
            "other_events": len(others),
            "other_events_nc_fraction": (f"{np.mean([e.prediction.label == 'NC' for e in others]):.4f}"
                                         if others else "n/a"),
        })
        Path(args.output).mkdir(parents=True, exist_ok=True)
        write_events_csv(Path(args.output) / "events.csv", events, timing=True)
    reporting.write_outputs(args.output, res, args.pairing, names, figures=not args.no_figures)
    print(f"accuracy {res.report.accuracy:.4f}  F1 {res.report.f1 if res.report.f1 is not None else 'n/a'}")
    return 0


# -- gen ------------------------------------------------------------------------------

def _distributions(args):
    return synthgen.identical_distributions() if args.identical else None


def cmd_gen(args) -> int:
    if args.kind == "profiles":
        corpus = synthgen.generate_corpus(args.n_per_class, args.seed, _distributions(args),
                                          noise_std=args.noise, family=args.family)
        write_dataset(args.output, corpus.segments, corpus.labels, [str(s) for s in corpus.subjects])
        print(f"{len(corpus.segments)} segments -> {args.output}")
        return 0
    specs = synthgen.sample_profile_specs(args.n_per_class, args.seed, _distributions(args),
                                          noise_std=0.0, family=args.family)
    scenes = synthgen.session_scenes(specs, args.width, args.height, args.radius, texture_seed=args.seed,
                                     fps=args.fps, sensor_noise=args.sensor_noise)
    stream, truths = synthgen.render_session(scenes, args.seed)
    out = Path(args.output)
    if out.suffix.lower() == ".cfvid":
        write_cfvid(out, stream)
    else:
        write_pgm_dir(out, stream)
    truth_path = args.truth or str(out.with_suffix("")) + "_truth.csv"
    write_truth_csv(truth_path, truths, [str(k // 2) for k in range(len(truths))])
    print(f"{len(truths)} motions, {sum(1 for _ in stream)} frames -> {out}, {truth_path}")
    return 0


# -- flow-check -------------------------------------------------------------------------

def cmd_flow_check(args) -> int:
    pipe, _ = _configs(args)
    cfg = pipe.flow
    rng = np.random.default_rng(args.seed)
    tex = np.clip(np.round(synthgen._texture((args.height + 16, args.width + 16), args.seed)), 0, 255).astype(np.uint8)
    margin = 15
    print("dx,dy,rms_px,max_abs_px,seconds")
    worst = 0.0
    for dx in range(-args.max_shift, args.max_shift + 1):
        for dy in range(-args.max_shift, args.max_shift + 1):
            if args.sample and rng.random() > args.sample:
                continue
            a = tex[8:8 + args.height, 8:8 + args.width]
            b = tex[8 - dy:8 - dy + args.height, 8 - dx:8 - dx + args.width]
            t0 = time.perf_counter()
            f = compute_flow(Frame.from_array(a), Frame.from_array(b), cfg)
            dt = time.perf_counter() - t0
            eu = f.u[margin:-margin, margin:-margin] - dx
            ev = f.v[margin:-margin, margin:-margin] - dy
            rms = float(np.sqrt(np.mean(eu ** 2 + ev ** 2)))
            worst = max(worst, rms)
            print(f"{dx},{dy},{rms:.5f},{float(np.max(np.hypot(eu, ev))):.5f},{dt:.3f}")
    print(f"# worst interior rms {worst:.5f} px")
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="carefulness",
        description="Classify transport motions in a frame stream as careful (C) or not careful (NC).",
        epilog="configuration keys (--config file, 'section.key = value') and defaults:\n" + describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="stream -> events CSV")
    r.add_argument("stream", help="CFVID file or PGM directory")
    r.add_argument("-o", "--output", help="events CSV (default pipeline.events_path or events.csv)")
    r.add_argument("--model", help="model file (default pipeline.model_path)")
    r.add_argument("--config")
    r.add_argument("--realtime", action="store_true", help="consume frames at source fps")
    r.add_argument("--parallel", action="store_true", help="run flow in its own thread")
    r.add_argument("--timing", action="store_true", help="fill recognition_ms in batch mode")
    r.add_argument("--series", help="also write the velocity series CSV")
    r.add_argument("--figure", help="velocity trace PNG")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="dataset directory -> model file")
    t.add_argument("dataset")
    t.add_argument("-o", "--output", required=True, help="model file")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--report-dir", help="train_log.csv and test_report/ (default: next to the model)")
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="model + dataset or stream/truth -> reports")
    e.add_argument("--model", required=True)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset")
    src.add_argument("--stream")
    e.add_argument("--truth", help="ground-truth CSV for --stream")
    e.add_argument("-o", "--output", required=True, help="output directory")
    e.add_argument("--pairing", choices=reporting.PAIRINGS, default="subject",
                   help="Wilcoxon pairing: per-subject medians or k-th trial (default subject)")
    e.add_argument("--config")
    e.add_argument("--realtime", action="store_true")
    e.add_argument("--parallel", action="store_true")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen", help="synthetic profiles or rendered scenes")
    g.add_argument("kind", choices=("profiles", "scenes"))
    g.add_argument("output", help="dataset dir, or .cfvid / PGM dir for scenes")
    g.add_argument("-n", "--n-per-class", type=int, default=400)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--identical", action="store_true", help="same distribution for both classes")
    g.add_argument("--noise", type=float, default=1.0, help="profile noise std [px/s]")
    g.add_argument("--family", choices=synthgen.FAMILIES, default="raised_cosine")
    g.add_argument("--width", type=int, default=320)
    g.add_argument("--height", type=int, default=240)
    g.add_argument("--fps", type=float, default=15.0)
    g.add_argument("--radius", type=float, default=20.0, help="object radius for scenes [px]")
    g.add_argument("--sensor-noise", type=float, default=1.0, help="pixel noise std for scenes")
    g.add_argument("--truth", help="truth CSV path for scenes")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("flow-check", help="translation oracle for the flow estimator")
    f.add_argument("--width", type=int, default=320)
    f.add_argument("--height", type=int, default=240)
    f.add_argument("--max-shift", type=int, default=3)
    f.add_argument("--sample", type=float, default=0.0, help="fraction of shifts to test (0: all)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--config")
    f.set_defaults(func=cmd_flow_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CarefulnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
