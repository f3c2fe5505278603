"""Command-line entry point: synth, stats, split, train, eval, bench, predict,
plan, capture-serve.

Every run logs its resolved configuration to stderr for reproducibility;
machine-readable results go to stdout (or --out) as JSON / JSON lines. Set
GESTUREDET_LOG=debug|info|warning for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("gesturedet")


def _setup_logging() -> None:
    level = os.environ.get("GESTUREDET_LOG", "info").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.INFO),
                        format="%(levelname).1s %(name)s: %(message)s")


def _log_config(args: argparse.Namespace) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in vars(args).items() if k != "func"}
    log.info("config %s", json.dumps(resolved, sort_keys=True))


def _parse_sizes(text: str):
    vals = [float(v) for v in text.split(",")]
    return tuple((v, v) for v in vals)


def _write_json(payload: dict, out: Path | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
        log.info("wrote %s", out)
    else:
        print(text)


# --- subcommands ---

def cmd_synth(args) -> int:
    from .synth import synth_dataset
    from .trajectory import DEFAULT_SESSION_SIZES
    sizes = _parse_sizes(args.sizes) if args.sizes else DEFAULT_SESSION_SIZES
    store = synth_dataset(args.out, n_subjects=args.subjects,
                          frames_per_sequence=args.frames_per_seq, seed=args.seed,
                          width=args.width, height=args.height, sizes=sizes,
                          duration_s=args.duration)
    _write_json({"dataset": str(store.root), "frames": len(store),
                 "subjects": args.subjects, "width": args.width,
                 "height": args.height}, None)
    return 0


def cmd_stats(args) -> int:
    from .dataset import DatasetStore, compute_stats
    store = DatasetStore.open(args.store)
    ids = json.loads(Path(args.ids).read_text()) if args.ids else None
    stats = compute_stats(store, ids)
    _write_json(stats.to_dict(), args.out)
    nonzero = {k: v for k, v in stats.class_counts.items() if v}
    log.info("frames %d, mean intensity %.1f", stats.total_frames, stats.mean_intensity)
    for name, count in nonzero.items():
        log.info("  %-18s %6d (%.1f%%)", name, count, 100 * stats.class_fractions[name])
    return 0


def cmd_split(args) -> int:
    from .dataset import DatasetStore, split_by_subject
    store = DatasetStore.open(args.store)
    train, ev = split_by_subject(store, args.eval_fraction, args.seed)
    payload = {"train": train, "eval": ev, "eval_fraction": args.eval_fraction,
               "seed": args.seed}
    _write_json(payload, args.out)
    log.info("split: %d train / %d eval frames", len(train), len(ev))
    return 0


def _resolve_split(args, store):
    from .dataset import split_by_subject
    if args.split:
        payload = json.loads(Path(args.split).read_text())
        return payload["train"], payload["eval"]
    return split_by_subject(store, args.eval_fraction, args.split_seed)


def cmd_train(args) -> int:
    from .dataset import DatasetStore
    from .model import config_by_name, save_weights
    from .train import TrainSettings, train_detector
    from .bench import evaluate
    store = DatasetStore.open(args.store)
    train_ids, eval_ids = _resolve_split(args, store)
    config = config_by_name(args.profile, width=store.width, height=store.height,
                            alpha=args.alpha)
    settings = TrainSettings(
        steps=args.steps, batch_size=args.batch_size, lr=args.lr,
        momentum=args.momentum, seed=args.seed, augment=args.augment,
        eval_every=args.eval_every, target_precision=args.target_precision)
    state, history = train_detector(config, store, train_ids, settings,
                                    eval_ids=eval_ids, log=log.info)
    save_weights(args.checkpoint, state.params)
    log.info("checkpoint written to %s after %d steps", args.checkpoint, state.step)
    report = evaluate(config, state.params, store, eval_ids)
    _write_json({"steps": state.step, "final_loss": history.losses[-1],
                 "eval_precision": report.precision,
                 "stopped_early": history.stopped_early,
                 "checkpoint": str(args.checkpoint)}, None)
    return 0


def cmd_eval(args) -> int:
    from .dataset import DatasetStore
    from .model import config_by_name, load_weights_for
    from .bench import evaluate
    store = DatasetStore.open(args.store)
    config = config_by_name(args.profile, width=store.width, height=store.height,
                            alpha=args.alpha)
    params = load_weights_for(config, args.checkpoint)
    if args.ids:
        ids = json.loads(Path(args.ids).read_text())
    else:
        _, ids = _resolve_split(args, store)
    report = evaluate(config, params, store, ids, iou_gate=args.iou_gate)
    _write_json(report.to_dict(), args.out)
    log.info("precision %.4f over %d frames", report.precision, report.frames)
    return 0


def cmd_bench(args) -> int:
    from .bench import benchmark, sustained_fps
    from .model import config_by_name, init_params, load_weights_for
    multipliers = [float(v) for v in args.multipliers.split(",")]
    checkpoints = {}
    if args.checkpoints:
        for part in args.checkpoints.split(","):
            alpha, path = part.split("=", 1)
            checkpoints[float(alpha)] = path
    precisions = {}
    if args.store and checkpoints:
        from .dataset import DatasetStore
        from .bench import evaluate
        store = DatasetStore.open(args.store)
        if args.split:
            ids = json.loads(Path(args.split).read_text())["eval"]
        else:
            ids = store.frame_ids
        for alpha, path in checkpoints.items():
            cfg = config_by_name(args.profile, store.width, store.height, alpha)
            precisions[alpha] = evaluate(cfg, load_weights_for(cfg, path),
                                         store, ids).precision

    reports = []
    for alpha in multipliers:
        config = config_by_name(args.profile, width=args.width, height=args.height,
                                alpha=alpha)
        if alpha in checkpoints:
            params = load_weights_for(config, checkpoints[alpha])
        else:
            params = init_params(config, seed=args.seed)
        rep = benchmark(config, params, n_runs=args.runs, warmup_runs=args.warmup,
                        seed=args.seed)
        if args.fps_duration:
            rng = np.random.default_rng(args.seed)
            frames = [rng.integers(0, 256, (args.height, args.width), dtype=np.uint8)
                      for _ in range(8)]
            rep.machine["sustained_fps"] = f"{sustained_fps(config, params, frames, args.fps_duration):.2f}"
        reports.append(rep)

    header = (f"{'Model':<16} {'Depth multiplier':>16} {'Precision':>10} "
              f"{'Inference latency (ms)':>24} {'Total latency (ms)':>20}")
    print(header)
    print("-" * len(header))
    for rep in reports:
        prec = precisions.get(rep.alpha)
        prec_s = f"{prec * 100:.2f}%" if prec is not None else "n/a"
        print(f"{rep.model_name:<16} {rep.alpha:>16.2f} {prec_s:>10} "
              f"{rep.inference['mean']:>24.4f} {rep.total_mean:>20.4f}")
    if args.out:
        with open(args.out, "w") as f:
            for rep in reports:
                payload = rep.to_dict()
                if rep.alpha in precisions:
                    payload["precision"] = precisions[rep.alpha]
                f.write(json.dumps(payload) + "\n")
        log.info("wrote %s", args.out)
    return 0


def cmd_predict(args) -> int:
    from .augment import resize_nearest
    from .dataset import read_pgm
    from .model import config_by_name, load_weights_for, predict
    image = read_pgm(args.image)
    config = config_by_name(args.profile, width=args.width, height=args.height,
                            alpha=args.alpha)
    if image.shape != (config.height, config.width):
        image = resize_nearest(image, config.width, config.height)
    params = load_weights_for(config, args.checkpoint)
    det = predict(config, params, image)
    from .labels import label_name
    _write_json({"label": label_name(det.label), "confidence": det.confidence,
                 "bbox": [det.bbox.cx, det.bbox.cy, det.bbox.w, det.bbox.h]},
                args.out)
    return 0


def cmd_plan(args) -> int:
    from .trajectory import DEFAULT_SESSION_SIZES, plan_session, save_plan
    sizes = _parse_sizes(args.sizes) if args.sizes else DEFAULT_SESSION_SIZES
    plan = plan_session(args.subject, args.scene, sizes=sizes,
                        duration_s=args.duration)
    save_plan(plan, args.out)
    log.info("plan with %d sequences written to %s", len(plan.sequences), args.out)
    return 0


def cmd_capture_serve(args) -> int:
    from .capture import CaptureService
    from .dataset import DatasetStore
    from .trajectory import load_plan
    plan = load_plan(args.plan)
    if Path(args.store).exists():
        store = DatasetStore.open(args.store)
    else:
        store = DatasetStore.create(args.store, args.width, args.height)
    service = CaptureService(plan, store, host=args.host, port=args.port)
    service.start()
    print(json.dumps({"url": service.url, "session_id": service.session.session_id,
                      "sequences": len(plan.sequences)}), flush=True)
    try:
        service.done.wait()
        log.info("session complete: %d frames accepted", service.session.frames_accepted)
    except KeyboardInterrupt:
        log.info("interrupted; shutting down")
    finally:
        service.stop()
    _write_json({"frames_accepted": service.session.frames_accepted,
                 "store": str(store.root)}, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gesturedet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic glyph dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--subjects", type=int, default=3)
    s.add_argument("--frames-per-seq", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)
    s.add_argument("--sizes", help="comma list of square box sizes, e.g. 0.42,0.32,0.24")
    s.add_argument("--duration", type=float, default=30.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("stats", help="dataset statistics")
    s.add_argument("--store", required=True)
    s.add_argument("--ids", help="JSON file with a frame-id list")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("split", help="subject-disjoint train/eval split")
    s.add_argument("--store", required=True)
    s.add_argument("--eval-fraction", type=float, default=1 / 3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train the detector")
    s.add_argument("--store", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", help="JSON split file from `split`")
    s.add_argument("--eval-fraction", type=float, default=1 / 3)
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--profile", choices=["micro", "full"], default="micro")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--eval-every", type=int, default=0)
    s.add_argument("--target-precision", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--store", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", help="JSON split file; the eval side is used")
    s.add_argument("--eval-fraction", type=float, default=1 / 3)
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--ids", help="JSON file with explicit frame ids")
    s.add_argument("--profile", choices=["micro", "full"], default="micro")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--iou-gate", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="single-core latency benchmark")
    s.add_argument("--profile", choices=["micro", "full"], default="full")
    s.add_argument("--multipliers", default="0.25,0.5,1.0")
    s.add_argument("--runs", type=int, default=30)
    s.add_argument("--warmup", type=int, default=5)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--checkpoints", help="alpha=path pairs, comma-separated")
    s.add_argument("--store", help="dataset for the precision column")
    s.add_argument("--split", help="split file for the precision column")
    s.add_argument("--fps-duration", type=float, default=0.0,
                   help="also measure sustained fps for this many seconds")
    s.add_argument("--out", help="JSON-lines report file")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("predict", help="run single-image inference")
    s.add_argument("--image", required=True, help="PGM file")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--profile", choices=["micro", "full"], default="micro")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("plan", help="write a capture session plan")
    s.add_argument("--subject", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sizes")
    s.add_argument("--duration", type=float, default=30.0)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("capture-serve", help="serve a label-as-you-go session")
    s.add_argument("--plan", required=True)
    s.add_argument("--store", required=True)
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)
    s.set_defaults(func=cmd_capture_serve)

    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    _log_config(args)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        if os.environ.get("GESTUREDET_LOG", "").lower() == "debug":
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
