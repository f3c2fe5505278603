"""Precision evaluation and single-core latency benchmarking.

The timed region runs on one worker thread with the BLAS pool clamped to a
single thread, so numbers reflect one core doing all the work. Stages are
timed separately — preprocessing (resize + normalize), inference (forward
pass), postprocessing (softmax + top pick + box decode) — and reports carry
machine metadata. Absolute milliseconds are machine-specific; only orderings
and distributions are meaningful targets.
"""

from __future__ import annotations

import platform
import statistics
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import model as M
from .augment import resize_nearest
from .dataset import DatasetStore
from .geometry import anchors_array, generate_anchors, iou
from .labels import CLASS_NAMES, NUM_CLASSES, label_index


@dataclass
class EvalReport:
    frames: int
    precision: float
    mean_iou_correct: float        # mean IoU over label-correct frames
    iou_at_half_fraction: float    # fraction of label-correct frames with IoU >= 0.5
    confusion: np.ndarray          # (9, 9) true x predicted
    iou_gate: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "precision": self.precision,
            "mean_iou_correct": self.mean_iou_correct,
            "iou_at_half_fraction": self.iou_at_half_fraction,
            "confusion": self.confusion.tolist(),
            "classes": list(CLASS_NAMES),
            "iou_gate": self.iou_gate,
        }


def evaluate(config: M.ModelConfig, params: dict, store: DatasetStore,
             ids: Sequence[int], iou_gate: Optional[float] = None,
             batch_size: int = 64) -> EvalReport:
    """Top-1 label precision (optionally IoU-gated) over evaluation frames.

    A frame counts as correct when the top-confidence detection's label
    equals the record's label, and, when `iou_gate` is given, the predicted
    box overlaps the ground truth at or above the gate. No augmentation is
    applied at evaluation time.
    """
    ids = list(ids)
    if not ids:
        raise ValueError("empty evaluation set")
    anchors = anchors_array(generate_anchors(config.anchor_config()))
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    correct = 0
    ious_correct: list[float] = []
    for lo in range(0, len(ids), batch_size):
        chunk = ids[lo : lo + batch_size]
        recs = [store.read(fid) for fid in chunk]
        images = np.stack([r.image for r in recs])
        preds = M.forward(config, params, M.preprocess(
            images, dtype=next(iter(params.values())).dtype))
        for i, rec in enumerate(recs):
            det = M.detection_from_scores(preds.class_logits[i], preds.box_offsets[i],
                                          anchors, config.variances)
            confusion[label_index(rec.label), label_index(det.label)] += 1
            label_ok = det.label == rec.label
            if label_ok:
                overlap = iou(det.bbox, rec.bbox)
                ious_correct.append(overlap)
                if iou_gate is None or overlap >= iou_gate:
                    correct += 1
    return EvalReport(
        frames=len(ids),
        precision=correct / len(ids),
        mean_iou_correct=float(np.mean(ious_correct)) if ious_correct else 0.0,
        iou_at_half_fraction=(float(np.mean([v >= 0.5 for v in ious_correct]))
                              if ious_correct else 0.0),
        confusion=confusion,
        iou_gate=iou_gate,
    )


def _stage_stats(samples_ms: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(samples_ms)
    return {
        "mean": float(arr.mean()),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "p95": float(np.percentile(arr, 95)),
    }


@dataclass
class LatencyReport:
    model_name: str
    alpha: float
    runs: int
    preprocessing: dict[str, float]
    inference: dict[str, float]
    postprocessing: dict[str, float]
    total_mean: float
    machine: dict[str, str] = field(default_factory=dict)
    samples: dict[str, list[float]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "depth_multiplier": self.alpha,
            "runs": self.runs,
            "preprocessing_ms": self.preprocessing,
            "inference_ms": self.inference,
            "postprocessing_ms": self.postprocessing,
            "total_latency_ms": self.total_mean,
            "machine": self.machine,
        }


def _machine_metadata() -> dict[str, str]:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "blas_threads": "1",
    }


def benchmark(config: M.ModelConfig, params: dict, n_runs: int = 30,
              warmup_runs: int = 5, seed: int = 0,
              source_hw: Optional[tuple[int, int]] = None) -> LatencyReport:
    """Per-stage latency over n_runs single-frame inferences on one core.

    Source frames come from a seeded generator at `source_hw` (defaults to
    the model input size); preprocessing covers nearest-neighbor resize plus
    normalization, postprocessing the top-confidence decode. Warmup runs are
    excluded. The timed loop runs on a dedicated worker thread with BLAS
    pinned to one thread.
    """
    if n_runs < 30:
        raise ValueError("need at least 30 runs")
    if warmup_runs < 5:
        raise ValueError("need at least 5 warmup runs")
    src_h, src_w = source_hw or (config.height, config.width)
    rng = np.random.default_rng(seed)
    frames = [rng.integers(0, 256, size=(src_h, src_w), dtype=np.uint8)
              for _ in range(8)]
    anchors = anchors_array(generate_anchors(config.anchor_config()))
    dtype = next(iter(params.values())).dtype
    stages: dict[str, list[float]] = {"pre": [], "inf": [], "post": []}

    def run_once(frame, record: bool):
        t0 = time.perf_counter()
        img = frame
        if img.shape != (config.height, config.width):
            img = resize_nearest(img, config.width, config.height)
        x = M.preprocess(img, dtype=dtype)
        t1 = time.perf_counter()
        preds = M.forward(config, params, x)
        t2 = time.perf_counter()
        M.detection_from_scores(preds.class_logits[0], preds.box_offsets[0],
                                anchors, config.variances)
        t3 = time.perf_counter()
        if record:
            stages["pre"].append((t1 - t0) * 1e3)
            stages["inf"].append((t2 - t1) * 1e3)
            stages["post"].append((t3 - t2) * 1e3)

    def worker():
        with threadpool_limits(limits=1):
            for i in range(warmup_runs):
                run_once(frames[i % len(frames)], record=False)
            for i in range(n_runs):
                run_once(frames[i % len(frames)], record=True)

    t = threading.Thread(target=worker, name="bench-worker")
    t.start()
    t.join()

    totals = [p + i + q for p, i, q in zip(stages["pre"], stages["inf"], stages["post"])]
    return LatencyReport(
        model_name=f"{config.name}-{int(config.alpha * 100)}%",
        alpha=config.alpha,
        runs=n_runs,
        preprocessing=_stage_stats(stages["pre"]),
        inference=_stage_stats(stages["inf"]),
        postprocessing=_stage_stats(stages["post"]),
        total_mean=float(statistics.mean(totals)),
        machine=_machine_metadata(),
        samples={"pre": stages["pre"], "inf": stages["inf"], "post": stages["post"],
                 "total": totals},
    )


def bootstrap_mean_less(a: Sequence[float], b: Sequence[float],
                        n_resamples: int = 10000, seed: int = 0) -> float:
    """Bootstrap confidence that mean(a) < mean(b)."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a)
    b = np.asarray(b)
    ia = rng.integers(0, len(a), size=(n_resamples, len(a)))
    ib = rng.integers(0, len(b), size=(n_resamples, len(b)))
    return float((a[ia].mean(axis=1) < b[ib].mean(axis=1)).mean())


def sustained_fps(config: M.ModelConfig, params: dict,
                  frames: Sequence[np.ndarray], duration_s: float = 5.0) -> float:
    """End-to-end pipeline throughput over a continuous stream, one worker."""
    if duration_s < 5.0:
        raise ValueError("need at least 5 seconds for a sustained measurement")
    if not len(frames):
        raise ValueError("empty frame source")
    anchors = anchors_array(generate_anchors(config.anchor_config()))
    dtype = next(iter(params.values())).dtype
    result: list[float] = []

    def worker():
        with threadpool_limits(limits=1):
            count = 0
            start = time.perf_counter()
            while True:
                img = frames[count % len(frames)]
                if img.shape != (config.height, config.width):
                    img = resize_nearest(img, config.width, config.height)
                preds = M.forward(config, params, M.preprocess(img, dtype=dtype))
                M.detection_from_scores(preds.class_logits[0], preds.box_offsets[0],
                                        anchors, config.variances)
                count += 1
                elapsed = time.perf_counter() - start
                if elapsed >= duration_s:
                    result.append(count / elapsed)
                    return

    t = threading.Thread(target=worker, name="fps-worker")
    t.start()
    t.join()
    return result[0]
