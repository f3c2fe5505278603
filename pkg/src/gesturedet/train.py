"""Training loop: batch assembly from a dataset store, augmentation, matching,
SGD steps, and periodic evaluation with optional early stop.

Everything is seed-deterministic: epoch shuffling uses a numpy generator,
augmentation uses the package's documented 64-bit stream, and evaluation
points are fixed step counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import model as M
from .augment import AugmentParams, SplitMix64, augment_sample
from .bench import evaluate
from .dataset import DatasetStore, compute_stats
from .geometry import BBox


@dataclass
class TrainSettings:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    augment: bool = True
    neg_ratio: int = 3
    iou_threshold: float = 0.5
    warmup_steps: int = 100          # linear ramp to lr, then constant
    eval_every: int = 0              # 0 = no mid-training evaluation
    target_precision: Optional[float] = None   # early stop once reached


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    eval_points: list[tuple[int, float]] = field(default_factory=list)  # (step, precision)
    stopped_early: bool = False


def _load_frames(store: DatasetStore, ids: Sequence[int]):
    images = np.empty((len(ids), store.height, store.width), dtype=np.uint8)
    boxes: list[BBox] = []
    labels = []
    for i, fid in enumerate(ids):
        rec = store.read(fid)
        images[i] = rec.image
        boxes.append(rec.bbox)
        labels.append(rec.label)
    return images, boxes, labels


def train_detector(config: M.ModelConfig, store: DatasetStore,
                   train_ids: Sequence[int], settings: TrainSettings,
                   eval_ids: Optional[Sequence[int]] = None,
                   log: Optional[Callable[[str], None]] = None
                   ) -> tuple[M.TrainState, TrainHistory]:
    """Train a detector on the given frames; returns (state, history).

    With `eval_every` and `target_precision` set, evaluation runs on
    `eval_ids` at fixed step intervals and training stops as soon as the
    target is met.
    """
    train_ids = list(train_ids)
    if not train_ids:
        raise ValueError("no training frames")
    state = M.make_train_state(config, seed=settings.seed)
    images, boxes, labels = _load_frames(store, train_ids)

    params_aug = None
    aug_rng = None
    if settings.augment:
        stats = compute_stats(store, train_ids)
        params_aug = AugmentParams(fill_value=int(round(stats.mean_intensity)))
        aug_rng = SplitMix64(settings.seed)

    order_rng = np.random.default_rng(settings.seed)
    history = TrainHistory()
    perm: list[int] = []
    n = len(train_ids)

    for step in range(settings.steps):
        take = []
        while len(take) < settings.batch_size:
            if not perm:
                perm = list(order_rng.permutation(n))
            take.append(perm.pop())
        batch_images = np.empty((settings.batch_size, store.height, store.width),
                                dtype=np.uint8)
        targets = []
        for bi, idx in enumerate(take):
            img, box = images[idx], boxes[idx]
            if settings.augment:
                img, box = augment_sample(img, box, aug_rng, params_aug)
            batch_images[bi] = img
            targets.append(M.build_targets(state.anchors, box, labels[idx],
                                           settings.iou_threshold, config.variances))
        lr = settings.lr * min(1.0, (step + 1) / max(1, settings.warmup_steps))
        breakdown = M.train_step(state, batch_images, targets, lr=lr,
                                 momentum=settings.momentum,
                                 neg_ratio=settings.neg_ratio)
        history.losses.append(breakdown.total)
        if log and (step + 1) % 50 == 0:
            recent = np.mean(history.losses[-50:])
            log(f"step {step + 1}/{settings.steps} loss {recent:.4f} lr {lr:.4g}")
        if (settings.eval_every and eval_ids is not None
                and (step + 1) % settings.eval_every == 0):
            report = evaluate(config, state.params, store, eval_ids)
            history.eval_points.append((step + 1, report.precision))
            if log:
                log(f"step {step + 1}: eval precision {report.precision:.4f}")
            if (settings.target_precision is not None
                    and report.precision >= settings.target_precision):
                history.stopped_early = True
                break
    return state, history
