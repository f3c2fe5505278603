"""Depthwise-separable detector with an anchor-grid multibox head.

The backbone is a stem convolution followed by depthwise-separable blocks
(3x3 depthwise + 1x1 pointwise, ReLU after each). Two tap points feed 3x3
head convolutions that emit, per anchor, 9 class logits and 4 box offsets.
Training minimizes mean cross-entropy over positive anchors plus mined hard
negatives, added to mean smooth-L1 over the positives' offset residuals,
with plain SGD + momentum. Gradients are exact reverse-mode, computed by the
kernels in :mod:`gesturedet.nn`.

A global depth multiplier scales every channel width to
max(8, round(alpha * C / 8) * 8), trading accuracy for compute.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import (AnchorConfig, Anchor, BBox, BoxOffsets, FeatureMapSpec,
                       DEFAULT_ASPECTS, DEFAULT_SCALES, DEFAULT_VARIANCES,
                       anchors_array, decode, encode_array, generate_anchors,
                       match_anchors)
from .labels import ClassLabel, NUM_CLASSES, label_from_index, label_index
from . import nn

CHECKPOINT_MAGIC = b"GDW1"
HEAD_CHANNELS_PER_PRIOR = NUM_CLASSES + 4  # 9 class logits + 4 offsets


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockSpec:
    channels: int
    stride: int


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; channel widths here are pre-multiplier."""

    name: str
    width: int
    height: int
    alpha: float
    stem_channels: int
    blocks: tuple[BlockSpec, ...]
    taps: tuple[int, ...]                   # 1-based block indices feeding heads
    prior_scales: tuple[float, ...] = DEFAULT_SCALES
    prior_aspects: tuple[float, ...] = DEFAULT_ASPECTS
    variances: tuple[float, float] = DEFAULT_VARIANCES
    channels: int = 1

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"depth multiplier {self.alpha} outside (0, 1]")
        for t in self.taps:
            if not 1 <= t <= len(self.blocks):
                raise ValueError(f"tap {t} outside block range")

    def scaled(self, c: int) -> int:
        return max(8, int(round(self.alpha * c / 8)) * 8)

    def feature_dims(self) -> list[tuple[int, int]]:
        """(h, w) after the stem and after each block, index 0 = stem."""
        h, w = nn.out_size(self.height, 2), nn.out_size(self.width, 2)
        dims = [(h, w)]
        for blk in self.blocks:
            h, w = nn.out_size(h, blk.stride), nn.out_size(w, blk.stride)
            dims.append((h, w))
        return dims

    def anchor_config(self) -> AnchorConfig:
        dims = self.feature_dims()
        maps = tuple(
            FeatureMapSpec(rows=dims[t][0], cols=dims[t][1],
                           scales=self.prior_scales, aspects=self.prior_aspects)
            for t in self.taps)
        return AnchorConfig(maps=maps, variances=self.variances)

    @property
    def priors_per_cell(self) -> int:
        return len(self.prior_scales) * len(self.prior_aspects)

    @property
    def num_anchors(self) -> int:
        return self.anchor_config().num_anchors

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter manifest; insertion order is the checkpoint order."""
        shapes: dict[str, tuple[int, ...]] = {}
        c_in = self.channels
        c = self.scaled(self.stem_channels)
        shapes["stem/w"] = (3, 3, c_in, c)
        shapes["stem/b"] = (c,)
        prev = c
        for k, blk in enumerate(self.blocks, start=1):
            cout = self.scaled(blk.channels)
            shapes[f"block{k}/dw/w"] = (3, 3, prev)
            shapes[f"block{k}/dw/b"] = (prev,)
            shapes[f"block{k}/pw/w"] = (1, 1, prev, cout)
            shapes[f"block{k}/pw/b"] = (cout,)
            prev = cout
        head_out = self.priors_per_cell * HEAD_CHANNELS_PER_PRIOR
        for i, t in enumerate(self.taps):
            c_tap = self.scaled(self.blocks[t - 1].channels)
            shapes[f"head{i}/w"] = (3, 3, c_tap, head_out)
            shapes[f"head{i}/b"] = (head_out,)
        return shapes

    def count_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def count_macs(self) -> int:
        """Multiply-accumulates for one forward pass of a single image."""
        dims = self.feature_dims()
        total = dims[0][0] * dims[0][1] * 9 * self.channels * self.scaled(self.stem_channels)
        prev = self.scaled(self.stem_channels)
        for k, blk in enumerate(self.blocks, start=1):
            oh, ow = dims[k]
            cout = self.scaled(blk.channels)
            total += oh * ow * 9 * prev            # depthwise
            total += oh * ow * prev * cout          # pointwise
            prev = cout
        head_out = self.priors_per_cell * HEAD_CHANNELS_PER_PRIOR
        for t in self.taps:
            oh, ow = dims[t]
            c_tap = self.scaled(self.blocks[t - 1].channels)
            total += oh * ow * 9 * c_tap * head_out
        return total


def micro_config(width: int = 320, height: int = 240, alpha: float = 1.0) -> ModelConfig:
    """Desk-scale profile: stem 16 + 6 blocks, heads off blocks 4 and 6."""
    return ModelConfig(
        name="micro", width=width, height=height, alpha=alpha,
        stem_channels=16,
        blocks=(BlockSpec(32, 2), BlockSpec(64, 1), BlockSpec(64, 2),
                BlockSpec(128, 1), BlockSpec(128, 2), BlockSpec(256, 1)),
        taps=(4, 6))


def full_config(width: int = 320, height: int = 240, alpha: float = 1.0) -> ModelConfig:
    """13-block backbone plus one extra stride-2 block so the heads sit at
    1/32 and 1/64 of the input (10x8 and 5x4 grids at 320x240)."""
    return ModelConfig(
        name="full", width=width, height=height, alpha=alpha,
        stem_channels=32,
        blocks=(BlockSpec(64, 1), BlockSpec(128, 2), BlockSpec(128, 1),
                BlockSpec(256, 2), BlockSpec(256, 1), BlockSpec(512, 2),
                BlockSpec(512, 1), BlockSpec(512, 1), BlockSpec(512, 1),
                BlockSpec(512, 1), BlockSpec(512, 1), BlockSpec(1024, 2),
                BlockSpec(1024, 1), BlockSpec(512, 2)),
        taps=(13, 14))


def config_by_name(profile: str, width: int = 320, height: int = 240,
                   alpha: float = 1.0) -> ModelConfig:
    if profile == "micro":
        return micro_config(width, height, alpha)
    if profile == "full":
        return full_config(width, height, alpha)
    raise ValueError(f"unknown profile {profile!r}")


def init_params(config: ModelConfig, seed: int, dtype=np.float32,
                background_bias: float = 2.0) -> dict[str, np.ndarray]:
    """Centered-uniform init with scale sqrt(6 / (fan_in + fan_out)); zero
    biases, except each head's background logit starts at `background_bias`
    so easy negatives saturate early and classification gradient concentrates
    on the positives."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in config.param_shapes().items():
        if name.endswith("/b"):
            params[name] = np.zeros(shape, dtype=dtype)
            if name.startswith("head"):
                for p in range(config.priors_per_cell):
                    params[name][p * HEAD_CHANNELS_PER_PRIOR] = background_bias
            continue
        if len(shape) == 3:        # depthwise: per-channel 3x3 filter
            fan_in = fan_out = shape[0] * shape[1]
        else:
            fan_in = shape[0] * shape[1] * shape[2]
            fan_out = shape[0] * shape[1] * shape[3]
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-lim, lim, size=shape).astype(dtype)
    return params


def preprocess(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 (N,H,W) or (H,W) -> float (N,H,W,1) in [-1, 1]."""
    if images.ndim == 2:
        images = images[None]
    x = images.astype(dtype) / 127.5 - 1.0
    return x[..., None]


@dataclass
class Predictions:
    class_logits: np.ndarray   # (N, A, 9)
    box_offsets: np.ndarray    # (N, A, 4)


def forward(config: ModelConfig, params: dict[str, np.ndarray], x: np.ndarray,
            want_cache: bool = False):
    """Run the network on a preprocessed batch.

    Returns Predictions, or (Predictions, cache) when want_cache is set; the
    cache feeds :func:`backward`.
    """
    if x.shape[1:] != (config.height, config.width, config.channels):
        raise ValueError(f"input {x.shape} does not match config "
                         f"{(config.height, config.width, config.channels)}")
    caches: dict = {}
    pre, c = nn.conv2d_with_cache(x, params["stem/w"], params["stem/b"], stride=2)
    caches["stem"] = (c, pre)
    a = nn.relu(pre)
    tap_out: dict[int, np.ndarray] = {}
    for k, blk in enumerate(config.blocks, start=1):
        dw_pre, cdw = nn.depthwise_conv2d_with_cache(
            a, params[f"block{k}/dw/w"], params[f"block{k}/dw/b"], stride=blk.stride)
        dw_act = nn.relu(dw_pre)
        pw_pre, cpw = nn.conv2d_with_cache(
            dw_act, params[f"block{k}/pw/w"], params[f"block{k}/pw/b"], stride=1)
        a = nn.relu(pw_pre)
        caches[f"block{k}"] = (cdw, dw_pre, cpw, pw_pre)
        if k in config.taps:
            tap_out[k] = a
    n = x.shape[0]
    logits_parts = []
    offsets_parts = []
    for i, t in enumerate(config.taps):
        head, ch = nn.conv2d_with_cache(
            tap_out[t], params[f"head{i}/w"], params[f"head{i}/b"], stride=1)
        caches[f"head{i}"] = ch
        oh, ow = head.shape[1], head.shape[2]
        per_anchor = head.reshape(n, oh * ow * config.priors_per_cell,
                                  HEAD_CHANNELS_PER_PRIOR)
        logits_parts.append(per_anchor[:, :, :NUM_CLASSES])
        offsets_parts.append(per_anchor[:, :, NUM_CLASSES:])
    preds = Predictions(class_logits=np.concatenate(logits_parts, axis=1),
                        box_offsets=np.concatenate(offsets_parts, axis=1))
    if want_cache:
        return preds, caches
    return preds


def backward(config: ModelConfig, params: dict[str, np.ndarray], caches: dict,
             dlogits: np.ndarray, doffsets: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of the loss w.r.t. every parameter, given the loss
    gradients at the prediction outputs."""
    n = dlogits.shape[0]
    grads: dict[str, np.ndarray] = {}
    dims = config.feature_dims()
    dtap: dict[int, np.ndarray] = {}
    a0 = 0
    for i, t in enumerate(config.taps):
        oh, ow = dims[t]
        count = oh * ow * config.priors_per_cell
        dhead = np.concatenate(
            [dlogits[:, a0 : a0 + count], doffsets[:, a0 : a0 + count]], axis=2)
        a0 += count
        dhead = dhead.reshape(n, oh, ow,
                              config.priors_per_cell * HEAD_CHANNELS_PER_PRIOR)
        dx, dw, db = nn.conv2d_backward(dhead, caches[f"head{i}"])
        grads[f"head{i}/w"] = dw
        grads[f"head{i}/b"] = db
        dtap[t] = dx
    d_out: Optional[np.ndarray] = None
    for k in range(len(config.blocks), 0, -1):
        g = d_out
        if k in dtap:
            g = dtap[k] if g is None else g + dtap[k]
        cdw, dw_pre, cpw, pw_pre = caches[f"block{k}"]
        if g is None:
            g = np.zeros_like(pw_pre)
        g = nn.relu_backward(g, pw_pre)
        g, dwp, dbp = nn.conv2d_backward(g, cpw)
        grads[f"block{k}/pw/w"] = dwp
        grads[f"block{k}/pw/b"] = dbp
        g = nn.relu_backward(g, dw_pre)
        g, dwd, dbd = nn.depthwise_conv2d_backward(g, cdw)
        grads[f"block{k}/dw/w"] = dwd
        grads[f"block{k}/dw/b"] = dbd
        d_out = g
    c, pre = caches["stem"]
    g = nn.relu_backward(d_out, pre)
    _, dw, db = nn.conv2d_backward(g, c)
    grads["stem/w"] = dw
    grads["stem/b"] = db
    return grads


# --- targets and loss ---

@dataclass
class FrameTargets:
    """Per-anchor training targets for a single labeled frame."""

    cls_target: np.ndarray       # (A,) int64, 0 = background
    pos_mask: np.ndarray         # (A,) bool
    offset_targets: np.ndarray   # (A, 4) float64


def build_targets(anchors: np.ndarray, gt_box: BBox, gt_label: tuple,
                  iou_threshold: float = 0.5,
                  variances: tuple[float, float] = DEFAULT_VARIANCES) -> FrameTargets:
    pos = match_anchors(gt_box, anchors, iou_threshold)
    cls = np.zeros(anchors.shape[0], dtype=np.int64)
    cls[pos] = label_index(gt_label)
    return FrameTargets(cls_target=cls, pos_mask=pos,
                        offset_targets=encode_array(gt_box, anchors, variances))


def stack_targets(targets: Sequence[FrameTargets]):
    cls = np.stack([t.cls_target for t in targets])
    pos = np.stack([t.pos_mask for t in targets])
    off = np.stack([t.offset_targets for t in targets])
    return cls, pos, off


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax accumulated in float64."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def select_hard_negatives(ce_background: np.ndarray, pos_mask: np.ndarray,
                          neg_ratio: int = 3) -> np.ndarray:
    """Pick the highest-background-loss negatives, neg_ratio per positive.

    Ordering is (loss desc, anchor index asc) so selection is deterministic.
    Shapes are (N, A); returns a boolean mask of chosen negatives.
    """
    n, a = ce_background.shape
    chosen = np.zeros((n, a), dtype=bool)
    idx = np.arange(a)
    for i in range(n):
        n_pos = int(pos_mask[i].sum())
        k = min(neg_ratio * n_pos, a - n_pos)
        if k <= 0:
            continue
        order = np.lexsort((idx, -ce_background[i]))
        order = order[~pos_mask[i][order]]
        chosen[i, order[:k]] = True
    return chosen


@dataclass
class LossBreakdown:
    total: float
    classification: float
    localization: float


def loss_and_grads(preds: Predictions, cls_targets: np.ndarray, pos_masks: np.ndarray,
                   offset_targets: np.ndarray, neg_ratio: int = 3,
                   neg_mask: Optional[np.ndarray] = None):
    """Summed detection loss and its gradient at the prediction outputs.

    L = mean CE over (positives + hard negatives) + mean over positives of
    the 4-component smooth-L1 offset residual. Passing `neg_mask` freezes the
    negative selection (gradient checking); otherwise it is mined from the
    current background losses and returned.

    Returns (LossBreakdown, dlogits, doffsets, neg_mask).
    """
    logp = log_softmax(preds.class_logits)            # (N, A, 9) float64
    ce_bg = -logp[:, :, 0]
    ce_target = -np.take_along_axis(logp, cls_targets[:, :, None], axis=2)[:, :, 0]
    if neg_mask is None:
        neg_mask = select_hard_negatives(ce_bg, pos_masks, neg_ratio)
    sel = pos_masks | neg_mask
    n_pos = int(pos_masks.sum())
    n_sel = int(sel.sum())
    if n_pos == 0:
        raise RuntimeError("internal error: no positive anchors in batch")
    l_cls = float(ce_target[sel].sum() / n_sel)

    diff = preds.box_offsets.astype(np.float64) - offset_targets
    sl1 = nn.smooth_l1(diff).sum(axis=2)
    l_loc = float(sl1[pos_masks].sum() / n_pos)

    probs = np.exp(logp)
    dlogits = probs.copy()
    rows = np.arange(cls_targets.shape[0])[:, None]
    cols = np.arange(cls_targets.shape[1])[None, :]
    dlogits[rows, cols, cls_targets] -= 1.0
    dlogits *= sel[:, :, None] / n_sel

    doffsets = nn.smooth_l1_grad(diff)
    doffsets *= pos_masks[:, :, None] / n_pos

    dtype = preds.class_logits.dtype
    breakdown = LossBreakdown(total=l_cls + l_loc, classification=l_cls,
                              localization=l_loc)
    return breakdown, dlogits.astype(dtype), doffsets.astype(dtype), neg_mask


# --- training ---

@dataclass
class TrainState:
    config: ModelConfig
    params: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray]
    step: int = 0
    anchors: np.ndarray = field(init=False)

    def __post_init__(self):
        self.anchors = anchors_array(generate_anchors(self.config.anchor_config()))


def make_train_state(config: ModelConfig, seed: int, dtype=np.float32) -> TrainState:
    params = init_params(config, seed, dtype)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    return TrainState(config=config, params=params, velocity=velocity)


def train_step(state: TrainState, images_u8: np.ndarray,
               targets: Sequence[FrameTargets], lr: float = 0.01,
               momentum: float = 0.9, neg_ratio: int = 3) -> LossBreakdown:
    """One SGD+momentum update on a batch; mutates `state` in place.

    velocity = momentum * velocity - lr * grad;  param += velocity.
    """
    dtype = next(iter(state.params.values())).dtype
    x = preprocess(images_u8, dtype=dtype)
    preds, caches = forward(state.config, state.params, x, want_cache=True)
    cls_t, pos_m, off_t = stack_targets(targets)
    breakdown, dlogits, doffsets, _ = loss_and_grads(
        preds, cls_t, pos_m, off_t, neg_ratio=neg_ratio)
    if not np.isfinite(breakdown.total):
        raise TrainingDivergedError(
            f"non-finite loss {breakdown.total} at step {state.step}")
    grads = backward(state.config, state.params, caches, dlogits, doffsets)
    for name, p in state.params.items():
        v = state.velocity[name]
        v *= momentum
        v -= lr * grads[name]
        p += v
    state.step += 1
    return breakdown


# --- inference ---

@dataclass(frozen=True)
class Detection:
    label: ClassLabel
    confidence: float
    bbox: BBox


def detection_from_scores(logits: np.ndarray, offsets: np.ndarray,
                          anchors: np.ndarray,
                          variances: tuple[float, float] = DEFAULT_VARIANCES) -> Detection:
    """Top-confidence pick over one frame's per-anchor scores.

    The anchor with the highest non-background probability wins (ties go to
    the lowest anchor index); its offsets decode against its own anchor. When
    every anchor prefers background the label is None but the best anchor's
    box and its top non-background probability are still reported.
    """
    probs = softmax_probs(logits)
    fg = probs[:, 1:]
    best_fg = fg.max(axis=1)
    a = int(np.argmax(best_fg))
    cls = 1 + int(np.argmax(fg[a]))
    anchor_box = BBox(*anchors[a])
    box = decode(BoxOffsets(*offsets[a]), anchor_box, variances)
    label = None if (probs.argmax(axis=1) == 0).all() else label_from_index(cls)
    return Detection(label=label, confidence=float(best_fg[a]), bbox=box)


def predict(config: ModelConfig, params: dict[str, np.ndarray],
            image: np.ndarray, anchors: Optional[np.ndarray] = None) -> Detection:
    """End-to-end single-image inference: preprocess, forward, decode."""
    if anchors is None:
        anchors = anchors_array(generate_anchors(config.anchor_config()))
    dtype = next(iter(params.values())).dtype
    x = preprocess(image, dtype=dtype)
    preds = forward(config, params, x)
    return detection_from_scores(preds.class_logits[0], preds.box_offsets[0],
                                 anchors, config.variances)


# --- checkpoints ---

def save_weights(path: str | Path, params: dict[str, np.ndarray]) -> None:
    """Binary checkpoint: magic GDW1, then per parameter in manifest order
    (u32 name length, utf-8 name, u32 rank, u32 dims..., float32 LE data)."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        for name, arr in params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a weight checkpoint")
    params: dict[str, np.ndarray] = {}
    off = 4
    while off < len(data):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
        off += 4 * count
        params[name] = arr.reshape(shape).copy()
    return params


def load_weights_for(config: ModelConfig, path: str | Path,
                     dtype=np.float32) -> dict[str, np.ndarray]:
    """Load a checkpoint and verify it matches the config's manifest."""
    params = load_weights(path)
    expected = config.param_shapes()
    if list(params) != list(expected):
        raise ValueError("checkpoint parameter manifest does not match config")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ValueError(f"{name}: checkpoint shape {params[name].shape} != {shape}")
    return {k: v.astype(dtype) for k, v in params.items()}
