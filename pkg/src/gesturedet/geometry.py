"""Box arithmetic, anchor tiling, offset encoding/decoding, and anchor matching.

All geometry lives in normalized frame coordinates: a box is (cx, cy, w, h)
with every field a dimensionless fraction of frame width/height. Pixel
conversion happens only at render/statistics boundaries, so nothing here
depends on the frame size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

CONTAINMENT_EPS = 1e-6

# Conventional SSD encoding variances (sigma_center, sigma_size).
DEFAULT_VARIANCES = (0.1, 0.2)


class InvalidBoxError(ValueError):
    """Raised when a box violates its basic invariants (w, h > 0 and finite)."""


class ConfigurationError(ValueError):
    """Raised for invalid anchor/session configuration values."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: center (cx, cy) and size (w, h), fractions of the frame."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)
                and math.isfinite(self.w) and math.isfinite(self.h)):
            raise InvalidBoxError(f"non-finite box {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"degenerate box w={self.w} h={self.h}")

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2

    def contained(self, eps: float = CONTAINMENT_EPS) -> bool:
        """True if the box lies inside the unit frame up to rounding slack."""
        return (self.x0 >= -eps and self.y0 >= -eps
                and self.x1 <= 1 + eps and self.y1 <= 1 + eps)

    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


def require_contained(box: BBox, eps: float = CONTAINMENT_EPS) -> BBox:
    """Boundary check used where boxes enter persistent records."""
    if not box.contained(eps):
        raise InvalidBoxError(f"box leaves the unit frame: {box!r}")
    return box


@dataclass(frozen=True)
class Anchor:
    """A prior box plus its origin in the anchor tiling.

    Anchors for one config are deterministic and totally ordered by
    (map_index, row, col, prior_index); edge-cell priors may overhang the
    unit frame, which is fine because anchors never become data boxes.
    """

    cx: float
    cy: float
    w: float
    h: float
    map_index: int
    row: int
    col: int
    prior_index: int


@dataclass(frozen=True)
class BoxOffsets:
    """Regression targets (t_cx, t_cy, t_w, t_h) of a box against an anchor."""

    t_cx: float
    t_cy: float
    t_w: float
    t_h: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.t_cx, self.t_cy, self.t_w, self.t_h)


@dataclass(frozen=True)
class FeatureMapSpec:
    """One anchor grid: rows x cols cells, priors = scales x aspect ratios."""

    rows: int
    cols: int
    scales: tuple[float, ...]
    aspects: tuple[float, ...]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if not self.scales or not self.aspects:
            raise ConfigurationError("need at least one scale and one aspect ratio")
        for s in self.scales:
            if not 0 < s <= 1:
                raise ConfigurationError(f"prior scale {s} outside (0, 1]")
        for a in self.aspects:
            if a <= 0:
                raise ConfigurationError(f"aspect ratio {a} must be positive")

    @property
    def priors_per_cell(self) -> int:
        return len(self.scales) * len(self.aspects)

    @property
    def num_anchors(self) -> int:
        return self.rows * self.cols * self.priors_per_cell


@dataclass(frozen=True)
class AnchorConfig:
    maps: tuple[FeatureMapSpec, ...]
    variances: tuple[float, float] = DEFAULT_VARIANCES

    def __post_init__(self):
        if not self.maps:
            raise ConfigurationError("anchor config needs at least one feature map")
        if self.variances[0] <= 0 or self.variances[1] <= 0:
            raise ConfigurationError("variances must be positive")

    @property
    def num_anchors(self) -> int:
        return sum(m.num_anchors for m in self.maps)


#: Grids for a 320x240 frame at strides 32 and 64, with one prior set sized to
#: cover observed hand boxes tightly (scale-major, then aspect).
DEFAULT_SCALES = (0.2, 0.35)
DEFAULT_ASPECTS = (1.0, 0.75, 1.33)


def default_anchor_config() -> AnchorConfig:
    return AnchorConfig(maps=(
        FeatureMapSpec(rows=8, cols=10, scales=DEFAULT_SCALES, aspects=DEFAULT_ASPECTS),
        FeatureMapSpec(rows=4, cols=5, scales=DEFAULT_SCALES, aspects=DEFAULT_ASPECTS),
    ))


def iou(a, b) -> float:
    """Intersection over union of two boxes (anything with cx/cy/w/h).

    Touching edges (zero-area intersection) count as disjoint.
    """
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from the same corner arithmetic so iou(a, a) is exactly 1
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou_one_to_many(box, boxes: np.ndarray) -> np.ndarray:
    """IoU of a single box against an (N, 4) array of (cx, cy, w, h) rows."""
    bx0 = box.cx - box.w / 2
    bx1 = box.cx + box.w / 2
    by0 = box.cy - box.h / 2
    by1 = box.cy + box.h / 2
    x0 = boxes[:, 0] - boxes[:, 2] / 2
    x1 = boxes[:, 0] + boxes[:, 2] / 2
    y0 = boxes[:, 1] - boxes[:, 3] / 2
    y1 = boxes[:, 1] + boxes[:, 3] / 2
    iw = np.minimum(x1, bx1) - np.maximum(x0, bx0)
    ih = np.minimum(y1, by1) - np.maximum(y0, by0)
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = (x1 - x0) * (y1 - y0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def generate_anchors(config: AnchorConfig) -> list[Anchor]:
    """Tile every feature map with its priors, ordered by (map, row, col, prior).

    Cell (r, c) priors sit at ((c + 0.5)/cols, (r + 0.5)/rows); a prior with
    scale s and aspect rho has w = s*sqrt(rho), h = s/sqrt(rho).
    """
    anchors = []
    for mi, fm in enumerate(config.maps):
        sizes = [(s * math.sqrt(rho), s / math.sqrt(rho))
                 for s in fm.scales for rho in fm.aspects]
        for r in range(fm.rows):
            cy = (r + 0.5) / fm.rows
            for c in range(fm.cols):
                cx = (c + 0.5) / fm.cols
                for pi, (w, h) in enumerate(sizes):
                    anchors.append(Anchor(cx, cy, w, h, mi, r, c, pi))
    return anchors


def anchors_array(anchors: Sequence[Anchor]) -> np.ndarray:
    """Pack anchors into an (N, 4) float64 array of (cx, cy, w, h) rows."""
    out = np.empty((len(anchors), 4), dtype=np.float64)
    for i, a in enumerate(anchors):
        out[i, 0] = a.cx
        out[i, 1] = a.cy
        out[i, 2] = a.w
        out[i, 3] = a.h
    return out


def encode(box: BBox, anchor, variances: tuple[float, float] = DEFAULT_VARIANCES) -> BoxOffsets:
    """Regression targets of `box` against `anchor`:

    t_cx = (b.cx - a.cx) / (a.w * sigma_c),  t_w = ln(b.w / a.w) / sigma_s
    (and the analogous t_cy, t_h).
    """
    sc, ss = variances
    t_cx = (box.cx - anchor.cx) / (anchor.w * sc)
    t_cy = (box.cy - anchor.cy) / (anchor.h * sc)
    t_w = math.log(box.w / anchor.w) / ss
    t_h = math.log(box.h / anchor.h) / ss
    if not all(map(math.isfinite, (t_cx, t_cy, t_w, t_h))):
        raise InvalidBoxError(f"offsets not finite for box={box!r} anchor={anchor!r}")
    return BoxOffsets(t_cx, t_cy, t_w, t_h)


def decode(offsets: BoxOffsets, anchor, variances: tuple[float, float] = DEFAULT_VARIANCES) -> BBox:
    """Exact inverse of :func:`encode`. The result is not clipped to the frame."""
    sc, ss = variances
    cx = anchor.cx + offsets.t_cx * anchor.w * sc
    cy = anchor.cy + offsets.t_cy * anchor.h * sc
    w = anchor.w * math.exp(offsets.t_w * ss)
    h = anchor.h * math.exp(offsets.t_h * ss)
    return BBox(cx, cy, w, h)


def encode_array(box: BBox, anchors: np.ndarray,
                 variances: tuple[float, float] = DEFAULT_VARIANCES) -> np.ndarray:
    """Vectorized :func:`encode` of one ground-truth box against (N, 4) anchors."""
    sc, ss = variances
    out = np.empty_like(anchors)
    out[:, 0] = (box.cx - anchors[:, 0]) / (anchors[:, 2] * sc)
    out[:, 1] = (box.cy - anchors[:, 1]) / (anchors[:, 3] * sc)
    out[:, 2] = np.log(box.w / anchors[:, 2]) / ss
    out[:, 3] = np.log(box.h / anchors[:, 3]) / ss
    return out


def match_anchors(gt: BBox, anchors: Sequence[Anchor] | np.ndarray,
                  iou_threshold: float = 0.5) -> np.ndarray:
    """Per-anchor positive/negative assignment for one ground-truth box.

    The highest-IoU anchor is always positive (ties to the lowest index), and
    every anchor with IoU >= iou_threshold is positive too. Returns a boolean
    mask over anchors in their canonical order.
    """
    if not 0 < iou_threshold < 1:
        raise ConfigurationError(f"iou_threshold {iou_threshold} outside (0, 1)")
    arr = anchors if isinstance(anchors, np.ndarray) else anchors_array(anchors)
    if arr.shape[0] == 0:
        raise ConfigurationError("cannot match against an empty anchor list")
    ious = iou_one_to_many(gt, arr)
    positive = ious >= iou_threshold
    positive[int(np.argmax(ious))] = True  # argmax takes the lowest index on ties
    return positive
