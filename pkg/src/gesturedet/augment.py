"""Training-time augmentation: photometric perturbation and crop/pad with
consistent box bookkeeping.

Randomness comes from :class:`SplitMix64`, a 64-bit generator small enough to
re-specify in any language (update equations in the class docstring and in
docs/formats.md), so a fixed seed reproduces the augmentation stream bit for
bit anywhere. Parallel workers derive independent streams by XOR-ing the base
seed with the worker index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox
from .dataset import box_pixel_span

_M64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 sequence generator.

    State update and output for each draw (all arithmetic mod 2^64):

        state += 0x9E3779B97F4B7C15
        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

    uniform() maps a draw to [0, 1) as (z >> 11) * 2**-53; randint(n) is a
    plain modulo reduction (documented bias is negligible for the small n
    used here).
    """

    def __init__(self, seed: int):
        self.state = seed & _M64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4B7C15) & _M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        return self.next_u64() % n

    def spawn(self, worker_index: int) -> "SplitMix64":
        return SplitMix64(self.state ^ worker_index)


def worker_rng(base_seed: int, worker_index: int) -> SplitMix64:
    return SplitMix64(base_seed ^ worker_index)


@dataclass(frozen=True)
class AugmentParams:
    brightness_delta: tuple[float, float] = (-25.0, 25.0)
    contrast_factor: tuple[float, float] = (0.8, 1.25)
    crop_min_iou: float = 0.5
    crop_area: tuple[float, float] = (0.5, 1.0)
    crop_attempts: int = 50
    pad_max_expand: float = 1.5
    fill_value: int = 128      # set this to the dataset mean intensity

    def __post_init__(self):
        for lo, hi in (self.brightness_delta, self.contrast_factor, self.crop_area):
            if hi < lo:
                raise ValueError(f"empty range ({lo}, {hi})")
        if not 0 <= self.crop_min_iou <= 1:
            raise ValueError("crop_min_iou must be in [0, 1]")
        if self.pad_max_expand < 1:
            raise ValueError("pad_max_expand must be >= 1")


def perturb_photometric(image: np.ndarray, brightness_delta: float,
                        contrast_factor: float) -> np.ndarray:
    """out = clamp_0_255(round(contrast*(in - 128) + 128 + brightness)).

    Rounding is floor(v + 0.5) so the arithmetic is identical across
    languages. Box labels are untouched by photometric ops.
    """
    v = contrast_factor * (image.astype(np.float64) - 128.0) + 128.0 + brightness_delta
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def _clip_box_to_window(bbox: BBox, win: BBox) -> BBox:
    """Ground-truth box clipped to a crop window, renormalized to the window."""
    x0 = max(bbox.x0, win.x0)
    x1 = min(bbox.x1, win.x1)
    y0 = max(bbox.y0, win.y0)
    y1 = min(bbox.y1, win.y1)
    nx0 = (x0 - win.x0) / win.w
    nx1 = (x1 - win.x0) / win.w
    ny0 = (y0 - win.y0) / win.h
    ny1 = (y1 - win.y0) / win.h
    return BBox((nx0 + nx1) / 2, (ny0 + ny1) / 2, nx1 - nx0, ny1 - ny0)


def retained_iou(bbox: BBox, win: BBox) -> float:
    """IoU between the box and its window-clipped self: the fraction of the
    box still visible after cropping (clipped box is a subset of the box, so
    this is intersection area over box area)."""
    ix = min(bbox.x1, win.x1) - max(bbox.x0, win.x0)
    iy = min(bbox.y1, win.y1) - max(bbox.y0, win.y0)
    if ix <= 0 or iy <= 0:
        return 0.0
    return (ix * iy) / (bbox.w * bbox.h)


def random_crop(image: np.ndarray, bbox: BBox, rng: SplitMix64,
                params: AugmentParams) -> tuple[np.ndarray, BBox]:
    """Crop to a sampled window that retains at least crop_min_iou of the box.

    Up to `crop_attempts` candidate windows are drawn (per attempt: area
    fraction, aspect jitter, x offset, y offset — four uniform draws); the
    first whose retained IoU passes the gate is applied, with the box clipped
    to the window and renormalized. If every candidate fails the input is
    returned unchanged — rejection is not an error.

    The output image is the cropped region (smaller than the input);
    :func:`random_pad` restores dataset dimensions.
    """
    h_px, w_px = image.shape
    for _ in range(params.crop_attempts):
        area = rng.uniform(*params.crop_area)
        aspect = rng.uniform(0.75, 4.0 / 3.0)
        win_w = min(1.0, math.sqrt(area * aspect))
        win_h = min(1.0, math.sqrt(area / aspect))
        x0 = rng.uniform(0.0, 1.0 - win_w)
        y0 = rng.uniform(0.0, 1.0 - win_h)
        win = BBox(x0 + win_w / 2, y0 + win_h / 2, win_w, win_h)
        if retained_iou(bbox, win) < params.crop_min_iou:
            continue
        if win_w == 1.0 and win_h == 1.0:
            return image, bbox
        r0, r1, c0, c1 = box_pixel_span(win, w_px, h_px)
        if r1 - r0 < 2 or c1 - c0 < 2:
            continue
        return image[r0:r1, c0:c1].copy(), _clip_box_to_window(bbox, win)
    return image, bbox


def resize_nearest(image: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbor resize with integer source indexing:
    src = floor((2*dst + 1) * in_size / (2 * out_size)).
    """
    in_h, in_w = image.shape
    rows = ((2 * np.arange(out_h, dtype=np.int64) + 1) * in_h) // (2 * out_h)
    cols = ((2 * np.arange(out_w, dtype=np.int64) + 1) * in_w) // (2 * out_w)
    return image[rows[:, None], cols[None, :]]


def random_pad(image: np.ndarray, bbox: BBox, rng: SplitMix64, params: AugmentParams,
               out_w: int, out_h: int) -> tuple[np.ndarray, BBox]:
    """Place the frame at a random offset inside an expanded canvas, fill the
    surroundings, then resize back to (out_w, out_h) by nearest neighbor.

    Per call: expansion factor, x offset, y offset — three draws, always
    consumed so streams stay aligned.
    """
    h_px, w_px = image.shape
    factor = rng.uniform(1.0, params.pad_max_expand)
    canvas_w = max(w_px, int(round(w_px * factor)))
    canvas_h = max(h_px, int(round(h_px * factor)))
    off_x = rng.randint(canvas_w - w_px + 1)
    off_y = rng.randint(canvas_h - h_px + 1)
    if canvas_w == w_px and canvas_h == h_px:
        return resize_nearest(image, out_w, out_h), bbox
    canvas = np.full((canvas_h, canvas_w), params.fill_value, dtype=np.uint8)
    canvas[off_y : off_y + h_px, off_x : off_x + w_px] = image
    new_box = BBox(
        (off_x + bbox.cx * w_px) / canvas_w,
        (off_y + bbox.cy * h_px) / canvas_h,
        bbox.w * w_px / canvas_w,
        bbox.h * h_px / canvas_h,
    )
    return resize_nearest(canvas, out_w, out_h), new_box


def augment_sample(image: np.ndarray, bbox: BBox, rng: SplitMix64,
                   params: AugmentParams) -> tuple[np.ndarray, BBox]:
    """Full pipeline: photometric -> random crop -> random pad.

    Output is always the input's dimensions; the returned box stays inside
    the unit frame. Bit-reproducible for a given rng state.
    """
    h_px, w_px = image.shape
    delta = rng.uniform(*params.brightness_delta)
    factor = rng.uniform(*params.contrast_factor)
    out = perturb_photometric(image, delta, factor)
    out, box = random_crop(out, bbox, rng, params)
    return random_pad(out, box, rng, params, w_px, h_px)
