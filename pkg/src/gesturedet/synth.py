"""Synthetic glyph dataset: a desk-scale stand-in for human capture.

Each frame is a noise background with one bright glyph rendered inside the
trajectory's target box at that frame's timestamp. The glyph pattern encodes
the gesture class; the right-hand variant is the horizontal mirror of the
left, and every pattern is horizontally asymmetric so the eight
(gesture, hand) classes stay separable. Glyphs touch all four box edges, so
the recorded bounding box is exactly the glyph's pixel bounds.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import DatasetStore, FrameRecord, box_pixel_span
from .geometry import BBox
from .labels import GestureClass, Hand
from .trajectory import DEFAULT_SESSION_SIZES, plan_session, target_at

GLYPH_VALUE = 220
NOISE_MAX = 80  # background noise is uniform over [0, NOISE_MAX)

# Quadrant patterns (left hand); the right hand mirrors horizontally.
# Every pattern touches all four box edges so glyph bounds == box, and none
# equals another pattern's mirror, keeping all eight classes distinct.
_QUADRANT_PATTERNS = {
    GestureClass.THUMBS_PRESS: ("TL", "BR"),
    GestureClass.THUMBS_UP: ("TL", "TR", "BL"),
    GestureClass.THUMBS_DOWN: ("TL", "BL", "BR"),
}
_MIRROR = {"TL": "TR", "TR": "TL", "BL": "BR", "BR": "BL"}


def render_glyph(image: np.ndarray, span: tuple[int, int, int, int],
                 gesture: GestureClass, hand: Hand) -> None:
    """Draw the (gesture, hand) glyph into the pixel span, in place."""
    r0, r1, c0, c1 = span
    rm = (r0 + r1) // 2
    cm = (c0 + c1) // 2
    quads = {
        "TL": (r0, rm, c0, cm),
        "TR": (r0, rm, cm, c1),
        "BL": (rm, r1, c0, cm),
        "BR": (rm, r1, cm, c1),
    }
    if gesture is GestureClass.PEACE:
        # two full-height bars, the wider one on the hand's side
        w = c1 - c0
        if hand is Hand.LEFT:
            wide = (c0, c0 + max(1, round(0.4 * w)))
            narrow = (c0 + round(0.7 * w), c1)
        else:
            narrow = (c0, c0 + max(1, round(0.3 * w)))
            wide = (c0 + round(0.6 * w), c1)
        image[r0:r1, wide[0] : wide[1]] = GLYPH_VALUE
        image[r0:r1, narrow[0] : narrow[1]] = GLYPH_VALUE
        return
    names = _QUADRANT_PATTERNS[gesture]
    if hand is Hand.RIGHT:
        names = tuple(_MIRROR[n] for n in names)
    for n in names:
        qr0, qr1, qc0, qc1 = quads[n]
        image[qr0:qr1, qc0:qc1] = GLYPH_VALUE


def span_to_bbox(span: tuple[int, int, int, int], width: int, height: int) -> BBox:
    """Normalized bounds of a pixel span: the glyph's exact box."""
    r0, r1, c0, c1 = span
    return BBox(cx=(c0 + c1) / (2 * width), cy=(r0 + r1) / (2 * height),
                w=(c1 - c0) / width, h=(r1 - r0) / height)


def synth_dataset(out_dir: str | Path, n_subjects: int, frames_per_sequence: int,
                  seed: int, width: int = 320, height: int = 240,
                  sizes: Sequence[tuple[float, float]] = DEFAULT_SESSION_SIZES,
                  duration_s: float = 30.0) -> DatasetStore:
    """Generate the full session protocol for each synthetic subject.

    One store of n_subjects * 24 * frames_per_sequence frames, labels and
    boxes following real trajectories; byte-identical for a fixed seed.
    """
    out_dir = Path(out_dir)
    if out_dir.exists():
        raise FileExistsError(f"{out_dir} already exists")
    rng = np.random.default_rng(seed)
    store = DatasetStore.create(out_dir, width, height)
    fid = 0
    for si in range(n_subjects):
        plan = plan_session(f"subj{si:02d}", f"scene{si:02d}", sizes=sizes,
                            duration_s=duration_s)
        for seq in plan.sequences:
            traj = seq.trajectory
            for k in range(frames_per_sequence):
                t = (k + 0.5) * traj.duration_s / frames_per_sequence
                target = target_at(traj, t)
                image = rng.integers(0, NOISE_MAX, size=(height, width), dtype=np.uint8)
                span = box_pixel_span(target, width, height)
                render_glyph(image, span, seq.gesture, seq.hand)
                store.append(FrameRecord(
                    frame_id=fid, subject_id=plan.subject_id, scene_id=plan.scene_id,
                    sequence_index=seq.sequence_index, timestamp_s=t, image=image,
                    label=(seq.gesture, seq.hand),
                    bbox=span_to_bbox(span, width, height)))
                fid += 1
    store.close()
    return store
