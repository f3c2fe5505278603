"""Deterministic zigzag target-box animation and capture-session planning.

The target box sweeps the frame along a boustrophedon path: horizontal rows
ordered top to bottom, alternating direction, joined by vertical segments.
Time is parameterized by arc length so the box moves at constant speed, which
keeps the motion predictable for the subject and lets recorded timestamps be
re-labeled offline by pure recomputation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import BBox, ConfigurationError
from .labels import GestureClass, Hand

DEFAULT_DURATION_S = 30.0

#: Three per-sequence box sizes (w, h); pairwise distinct per the protocol and
#: sized so the default anchor priors (scales 0.2/0.35) cover each one above
#: the matching threshold.
DEFAULT_SESSION_SIZES = ((0.42, 0.42), (0.32, 0.32), (0.24, 0.24))


@dataclass(frozen=True)
class TrajectoryConfig:
    box_w: float
    box_h: float
    n_rows: int = 0          # 0 = derive ceil(1/box_h), guaranteeing full coverage
    duration_s: float = DEFAULT_DURATION_S
    margin: float = 0.0

    def __post_init__(self):
        if not (0 < self.box_w <= 1 and 0 < self.box_h <= 1):
            raise ConfigurationError(f"box {self.box_w}x{self.box_h} must fit the unit frame")
        if self.duration_s <= 0:
            raise ConfigurationError("duration_s must be positive")
        if self.margin < 0 or self.box_w + 2 * self.margin > 1 or self.box_h + 2 * self.margin > 1:
            raise ConfigurationError("margin leaves no room for the box")
        if self.n_rows == 0:
            object.__setattr__(self, "n_rows", max(1, math.ceil(1.0 / self.box_h)))
        if self.n_rows < 1:
            raise ConfigurationError("n_rows must be >= 1")


def _path_vertices(traj: TrajectoryConfig) -> np.ndarray:
    """Polyline of box-center waypoints; consecutive rows share an x endpoint."""
    x_lo = traj.margin + traj.box_w / 2
    x_hi = 1.0 - traj.margin - traj.box_w / 2
    y_lo = traj.margin + traj.box_h / 2
    y_hi = 1.0 - traj.margin - traj.box_h / 2
    if traj.n_rows == 1:
        ys = [y_lo]
    else:
        step = (y_hi - y_lo) / (traj.n_rows - 1)
        ys = [y_lo + i * step for i in range(traj.n_rows)]
    pts = []
    for i, y in enumerate(ys):
        if i % 2 == 0:
            pts.append((x_lo, y))
            pts.append((x_hi, y))
        else:
            pts.append((x_hi, y))
            pts.append((x_lo, y))
    return np.asarray(pts, dtype=np.float64)


def target_at(traj: TrajectoryConfig, t: float) -> BBox:
    """Box position after `t` seconds of the sweep (0 <= t <= duration_s)."""
    if not 0 <= t <= traj.duration_s:
        raise ValueError(f"t={t} outside [0, {traj.duration_s}]")
    pts = _path_vertices(traj)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(seg_len.sum())
    if total == 0.0:
        return BBox(pts[0, 0], pts[0, 1], traj.box_w, traj.box_h)
    d = total * (t / traj.duration_s)
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    i = int(np.searchsorted(cum, d, side="right")) - 1
    i = min(i, len(seg_len) - 1)
    frac = 0.0 if seg_len[i] == 0 else (d - cum[i]) / seg_len[i]
    x = pts[i, 0] + frac * seg[i, 0]
    y = pts[i, 1] + frac * seg[i, 1]
    return BBox(float(x), float(y), traj.box_w, traj.box_h)


def path_length(traj: TrajectoryConfig) -> float:
    pts = _path_vertices(traj)
    seg = np.diff(pts, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def coverage(traj: TrajectoryConfig, n_samples: int, grid: int = 256) -> float:
    """Fraction of the unit frame swept by the union of sampled box footprints.

    A raster cell counts as covered when its center falls inside at least one
    sampled footprint; `grid` must be >= 256 so the estimate is stable.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    if grid < 256:
        raise ValueError("raster grid must be at least 256x256")
    covered = np.zeros((grid, grid), dtype=bool)
    for k in range(n_samples):
        t = traj.duration_s * k / (n_samples - 1)
        b = target_at(traj, t)
        # cell center (i + 0.5)/grid inside [lo, hi]
        c0 = max(0, math.ceil(b.x0 * grid - 0.5))
        c1 = min(grid, math.floor(b.x1 * grid - 0.5) + 1)
        r0 = max(0, math.ceil(b.y0 * grid - 0.5))
        r1 = min(grid, math.floor(b.y1 * grid - 0.5) + 1)
        if c1 > c0 and r1 > r0:
            covered[r0:r1, c0:c1] = True
    return float(covered.sum()) / (grid * grid)


@dataclass(frozen=True)
class SequenceSpec:
    """One clicker-initiated capture sequence; the box size never changes mid-run."""

    gesture: GestureClass
    hand: Hand
    trajectory: TrajectoryConfig
    sequence_index: int


@dataclass(frozen=True)
class SessionPlan:
    subject_id: str
    scene_id: str
    sequences: tuple[SequenceSpec, ...] = field(default_factory=tuple)


def plan_session(subject_id: str, scene_id: str,
                 gestures: Sequence[GestureClass] = tuple(GestureClass),
                 hands: Sequence[Hand] = tuple(Hand),
                 sizes: Sequence[tuple[float, float]] = DEFAULT_SESSION_SIZES,
                 duration_s: float = DEFAULT_DURATION_S) -> SessionPlan:
    """One sequence per (gesture, hand, size), gesture-major order.

    With 4 gestures, 2 hands, and 3 distinct sizes this is the 24-sequence
    session protocol.
    """
    if len(set(sizes)) != len(sizes):
        raise ConfigurationError(f"box sizes must be pairwise distinct, got {sizes}")
    seqs = []
    for g in gestures:
        for hand in hands:
            for (w, h) in sizes:
                seqs.append(SequenceSpec(
                    gesture=g, hand=hand,
                    trajectory=TrajectoryConfig(box_w=w, box_h=h, duration_s=duration_s),
                    sequence_index=len(seqs)))
    return SessionPlan(subject_id=subject_id, scene_id=scene_id, sequences=tuple(seqs))


# --- plan (de)serialization: the text document consumed by capture-serve ---

def plan_to_dict(plan: SessionPlan) -> dict:
    return {
        "subject_id": plan.subject_id,
        "scene_id": plan.scene_id,
        "sequences": [
            {
                "gesture": s.gesture.value,
                "hand": s.hand.value,
                "sequence_index": s.sequence_index,
                "trajectory": {
                    "box_w": s.trajectory.box_w,
                    "box_h": s.trajectory.box_h,
                    "n_rows": s.trajectory.n_rows,
                    "duration_s": s.trajectory.duration_s,
                    "margin": s.trajectory.margin,
                },
            }
            for s in plan.sequences
        ],
    }


def plan_from_dict(d: dict) -> SessionPlan:
    seqs = []
    for s in d["sequences"]:
        tr = s["trajectory"]
        seqs.append(SequenceSpec(
            gesture=GestureClass(s["gesture"]),
            hand=Hand(s["hand"]),
            trajectory=TrajectoryConfig(
                box_w=tr["box_w"], box_h=tr["box_h"], n_rows=tr["n_rows"],
                duration_s=tr["duration_s"], margin=tr["margin"]),
            sequence_index=s["sequence_index"]))
    return SessionPlan(subject_id=d["subject_id"], scene_id=d["scene_id"],
                       sequences=tuple(seqs))


def save_plan(plan: SessionPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")


def load_plan(path: str | Path) -> SessionPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))


def with_duration(plan: SessionPlan, duration_s: float) -> SessionPlan:
    """Copy of `plan` with every sequence re-timed (handy for fast replays)."""
    seqs = tuple(replace(s, trajectory=replace(s.trajectory, duration_s=duration_s))
                 for s in plan.sequences)
    return replace(plan, sequences=seqs)
