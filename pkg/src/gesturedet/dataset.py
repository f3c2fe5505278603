"""Auto-labeled frame store, subject-disjoint splitting, and dataset statistics.

On disk a dataset is a directory:

    manifest.json        version, frame width/height, the 9-entry class table
    records.jsonl        one metadata object per line, fixed key order:
                         frame_id, subject_id, scene_id, sequence_index,
                         timestamp_s, label, bbox
    frames/NNNNNNNN.pgm  binary 8-bit PGM (P5), one per frame

Every field is human-inspectable and bit-exact: JSON floats use shortest
round-trip formatting and images are raw PGM, so rewriting the same records
reproduces the directory byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .geometry import BBox, require_contained
from .labels import (CLASS_NAMES, ClassLabel, GestureClass, Hand, NUM_CLASSES,
                     label_from_name, label_index, label_name)

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"
FRAMES_DIR = "frames"
FORMAT_VERSION = 1

HEATMAP_COLS = 32
HEATMAP_ROWS = 24
WIDTH_HIST_BINS = 16


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    """One captured grayscale frame with its auto-generated label and box."""

    frame_id: int
    subject_id: str
    scene_id: str
    sequence_index: int
    timestamp_s: float
    image: np.ndarray          # (H, W) uint8
    label: tuple[GestureClass, Hand]
    bbox: BBox


# --- PGM (P5) ---

def write_pgm(path: Path, image: np.ndarray) -> None:
    if image.dtype != np.uint8 or image.ndim != 2:
        raise DatasetError(f"expected (H, W) uint8 image, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise DatasetError(f"{path} is not a binary PGM")
    fields = []
    i = 2
    while len(fields) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        fields.append(int(data[i:j]))
        i = j
    i += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise DatasetError(f"unsupported PGM maxval {maxval}")
    return np.frombuffer(data[i : i + w * h], dtype=np.uint8).reshape(h, w).copy()


def frame_filename(frame_id: int) -> str:
    return f"{frame_id:08d}.pgm"


def box_pixel_span(bbox: BBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Half-open pixel rows/cols (r0, r1, c0, c1) whose centers fall inside `bbox`.

    Pixel (r, c) has center ((c + 0.5)/W, (r + 0.5)/H); membership is
    x0 <= center_x < x1 and likewise vertically.
    """
    c0 = max(0, math.ceil(bbox.x0 * width - 0.5))
    c1 = min(width, math.ceil(bbox.x1 * width - 0.5))
    r0 = max(0, math.ceil(bbox.y0 * height - 0.5))
    r1 = min(height, math.ceil(bbox.y1 * height - 0.5))
    return r0, r1, c0, c1


def _record_json_line(rec: FrameRecord) -> str:
    obj = {
        "frame_id": rec.frame_id,
        "subject_id": rec.subject_id,
        "scene_id": rec.scene_id,
        "sequence_index": rec.sequence_index,
        "timestamp_s": rec.timestamp_s,
        "label": label_name(rec.label),
        "bbox": [rec.bbox.cx, rec.bbox.cy, rec.bbox.w, rec.bbox.h],
    }
    return json.dumps(obj, separators=(",", ":")) + "\n"


@dataclass(frozen=True)
class _Meta:
    frame_id: int
    subject_id: str
    scene_id: str
    sequence_index: int
    timestamp_s: float
    label: tuple[GestureClass, Hand]
    bbox: BBox


class DatasetStore:
    """Directory-backed frame store. One writer at a time; readers any number.

    Metadata for every record is kept in memory (it is tiny); images stay on
    disk until read.
    """

    def __init__(self, root: Path, width: int, height: int, records: list[_Meta]):
        self.root = Path(root)
        self.width = width
        self.height = height
        self._records = records
        self._index = {m.frame_id: i for i, m in enumerate(records)}
        self._records_fh = None

    # -- lifecycle --

    @classmethod
    def create(cls, root: str | Path, width: int, height: int) -> "DatasetStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=False)
        (root / FRAMES_DIR).mkdir()
        manifest = {
            "version": FORMAT_VERSION,
            "width": width,
            "height": height,
            "classes": list(CLASS_NAMES),
        }
        (root / MANIFEST_NAME).write_text(json.dumps(manifest, separators=(",", ":")) + "\n")
        (root / RECORDS_NAME).write_bytes(b"")
        return cls(root, width, height, [])

    @classmethod
    def open(cls, root: str | Path) -> "DatasetStore":
        root = Path(root)
        manifest = json.loads((root / MANIFEST_NAME).read_text())
        if manifest["version"] != FORMAT_VERSION:
            raise DatasetError(f"unsupported dataset version {manifest['version']}")
        if manifest["classes"] != list(CLASS_NAMES):
            raise DatasetError("dataset class table does not match this build")
        records = []
        with open(root / RECORDS_NAME, "r", encoding="ascii") as f:
            for line in f:
                o = json.loads(line)
                records.append(_Meta(
                    frame_id=o["frame_id"],
                    subject_id=o["subject_id"],
                    scene_id=o["scene_id"],
                    sequence_index=o["sequence_index"],
                    timestamp_s=o["timestamp_s"],
                    label=label_from_name(o["label"]),
                    bbox=BBox(*o["bbox"]),
                ))
        return cls(root, manifest["width"], manifest["height"], records)

    def close(self) -> None:
        if self._records_fh is not None:
            self._records_fh.flush()
            os.fsync(self._records_fh.fileno())
            self._records_fh.close()
            self._records_fh = None

    def __enter__(self) -> "DatasetStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- writing --

    def append(self, rec: FrameRecord) -> None:
        if rec.frame_id in self._index:
            raise DatasetError(f"duplicate frame_id {rec.frame_id}")
        if rec.image.shape != (self.height, self.width) or rec.image.dtype != np.uint8:
            raise DatasetError(
                f"image {rec.image.shape} {rec.image.dtype} does not match "
                f"{self.height}x{self.width} uint8 store")
        if rec.label is None:
            raise DatasetError("captured frames always carry a gesture label")
        if rec.timestamp_s < 0:
            raise DatasetError(f"negative timestamp {rec.timestamp_s}")
        require_contained(rec.bbox)
        write_pgm(self.root / FRAMES_DIR / frame_filename(rec.frame_id), rec.image)
        if self._records_fh is None:
            self._records_fh = open(self.root / RECORDS_NAME, "a", encoding="ascii")
        self._records_fh.write(_record_json_line(rec))
        self._records_fh.flush()
        meta = _Meta(rec.frame_id, rec.subject_id, rec.scene_id, rec.sequence_index,
                     rec.timestamp_s, rec.label, rec.bbox)
        self._index[rec.frame_id] = len(self._records)
        self._records.append(meta)

    def next_frame_id(self) -> int:
        return max(self._index) + 1 if self._index else 0

    # -- reading --

    def __len__(self) -> int:
        return len(self._records)

    @property
    def frame_ids(self) -> list[int]:
        return [m.frame_id for m in self._records]

    def subjects(self) -> list[str]:
        return sorted({m.subject_id for m in self._records})

    def meta(self, frame_id: int) -> _Meta:
        return self._records[self._index[frame_id]]

    def read(self, frame_id: int) -> FrameRecord:
        m = self.meta(frame_id)
        image = read_pgm(self.root / FRAMES_DIR / frame_filename(frame_id))
        if image.shape != (self.height, self.width):
            raise DatasetError(f"frame {frame_id} has shape {image.shape}")
        return FrameRecord(m.frame_id, m.subject_id, m.scene_id, m.sequence_index,
                           m.timestamp_s, image, m.label, m.bbox)

    def iter_records(self, ids: Optional[Iterable[int]] = None) -> Iterator[FrameRecord]:
        ids = self.frame_ids if ids is None else list(ids)
        for fid in ids:
            yield self.read(fid)


def split_by_subject(store: DatasetStore, eval_fraction: float, seed: int
                     ) -> tuple[list[int], list[int]]:
    """Partition frame ids into (train, eval) with disjoint subject sets.

    Subjects are shuffled under `seed`, then greedily assigned to the eval
    side while that keeps the eval frame share at least as close to
    `eval_fraction` as leaving them out; both sides always keep at least one
    subject. Deterministic given (store contents, fraction, seed).
    """
    if not 0 < eval_fraction < 1:
        raise DatasetError(f"eval_fraction {eval_fraction} outside (0, 1)")
    subjects = store.subjects()
    if len(subjects) < 2:
        raise DatasetError("need at least 2 subjects for a subject-disjoint split")
    counts = {s: 0 for s in subjects}
    for m in store._records:
        counts[m.subject_id] += 1
    total = len(store)
    target = eval_fraction * total

    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    eval_subjects: set[str] = set()
    eval_count = 0
    for s in order:
        if len(eval_subjects) == len(subjects) - 1:
            break
        if abs(eval_count + counts[s] - target) <= abs(eval_count - target):
            eval_subjects.add(s)
            eval_count += counts[s]
    if not eval_subjects:
        eval_subjects.add(order[0])

    train_ids = [m.frame_id for m in store._records if m.subject_id not in eval_subjects]
    eval_ids = [m.frame_id for m in store._records if m.subject_id in eval_subjects]
    return sorted(train_ids), sorted(eval_ids)


@dataclass
class DatasetStats:
    """Exact counting statistics over a record selection."""

    total_frames: int
    class_counts: dict[str, int]            # all 9 labels, captured data has None=0
    class_fractions: dict[str, float]
    center_heatmap: np.ndarray               # (HEATMAP_ROWS, HEATMAP_COLS) int64
    width_hist_px: np.ndarray                 # (WIDTH_HIST_BINS,) int64
    width_bin_edges_px: np.ndarray            # (WIDTH_HIST_BINS + 1,) float64
    intensity_hist: np.ndarray                # (256,) int64, all pixels
    intensity_hist_inbox: np.ndarray          # (256,) int64, pixels inside boxes

    @property
    def mean_intensity(self) -> float:
        counts = self.intensity_hist
        return float((np.arange(256) * counts).sum() / counts.sum())

    def to_dict(self) -> dict:
        return {
            "total_frames": self.total_frames,
            "class_counts": self.class_counts,
            "class_fractions": self.class_fractions,
            "center_heatmap": self.center_heatmap.tolist(),
            "width_hist_px": self.width_hist_px.tolist(),
            "width_bin_edges_px": self.width_bin_edges_px.tolist(),
            "intensity_hist": self.intensity_hist.tolist(),
            "intensity_hist_inbox": self.intensity_hist_inbox.tolist(),
        }


def compute_stats(store: DatasetStore, ids: Optional[Sequence[int]] = None) -> DatasetStats:
    """Class balance, box-center heatmap, box-width histogram (pixels), and
    pixel-intensity histograms for the whole frame and inside boxes.

    Histogram/heatmap bins are exact counts; any brute-force recount must
    match bin for bin.
    """
    ids = store.frame_ids if ids is None else list(ids)
    if not ids:
        raise DatasetError("empty selection")
    class_counts = {name: 0 for name in CLASS_NAMES}
    heatmap = np.zeros((HEATMAP_ROWS, HEATMAP_COLS), dtype=np.int64)
    width_hist = np.zeros(WIDTH_HIST_BINS, dtype=np.int64)
    intensity = np.zeros(256, dtype=np.int64)
    intensity_inbox = np.zeros(256, dtype=np.int64)
    W, H = store.width, store.height
    for rec in store.iter_records(ids):
        class_counts[label_name(rec.label)] += 1
        row = min(HEATMAP_ROWS - 1, int(rec.bbox.cy * HEATMAP_ROWS))
        col = min(HEATMAP_COLS - 1, int(rec.bbox.cx * HEATMAP_COLS))
        heatmap[row, col] += 1
        width_hist[min(WIDTH_HIST_BINS - 1, int(rec.bbox.w * WIDTH_HIST_BINS))] += 1
        intensity += np.bincount(rec.image.reshape(-1), minlength=256)
        r0, r1, c0, c1 = box_pixel_span(rec.bbox, W, H)
        if r1 > r0 and c1 > c0:
            intensity_inbox += np.bincount(rec.image[r0:r1, c0:c1].reshape(-1), minlength=256)
    total = len(ids)
    fractions = {name: class_counts[name] / total for name in CLASS_NAMES}
    edges = np.arange(WIDTH_HIST_BINS + 1, dtype=np.float64) * (W / WIDTH_HIST_BINS)
    return DatasetStats(
        total_frames=total,
        class_counts=class_counts,
        class_fractions=fractions,
        center_heatmap=heatmap,
        width_hist_px=width_hist,
        width_bin_edges_px=edges,
        intensity_hist=intensity,
        intensity_hist_inbox=intensity_inbox,
    )
