import filecmp
from pathlib import Path

import numpy as np
import pytest

from gesturedet.dataset import DatasetStore, box_pixel_span, compute_stats
from gesturedet.labels import GestureClass, Hand
from gesturedet.synth import GLYPH_VALUE, NOISE_MAX, render_glyph, span_to_bbox, synth_dataset


def test_frame_count_arithmetic(tmp_path):
    store = synth_dataset(tmp_path / "ds", n_subjects=2, frames_per_sequence=5,
                          seed=0, width=64, height=48)
    assert len(store) == 2 * 24 * 5
    assert len(set(store.frame_ids)) == len(store)


def test_class_counts_equal_by_construction(tmp_path):
    store = synth_dataset(tmp_path / "ds", n_subjects=1, frames_per_sequence=4,
                          seed=1, width=64, height=48)
    stats = compute_stats(store)
    nonzero = [v for v in stats.class_counts.values() if v]
    assert len(nonzero) == 8
    assert len(set(nonzero)) == 1
    assert stats.class_counts["None"] == 0


def test_same_seed_byte_identical(tmp_path):
    a = synth_dataset(tmp_path / "a", 1, 3, seed=5, width=48, height=32)
    b = synth_dataset(tmp_path / "b", 1, 3, seed=5, width=48, height=32)
    pa, pb = Path(a.root), Path(b.root)
    assert (pa / "records.jsonl").read_bytes() == (pb / "records.jsonl").read_bytes()
    names = [p.name for p in sorted((pa / "frames").iterdir())]
    match, mismatch, errors = filecmp.cmpfiles(pa / "frames", pb / "frames", names,
                                               shallow=False)
    assert not mismatch and not errors
    # a different seed keeps the metadata (labels, boxes) but changes the noise
    c = synth_dataset(tmp_path / "c", 1, 3, seed=6, width=48, height=32)
    pc = Path(c.root)
    assert (pa / "records.jsonl").read_bytes() == (pc / "records.jsonl").read_bytes()
    first = names[0]
    assert (pa / "frames" / first).read_bytes() != (pc / "frames" / first).read_bytes()


def test_existing_dir_rejected(tmp_path):
    synth_dataset(tmp_path / "ds", 1, 2, seed=0, width=48, height=32)
    with pytest.raises(FileExistsError):
        synth_dataset(tmp_path / "ds", 1, 2, seed=0, width=48, height=32)


def test_recorded_box_is_glyph_bounds(tmp_path):
    store = synth_dataset(tmp_path / "ds", 1, 6, seed=2, width=64, height=48)
    for fid in store.frame_ids[::7]:
        rec = store.read(fid)
        bright = rec.image >= GLYPH_VALUE   # noise stays below NOISE_MAX
        rows = np.where(bright.any(axis=1))[0]
        cols = np.where(bright.any(axis=0))[0]
        r0, r1, c0, c1 = box_pixel_span(rec.bbox, store.width, store.height)
        assert (rows[0], rows[-1] + 1) == (r0, r1)
        assert (cols[0], cols[-1] + 1) == (c0, c1)


def test_all_eight_glyphs_distinct_and_mirrored():
    span = (4, 28, 6, 30)
    renders = {}
    for g in GestureClass:
        for h in Hand:
            img = np.zeros((40, 40), dtype=np.uint8)
            render_glyph(img, span, g, h)
            renders[(g, h)] = img
    keys = list(renders)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            assert not np.array_equal(renders[a], renders[b]), (a, b)
    for g in GestureClass:
        left = renders[(g, Hand.LEFT)]
        right = renders[(g, Hand.RIGHT)]
        r0, r1, c0, c1 = span
        assert np.array_equal(left[r0:r1, c0:c1][:, ::-1], right[r0:r1, c0:c1])


def test_glyphs_touch_all_edges():
    span = (10, 30, 5, 29)
    r0, r1, c0, c1 = span
    for g in GestureClass:
        for h in Hand:
            img = np.zeros((40, 40), dtype=np.uint8)
            render_glyph(img, span, g, h)
            patch = img[r0:r1, c0:c1]
            assert patch[0].max() == GLYPH_VALUE
            assert patch[-1].max() == GLYPH_VALUE
            assert patch[:, 0].max() == GLYPH_VALUE
            assert patch[:, -1].max() == GLYPH_VALUE
            assert img[r0 - 1].max() < NOISE_MAX or img[r0 - 1].max() == 0


def test_span_to_bbox_roundtrip():
    from gesturedet.dataset import box_pixel_span
    span = (3, 17, 5, 23)
    b = span_to_bbox(span, 64, 48)
    assert box_pixel_span(b, 64, 48) == span
