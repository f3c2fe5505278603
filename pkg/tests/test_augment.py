import numpy as np
import pytest

from gesturedet.augment import (AugmentParams, SplitMix64, augment_sample,
                                perturb_photometric, random_crop, random_pad,
                                resize_nearest, worker_rng)
from gesturedet.geometry import BBox


class StubRng:
    """Feeds predetermined draw results; uniform/randint pop from the queue."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self, lo=0.0, hi=1.0):
        return self.values.pop(0)

    def randint(self, n):
        return self.values.pop(0)


# --- generator ---

def literal_splitmix64(seed, n):
    """Straight transliteration of the documented update equations."""
    mask = (1 << 64) - 1
    x = seed & mask
    out = []
    for _ in range(n):
        x = (x + 0x9E3779B97F4B7C15) & mask
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def test_splitmix64_matches_documented_equations():
    for seed in (0, 1, 42, 1234567, 2**64 - 1):
        rng = SplitMix64(seed)
        assert [rng.next_u64() for _ in range(20)] == literal_splitmix64(seed, 20)


def test_splitmix64_stream_frozen():
    # frozen via the transliteration above; catches accidental edits
    rng = SplitMix64(0)
    assert rng.next_u64() == 0x09AAB36CFDA2D1B3
    assert rng.next_u64() == 0x5B00C67197590451
    assert rng.next_u64() == 0x0EB2AFB57F7F9972


def test_splitmix64_deterministic_and_seed_sensitive():
    a = [SplitMix64(42).next_u64() for _ in range(5)]   # fresh generator each draw
    r = SplitMix64(42)
    c = [r.next_u64() for _ in range(5)]
    assert a[0] == c[0]
    assert len(set(c)) == 5
    assert c == [SplitMix64(42).next_u64() for _ in range(1)] + c[1:]
    assert c != [v for v in literal_splitmix64(43, 5)]


def test_uniform_range_and_worker_streams():
    rng = SplitMix64(7)
    xs = [rng.uniform() for _ in range(1000)]
    assert all(0 <= x < 1 for x in xs)
    assert 0.4 < np.mean(xs) < 0.6
    w0 = worker_rng(100, 0)
    w1 = worker_rng(100, 1)
    assert w0.next_u64() != w1.next_u64()
    assert worker_rng(100, 1).next_u64() == SplitMix64(101).next_u64()


# --- photometric ---

def test_photometric_identity():
    img = np.random.default_rng(0).integers(0, 256, size=(10, 12), dtype=np.uint8)
    assert np.array_equal(perturb_photometric(img, 0.0, 1.0), img)


def test_photometric_formula_point():
    img = np.full((2, 2), 128, dtype=np.uint8)
    out = perturb_photometric(img, 10.0, 2.0)
    assert (out == 138).all()


def test_photometric_saturates():
    img = np.full((2, 2), 250, dtype=np.uint8)
    assert (perturb_photometric(img, 20.0, 1.0) == 255).all()
    img = np.full((2, 2), 5, dtype=np.uint8)
    assert (perturb_photometric(img, -20.0, 1.0) == 0).all()


def test_photometric_matches_literal_recount():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(6, 7), dtype=np.uint8)
    delta, factor = -13.5, 1.17
    out = perturb_photometric(img, delta, factor)
    for r in range(6):
        for c in range(7):
            v = factor * (int(img[r, c]) - 128) + 128 + delta
            v = int(np.floor(v + 0.5))
            assert out[r, c] == min(255, max(0, v))


# --- crop ---

def test_crop_whole_frame_is_identity():
    img = np.random.default_rng(2).integers(0, 256, size=(24, 32), dtype=np.uint8)
    box = BBox(0.5, 0.5, 0.4, 0.4)
    rng = StubRng([1.0, 1.0, 0.0, 0.0])  # area, aspect, x0, y0
    out, nbox = random_crop(img, box, rng, AugmentParams())
    assert np.array_equal(out, img)
    assert nbox == box


def test_crop_remap_hand_computed():
    img = np.zeros((100, 100), dtype=np.uint8)
    box = BBox(0.5, 0.5, 0.2, 0.2)
    # window [0.25, 0.75]^2: area 0.25, aspect 1
    rng = StubRng([0.25, 1.0, 0.25, 0.25])
    params = AugmentParams(crop_min_iou=0.1)
    out, nbox = random_crop(img, box, rng, params)
    assert out.shape == (50, 50)
    assert nbox.cx == pytest.approx(0.5)
    assert nbox.cy == pytest.approx(0.5)
    assert nbox.w == pytest.approx(0.4)
    assert nbox.h == pytest.approx(0.4)


def test_crop_rejects_low_iou_candidates():
    img = np.zeros((40, 40), dtype=np.uint8)
    box = BBox(0.1, 0.1, 0.15, 0.15)
    # every candidate window sits in the far corner, IoU 0 with the box
    rng = StubRng([0.25, 1.0, 0.5, 0.5] * 50)
    out, nbox = random_crop(img, box, rng, AugmentParams())
    assert np.array_equal(out, img)
    assert nbox == box


def test_crop_gate_holds_for_accepted_windows():
    from gesturedet.geometry import iou
    img = np.zeros((48, 64), dtype=np.uint8)
    box = BBox(0.5, 0.5, 0.5, 0.5)
    params = AugmentParams()
    rng = SplitMix64(11)
    for _ in range(50):
        out, nbox = random_crop(img, box, rng, params)
        assert nbox.contained(1e-9)


# --- pad ---

def test_pad_identity_at_factor_one():
    img = np.random.default_rng(3).integers(0, 256, size=(24, 32), dtype=np.uint8)
    box = BBox(0.4, 0.6, 0.3, 0.2)
    rng = StubRng([1.0, 0, 0])  # factor, off_x, off_y
    out, nbox = random_pad(img, box, rng, AugmentParams(), 32, 24)
    assert np.array_equal(out, img)
    assert nbox == box


def test_pad_factor_two_top_left():
    img = np.full((24, 32), 200, dtype=np.uint8)
    box = BBox(0.5, 0.5, 0.4, 0.4)
    rng = StubRng([2.0, 0, 0])
    out, nbox = random_pad(img, box, rng, AugmentParams(fill_value=7), 32, 24)
    assert out.shape == (24, 32)
    assert nbox.cx == pytest.approx(0.25)
    assert nbox.cy == pytest.approx(0.25)
    assert nbox.w == pytest.approx(0.2)
    assert nbox.h == pytest.approx(0.2)
    assert out[0, 0] == 200       # original content shrunk into top-left
    assert out[-1, -1] == 7       # fill value elsewhere


def test_pad_output_dims_always_match():
    img = np.zeros((24, 32), dtype=np.uint8)
    box = BBox(0.5, 0.5, 0.4, 0.4)
    rng = SplitMix64(5)
    for _ in range(20):
        out, nbox = random_pad(img, box, rng, AugmentParams(), 32, 24)
        assert out.shape == (24, 32)
        assert nbox.contained(1e-9)


def test_resize_nearest_identity_and_downscale():
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert np.array_equal(resize_nearest(img, 4, 3), img)
    half = resize_nearest(np.repeat(np.repeat(img, 2, 0), 2, 1), 4, 3)
    assert np.array_equal(half, img)


# --- pipeline ---

def test_pipeline_reproducible_and_contained():
    img = np.random.default_rng(9).integers(0, 256, size=(48, 64), dtype=np.uint8)
    box = BBox(0.45, 0.55, 0.3, 0.35)
    params = AugmentParams()
    out1, box1 = augment_sample(img, box, SplitMix64(77), params)
    out2, box2 = augment_sample(img, box, SplitMix64(77), params)
    assert np.array_equal(out1, out2)
    assert box1 == box2
    assert out1.shape == img.shape
    assert box1.contained(1e-9)
    out3, _ = augment_sample(img, box, SplitMix64(78), params)
    assert not np.array_equal(out1, out3)


def test_photometric_never_moves_boxes():
    img = np.random.default_rng(10).integers(0, 256, size=(48, 64), dtype=np.uint8)
    box = BBox(0.5, 0.5, 0.4, 0.4)
    params = AugmentParams()
    # same geometric draws, different photometric output: geometry unchanged
    bright = perturb_photometric(img, 20, 1.2)
    _, b1 = random_crop(img, box, SplitMix64(4), params)
    _, b2 = random_crop(bright, box, SplitMix64(4), params)
    assert b1 == b2


def test_params_validation():
    with pytest.raises(ValueError):
        AugmentParams(brightness_delta=(5, -5))
    with pytest.raises(ValueError):
        AugmentParams(pad_max_expand=0.5)
    with pytest.raises(ValueError):
        AugmentParams(crop_min_iou=1.5)
