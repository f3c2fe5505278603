import numpy as np
import pytest

from gesturedet import model as M
from gesturedet.dataset import split_by_subject
from gesturedet.synth import synth_dataset
from gesturedet.train import TrainSettings, train_detector


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    root = tmp_path_factory.mktemp("train_ds")
    return synth_dataset(root / "ds", n_subjects=2, frames_per_sequence=6,
                         seed=0, width=48, height=32)


def small_config(store):
    return M.ModelConfig(
        name="unit", width=store.width, height=store.height, alpha=0.25,
        stem_channels=16,
        blocks=(M.BlockSpec(32, 2), M.BlockSpec(64, 2)), taps=(2,),
        prior_scales=(0.25, 0.4), prior_aspects=(1.0,))


def test_training_is_seed_deterministic(store):
    cfg = small_config(store)
    train_ids, _ = split_by_subject(store, 0.5, seed=0)
    runs = []
    for _ in range(2):
        state, hist = train_detector(cfg, store, train_ids,
                                     TrainSettings(steps=25, seed=9))
        runs.append((state, hist))
    a, b = runs
    assert a[1].losses == b[1].losses
    for k in a[0].params:
        assert np.array_equal(a[0].params[k], b[0].params[k])


def test_different_seed_differs(store):
    cfg = small_config(store)
    train_ids, _ = split_by_subject(store, 0.5, seed=0)
    _, h1 = train_detector(cfg, store, train_ids, TrainSettings(steps=10, seed=1))
    _, h2 = train_detector(cfg, store, train_ids, TrainSettings(steps=10, seed=2))
    assert h1.losses != h2.losses


def test_augmented_training_runs(store):
    cfg = small_config(store)
    train_ids, _ = split_by_subject(store, 0.5, seed=0)
    state, hist = train_detector(cfg, store, train_ids,
                                 TrainSettings(steps=8, seed=3, augment=True))
    assert len(hist.losses) == 8
    assert all(np.isfinite(hist.losses))


def test_early_stop_on_target(store):
    cfg = small_config(store)
    train_ids, eval_ids = split_by_subject(store, 0.5, seed=0)
    settings = TrainSettings(steps=50, seed=4, eval_every=10, target_precision=0.0)
    state, hist = train_detector(cfg, store, train_ids, settings, eval_ids=eval_ids)
    assert hist.stopped_early
    assert state.step == 10
    assert hist.eval_points[0][0] == 10


def test_empty_training_set_rejected(store):
    cfg = small_config(store)
    with pytest.raises(ValueError):
        train_detector(cfg, store, [], TrainSettings(steps=1))


def test_warmup_ramps_learning_rate(store):
    # step 1 with warmup uses lr/warmup_steps: with lr=0 equivalently no-op
    cfg = small_config(store)
    train_ids, _ = split_by_subject(store, 0.5, seed=0)
    s1, _ = train_detector(cfg, store, train_ids,
                           TrainSettings(steps=1, seed=5, lr=0.0, warmup_steps=4))
    base = M.init_params(cfg, seed=5)
    for k, v in s1.params.items():
        assert np.array_equal(v, base[k])
