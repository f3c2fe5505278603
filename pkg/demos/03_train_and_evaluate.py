"""Train the detector on a small synthetic dataset and evaluate it.

A compressed version of the full loop: synth data -> subject-disjoint split
-> train the micro-profile model -> top-1 precision, confusion matrix, and a
single-frame prediction, with a checkpoint save/load roundtrip.

Takes a couple of minutes on one CPU core.
"""

import tempfile
from pathlib import Path

import numpy as np

from gesturedet import model as M
from gesturedet.bench import evaluate
from gesturedet.dataset import split_by_subject
from gesturedet.labels import CLASS_NAMES, label_name
from gesturedet.synth import synth_dataset
from gesturedet.train import TrainSettings, train_detector

root = Path(tempfile.mkdtemp(prefix="gesturedet-demo-"))
store = synth_dataset(root / "ds", n_subjects=3, frames_per_sequence=20, seed=7,
                      width=64, height=48)
train_ids, eval_ids = split_by_subject(store, eval_fraction=1 / 3, seed=0)
print(f"{len(store)} frames; {len(train_ids)} train / {len(eval_ids)} eval")

config = M.micro_config(width=64, height=48, alpha=0.5)
print(f"micro profile, depth multiplier 0.5: {config.count_params():,} params, "
      f"{config.count_macs() / 1e6:.1f}M MACs/frame, {config.num_anchors} anchors")

settings = TrainSettings(steps=1500, batch_size=32, lr=0.05, seed=1,
                         augment=False, eval_every=250, target_precision=0.92)
state, history = train_detector(config, store, train_ids, settings,
                                eval_ids=eval_ids, log=print)

report = evaluate(config, state.params, store, eval_ids)
print(f"\neval precision {report.precision:.4f} over {report.frames} frames; "
      f"mean IoU on correct labels {report.mean_iou_correct:.3f}")
print("confusion (true rows x predicted cols, class indices 0..8):")
for i, row in enumerate(report.confusion):
    print(f"  {i} {CLASS_NAMES[i]:<18} {row.tolist()}")

ckpt = root / "detector.gdw"
M.save_weights(ckpt, state.params)
params = M.load_weights_for(config, ckpt)
rec = store.read(eval_ids[0])
det = M.predict(config, params, rec.image)
print(f"\ncheckpoint {ckpt.name}: {ckpt.stat().st_size:,} bytes")
print(f"sample frame {rec.frame_id}: true {label_name(rec.label)}, "
      f"predicted {label_name(det.label)} (confidence {det.confidence:.2f}) "
      f"box ({det.bbox.cx:.2f}, {det.bbox.cy:.2f}, {det.bbox.w:.2f}, {det.bbox.h:.2f})")
