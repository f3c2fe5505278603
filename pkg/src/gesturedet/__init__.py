"""Desk-scale egocentric gesture detection pipeline.

Subpackages cover the full loop: geometry (boxes/anchors/offsets), trajectory
(target-box sweeps and session plans), dataset (auto-labeled frame store and
statistics), augment (reproducible training perturbations), nn/model (the
depthwise-separable multibox detector and its training), bench (precision and
single-core latency reports), capture (the label-as-you-go service), and
synth (a glyph stand-in for human capture).
"""

from .geometry import (Anchor, AnchorConfig, BBox, BoxOffsets, FeatureMapSpec,
                       decode, encode, generate_anchors, iou, match_anchors)
from .labels import CLASS_LABELS, CLASS_NAMES, ClassLabel, GestureClass, Hand
from .trajectory import (SequenceSpec, SessionPlan, TrajectoryConfig, coverage,
                         plan_session, target_at)
from .dataset import DatasetStore, FrameRecord, compute_stats, split_by_subject
from .augment import AugmentParams, SplitMix64, augment_sample
from .model import (Detection, ModelConfig, forward, full_config, micro_config,
                    predict, train_step)

__version__ = "0.1.0"
