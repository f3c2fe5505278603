"""Gesture/hand vocabulary and the fixed 9-way class-label ordering.

Index 0 is the background ("None") class; the remaining eight are the four
gestures multiplexed with the left/right hand, gesture-major. Everything that
touches logits, confusion matrices, or dataset files goes through this table.
"""

from __future__ import annotations

from enum import Enum
from typing import Optional, Tuple


class GestureClass(Enum):
    THUMBS_PRESS = "ThumbsPress"
    THUMBS_UP = "ThumbsUp"
    THUMBS_DOWN = "ThumbsDown"
    PEACE = "Peace"


class Hand(Enum):
    LEFT = "Left"
    RIGHT = "Right"


#: None, or a (gesture, hand) pair; exactly 9 distinct values.
ClassLabel = Optional[Tuple[GestureClass, Hand]]

CLASS_LABELS: tuple[ClassLabel, ...] = (None,) + tuple(
    (g, h) for g in GestureClass for h in Hand)

NUM_CLASSES = len(CLASS_LABELS)  # 9

_INDEX = {label: i for i, label in enumerate(CLASS_LABELS)}


def label_index(label: ClassLabel) -> int:
    return _INDEX[label]


def label_from_index(i: int) -> ClassLabel:
    return CLASS_LABELS[i]


def label_name(label: ClassLabel) -> str:
    if label is None:
        return "None"
    g, h = label
    return f"{g.value}_{h.value}"


def label_from_name(name: str) -> ClassLabel:
    if name == "None":
        return None
    g, h = name.rsplit("_", 1)
    return (GestureClass(g), Hand(h))


CLASS_NAMES: tuple[str, ...] = tuple(label_name(c) for c in CLASS_LABELS)
