"""Axis-aligned box representation and overlap measures.

Boxes are kept in MOT ``(left, top, width, height)`` order with continuous
coordinates. Origin is the image top-left corner, y grows downward.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np


class BBox(NamedTuple):
    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return self.left + self.width / 2.0, self.top + self.height / 2.0

    def is_valid(self) -> bool:
        return self.width > 0 and self.height > 0

    def to_xyah(self) -> np.ndarray:
        """Center x, center y, aspect ratio (w/h), height."""
        cx, cy = self.center
        return np.array([cx, cy, self.width / self.height, self.height])

    def to_tlbr(self) -> np.ndarray:
        return np.array([self.left, self.top, self.right, self.bottom])

    @classmethod
    def from_xyah(cls, xyah: Sequence[float]) -> "BBox":
        cx, cy, a, h = (float(v) for v in xyah[:4])
        w = a * h
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.left + dx, self.top + dy, self.width, self.height)


def check_box(box: BBox) -> None:
    if not (box.width > 0 and box.height > 0):
        raise ValueError(f"degenerate box {tuple(box)}: width and height must be positive")


def _inter_union(a: BBox, b: BBox) -> tuple[float, float]:
    check_box(a)
    check_box(b)
    iw = max(0.0, min(a.right, b.right) - max(a.left, b.left))
    ih = max(0.0, min(a.bottom, b.bottom) - max(a.top, b.top))
    inter = iw * ih
    return inter, a.area + b.area - inter


def iou(a: BBox, b: BBox) -> float:
    inter, union = _inter_union(a, b)
    # right - left can round away from width; keep the ratio in range
    return min(inter / union, 1.0)


def giou(a: BBox, b: BBox) -> float:
    """IoU minus the fraction of the enclosing box not covered by the union."""
    inter, union = _inter_union(a, b)
    cw = max(a.right, b.right) - min(a.left, b.left)
    ch = max(a.bottom, b.bottom) - min(a.top, b.top)
    enclosing = cw * ch
    return min(inter / union, 1.0) - max(enclosing - union, 0.0) / enclosing


def boxes_to_array(boxes: Sequence[BBox]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4))
    return np.asarray(boxes, dtype=float).reshape(-1, 4)


def iou_matrix(a: Sequence[BBox] | np.ndarray, b: Sequence[BBox] | np.ndarray,
               generalized: bool = False) -> np.ndarray:
    """Pairwise IoU (or GIoU) between two box lists in tlwh form.

    Vectorized counterpart of :func:`iou` / :func:`giou`; no validity check,
    callers are expected to hand over valid boxes.
    """
    a = boxes_to_array(a) if not isinstance(a, np.ndarray) else a.reshape(-1, 4)
    b = boxes_to_array(b) if not isinstance(b, np.ndarray) else b.reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    al, at = a[:, 0:1], a[:, 1:2]
    ar, ab = al + a[:, 2:3], at + a[:, 3:4]
    bl, bt = b[None, :, 0], b[None, :, 1]
    br, bb = bl + b[None, :, 2], bt + b[None, :, 3]
    iw = np.clip(np.minimum(ar, br) - np.maximum(al, bl), 0.0, None)
    ih = np.clip(np.minimum(ab, bb) - np.maximum(at, bt), 0.0, None)
    inter = iw * ih
    union = (a[:, 2:3] * a[:, 3:4]) + (b[None, :, 2] * b[None, :, 3]) - inter
    out = np.minimum(inter / union, 1.0)
    if generalized:
        cw = np.maximum(ar, br) - np.minimum(al, bl)
        ch = np.maximum(ab, bb) - np.minimum(at, bt)
        enclosing = cw * ch
        out = out - np.clip(enclosing - union, 0.0, None) / enclosing
    return out
