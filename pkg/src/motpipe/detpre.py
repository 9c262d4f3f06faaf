"""Per-frame detection post-processing: confidence gating and Soft-NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import BBox, iou_matrix

NUM_KEYPOINTS = 17
ADAPTIVE_REFERENCE_CONF = 0.8


@dataclass
class Detection:
    """One candidate pedestrian in one frame."""

    frame: int
    bbox: BBox
    confidence: float
    category: int = 1
    embedding: Optional[np.ndarray] = None
    rel_depth: Optional[float] = None
    keypoints: Optional[np.ndarray] = None  # (17, 3): x, y, conf

    def __post_init__(self) -> None:
        if self.keypoints is not None:
            self.keypoints = np.asarray(self.keypoints, dtype=float)
            if self.keypoints.shape != (NUM_KEYPOINTS, 3):
                raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got shape {self.keypoints.shape}")


@dataclass
class DetPreConfig:
    base_threshold: float = 0.6
    softnms_sigma: float = 0.5
    softnms_min_score: float = 0.05
    adaptive_enabled: bool = True
    adaptive_floor: float = 0.4
    adaptive_ceiling: float = 0.7
    adaptive_ema_alpha: float = 0.1

    def validate(self) -> list[str]:
        errors = []
        if not self.adaptive_floor <= self.base_threshold <= self.adaptive_ceiling:
            errors.append("adaptive_floor <= base_threshold <= adaptive_ceiling violated")
        if not 0.0 < self.adaptive_ema_alpha <= 1.0:
            errors.append("adaptive_ema_alpha must be in (0, 1]")
        if self.softnms_sigma <= 0:
            errors.append("softnms_sigma must be positive")
        if not 0.0 <= self.softnms_min_score <= 1.0:
            errors.append("softnms_min_score must be in [0, 1]")
        return errors


def filter_confidence(dets: Sequence[Detection], threshold: float) -> list[Detection]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    return [d for d in dets if d.confidence >= threshold]


def soft_nms(dets: Sequence[Detection], sigma: float = 0.5,
             min_score: float = 0.05) -> list[Detection]:
    """Gaussian Soft-NMS.

    Repeatedly picks the best remaining detection and decays every other
    remaining score by ``exp(-iou**2 / sigma)`` against it. Detections whose
    decayed score drops below ``min_score`` are discarded. The survivors are
    returned as copies carrying the decayed confidence, sorted by score
    descending (ties: lower input index first).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = len(dets)
    if n == 0:
        return []
    boxes = np.array([tuple(d.bbox) for d in dets], dtype=float)
    scores = np.array([d.confidence for d in dets], dtype=float)
    overlaps = iou_matrix(boxes, boxes)
    remaining = list(range(n))
    kept: list[tuple[int, float]] = []
    while remaining:
        rem = np.array(remaining)
        # argmax returns the first maximum, and ``remaining`` stays index-sorted
        best = int(rem[np.argmax(scores[rem])])
        kept.append((best, float(scores[best])))
        remaining.remove(best)
        if not remaining:
            break
        rem = np.array(remaining)
        ov = overlaps[best, rem]
        scores[rem] = scores[rem] * np.exp(-(ov * ov) / sigma)
        remaining = [int(i) for i in rem[scores[rem] >= min_score]]
    kept = [(i, s) for i, s in kept if s >= min_score]
    kept.sort(key=lambda t: (-t[1], t[0]))
    return [replace(dets[i], confidence=s) for i, s in kept]


def hard_nms(dets: Sequence[Detection], iou_threshold: float = 0.0) -> list[Detection]:
    """Greedy NMS dropping anything overlapping a kept box by more than ``iou_threshold``."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    kept: list[int] = []
    if not order:
        return []
    overlaps = iou_matrix([d.bbox for d in dets], [d.bbox for d in dets])
    for i in order:
        if all(overlaps[i, k] <= iou_threshold for k in kept):
            kept.append(i)
    return [dets[i] for i in kept]


def adaptive_threshold(ema_mean_conf: float, cfg: DetPreConfig) -> float:
    if not cfg.adaptive_enabled:
        return cfg.base_threshold
    raw = cfg.base_threshold * ema_mean_conf / ADAPTIVE_REFERENCE_CONF
    return min(max(raw, cfg.adaptive_floor), cfg.adaptive_ceiling)


class ConfidenceEMA:
    """Exponential moving average of per-frame mean raw detector confidence."""

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.value: float | None = None

    def observe(self, dets: Sequence[Detection]) -> float | None:
        if dets:
            mean = math.fsum(d.confidence for d in dets) / len(dets)
            mean = min(max(mean, 0.0), 1.0)
            if self.value is None:
                self.value = mean
            else:
                self.value = (1.0 - self.alpha) * self.value + self.alpha * mean
        return self.value


def preprocess_frame(dets: Sequence[Detection], cfg: DetPreConfig,
                     ema: ConfidenceEMA) -> list[Detection]:
    """Adaptive threshold, confidence filter, then Soft-NMS."""
    level = ema.observe(dets)
    threshold = adaptive_threshold(level, cfg) if level is not None else cfg.base_threshold
    kept = filter_confidence(dets, threshold)
    return soft_nms(kept, cfg.softnms_sigma, cfg.softnms_min_score)
