"""Detection-to-track costs and optimal assignment (matching cascade)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detpre import Detection
from .geometry import BBox, iou_matrix
from .motion import KalmanBoxFilter, KalmanState

INFEASIBLE = 1e5


@dataclass
class AssocConfig:
    max_iou_distance: float = 0.7
    appearance_threshold: float = 0.2
    depth_weight: float = 0.0
    depth_gate: float = 0.2
    depth_ema_alpha: float = 0.3
    pose_visibility_min: float = 0.3
    keypoint_conf_min: float = 0.5
    use_giou: bool = False

    def validate(self) -> list[str]:
        errors = []
        if not 0.0 < self.max_iou_distance <= 1.0:
            errors.append("max_iou_distance must be in (0, 1]")
        if self.depth_weight < 0:
            errors.append("depth_weight must be >= 0")
        if not 0.0 < self.depth_ema_alpha <= 1.0:
            errors.append("depth_ema_alpha must be in (0, 1]")
        return errors


class TrackLike(Protocol):
    state: KalmanState
    time_since_update: int
    depth_ema: Optional[float]

    def is_confirmed(self) -> bool: ...

    def gallery_matrix(self) -> np.ndarray: ...


def cosine_distance(gallery: Sequence[np.ndarray] | np.ndarray, query: np.ndarray) -> float:
    """Smallest cosine distance between ``query`` and any gallery vector."""
    g = np.asarray(gallery, dtype=float)
    if g.size == 0:
        return INFEASIBLE
    g = g.reshape(-1, np.asarray(query).shape[-1])
    return float(np.min(1.0 - g @ np.asarray(query, dtype=float)))


def iou_cost(track_boxes: Sequence[BBox], det_boxes: Sequence[BBox], use_giou: bool = False,
             max_iou_distance: float = 0.7) -> np.ndarray:
    if use_giou:
        cost = (1.0 - iou_matrix(track_boxes, det_boxes, generalized=True)) / 2.0
    else:
        cost = 1.0 - iou_matrix(track_boxes, det_boxes)
    cost[cost > max_iou_distance] = INFEASIBLE
    return cost


def depth_cost_term(track_depth: Optional[float], det_depth: Optional[float],
                    depth_weight: float, depth_gate: float) -> float:
    if track_depth is None or det_depth is None:
        return 0.0
    delta = abs(track_depth - det_depth)
    if delta > depth_gate:
        return INFEASIBLE
    return depth_weight * delta


def pose_visibility(keypoints: Optional[np.ndarray], conf_min: float = 0.5) -> float:
    """Fraction of the 17 keypoints detected with confidence >= ``conf_min``."""
    if keypoints is None:
        return 1.0
    kp = np.asarray(keypoints, dtype=float)
    if kp.shape[0] != 17:
        raise ValueError(f"expected 17 keypoints, got {kp.shape[0]}")
    return float(np.count_nonzero(kp[:, 2] >= conf_min)) / 17.0


def linear_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw minimum-cost one-to-one assignment over a (possibly rectangular) matrix."""
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return linear_sum_assignment(cost)


def solve_assignment(cost: np.ndarray) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Optimal assignment with sentinel pairs dropped.

    Returns ``(matches, unmatched_rows, unmatched_cols)``.
    """
    cost = np.asarray(cost, dtype=float)
    n_rows, n_cols = cost.shape if cost.ndim == 2 else (0, 0)
    rows, cols = linear_assignment(cost)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] < INFEASIBLE]
    matched_r = {r for r, _ in matches}
    matched_c = {c for _, c in matches}
    return (matches,
            [r for r in range(n_rows) if r not in matched_r],
            [c for c in range(n_cols) if c not in matched_c])


def appearance_cost(tracks: Sequence[TrackLike], dets: Sequence[Detection],
                    kf: KalmanBoxFilter, cfg: AssocConfig) -> np.ndarray:
    """Gated appearance (+ depth) cost for the cascade rounds."""
    cost = np.full((len(tracks), len(dets)), INFEASIBLE)
    if not len(tracks) or not len(dets):
        return cost
    det_boxes = [d.bbox for d in dets]
    # embeddings of heavily occluded detections describe the occluder, not the target
    has_emb = np.array([d.embedding is not None
                        and pose_visibility(d.keypoints, cfg.keypoint_conf_min) >= cfg.pose_visibility_min
                        for d in dets])
    if has_emb.any():
        dim = next(d.embedding for d in dets if d.embedding is not None).shape[0]
        feats = np.stack([d.embedding if d.embedding is not None else np.zeros(dim) for d in dets])
    gate = kf.gate_threshold()
    depth_on = cfg.depth_weight > 0
    for i, trk in enumerate(tracks):
        gallery = trk.gallery_matrix()
        if gallery.size == 0 or not has_emb.any():
            continue
        row = np.min(1.0 - gallery @ feats.T, axis=0)
        row[~has_emb] = INFEASIBLE
        row[row > cfg.appearance_threshold] = INFEASIBLE
        if depth_on:
            for j, det in enumerate(dets):
                if row[j] < INFEASIBLE:
                    term = depth_cost_term(trk.depth_ema, det.rel_depth, cfg.depth_weight, cfg.depth_gate)
                    row[j] = INFEASIBLE if term >= INFEASIBLE else row[j] + term
        dist = kf.gating_distance(trk.state, det_boxes)
        row[dist > gate] = INFEASIBLE
        cost[i] = row
    return cost


def _min_cost_matching(cost: np.ndarray, track_idx: list[int], det_idx: list[int]):
    matches, um_r, um_c = solve_assignment(cost)
    return ([(track_idx[r], det_idx[c]) for r, c in matches],
            [track_idx[r] for r in um_r],
            [det_idx[c] for c in um_c])


def matching_cascade(tracks: Sequence[TrackLike], dets: Sequence[Detection], kf: KalmanBoxFilter,
                     cfg: AssocConfig, max_age: int):
    """Associate predicted tracks with this frame's detections.

    Confirmed tracks are matched by appearance in order of increasing
    ``time_since_update`` so recently seen tracks win contested detections.
    Unconfirmed tracks and age-1 leftovers then get an IoU round.

    Returns ``(matches, unmatched_track_indices, unmatched_detection_indices)``.
    """
    confirmed = [i for i, t in enumerate(tracks) if t.is_confirmed()]
    unconfirmed = [i for i, t in enumerate(tracks) if not t.is_confirmed()]

    full_cost = appearance_cost([tracks[i] for i in confirmed], dets, kf, cfg)
    row_of = {t: r for r, t in enumerate(confirmed)}

    unmatched_dets = list(range(len(dets)))
    matches: list[tuple[int, int]] = []
    for level in range(1, max_age + 1):
        if not unmatched_dets:
            break
        level_tracks = [i for i in confirmed if tracks[i].time_since_update == level]
        if not level_tracks:
            continue
        sub = full_cost[np.ix_([row_of[i] for i in level_tracks], unmatched_dets)]
        m, _, unmatched_dets = _min_cost_matching(sub, level_tracks, unmatched_dets)
        matches.extend(m)
    matched_tracks = {t for t, _ in matches}
    leftover = [i for i in confirmed if i not in matched_tracks]

    iou_tracks = unconfirmed + [i for i in leftover if tracks[i].time_since_update == 1]
    stale = [i for i in leftover if tracks[i].time_since_update != 1]
    if iou_tracks and unmatched_dets:
        cost = iou_cost([tracks[i].state.to_bbox() for i in iou_tracks],
                        [dets[j].bbox for j in unmatched_dets], cfg.use_giou, cfg.max_iou_distance)
        m, um_t, unmatched_dets = _min_cost_matching(cost, iou_tracks, unmatched_dets)
        matches.extend(m)
    else:
        um_t = iou_tracks
    unmatched_tracks = sorted(stale + um_t)
    return matches, unmatched_tracks, unmatched_dets
