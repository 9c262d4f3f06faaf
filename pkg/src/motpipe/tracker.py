"""Track lifecycle management and per-sequence tracking driver."""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .assoc import AssocConfig, matching_cascade, pose_visibility
from .detpre import ConfidenceEMA, DetPreConfig, Detection, preprocess_frame
from .geometry import BBox
from .motion import KalmanBoxFilter, KalmanState, MotionConfig

log = logging.getLogger(__name__)


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class TrackerConfig:
    detpre: DetPreConfig = field(default_factory=DetPreConfig)
    assoc: AssocConfig = field(default_factory=AssocConfig)
    motion: MotionConfig = field(default_factory=MotionConfig)
    n_init: int = 3
    max_age: int = 50
    nn_budget: int = 150
    output_smoothing: bool = True

    def validate(self) -> list[str]:
        errors = self.detpre.validate() + self.assoc.validate() + self.motion.validate()
        for name in ("n_init", "max_age", "nn_budget"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        return errors


@dataclass
class Track:
    serial: int
    state: KalmanState
    nn_budget: int
    status: TrackStatus = TrackStatus.TENTATIVE
    track_id: int = 0  # assigned on confirmation
    hits: int = 1
    age: int = 1
    time_since_update: int = 0
    depth_ema: Optional[float] = None
    last_visibility: float = 1.0
    last_detection: Optional[Detection] = None
    gallery: deque = field(init=False)

    def __post_init__(self) -> None:
        self.gallery = deque(maxlen=self.nn_budget)

    def is_confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    def is_deleted(self) -> bool:
        return self.status is TrackStatus.DELETED

    def gallery_matrix(self) -> np.ndarray:
        if not self.gallery:
            return np.zeros((0, 0))
        return np.stack(self.gallery)


class Tracker:
    """Online multi-pedestrian tracker for one sequence.

    Call :meth:`step` once per frame in increasing frame order. Each call
    returns ``(track_id, box, confidence)`` for confirmed tracks that were
    matched in that frame.
    """

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.kf = KalmanBoxFilter(self.cfg.motion)
        self.tracks: list[Track] = []
        self.ema = ConfidenceEMA(self.cfg.detpre.adaptive_ema_alpha)
        self.last_frame = 0
        self._next_serial = 1
        self._next_id = 1

    def step(self, frame_dets: Sequence[Detection], frame: int | None = None):
        if frame is None:
            frame = frame_dets[0].frame if frame_dets else self.last_frame + 1
        if frame <= self.last_frame:
            raise ValueError(f"frame {frame} presented after frame {self.last_frame}")
        self.last_frame = frame
        cfg = self.cfg

        for trk in self.tracks:
            trk.state = self.kf.predict(trk.state)
            trk.age += 1
            trk.time_since_update += 1

        dets = preprocess_frame([d for d in frame_dets if d.category == 1], cfg.detpre, self.ema)
        matches, unmatched_tracks, unmatched_dets = matching_cascade(
            self.tracks, dets, self.kf, cfg.assoc, cfg.max_age)

        for ti, di in matches:
            self._update_track(self.tracks[ti], dets[di])
        for ti in unmatched_tracks:
            self._mark_missed(self.tracks[ti])
        for di in unmatched_dets:
            self._spawn(dets[di])
        self.tracks = [t for t in self.tracks if not t.is_deleted()]

        out = []
        for trk in self.tracks:
            if not trk.is_confirmed() or trk.time_since_update != 0:
                continue
            det = trk.last_detection
            box = trk.state.to_bbox() if cfg.output_smoothing else det.bbox
            out.append((trk.track_id, box, det.confidence))
        out.sort(key=lambda r: r[0])
        return out

    def _absorb_cues(self, trk: Track, det: Detection) -> None:
        a = self.cfg.assoc
        trk.last_detection = det
        trk.last_visibility = pose_visibility(det.keypoints, a.keypoint_conf_min)
        if det.embedding is not None and trk.last_visibility >= a.pose_visibility_min:
            trk.gallery.append(np.asarray(det.embedding, dtype=float))
        if det.rel_depth is not None:
            if trk.depth_ema is None:
                trk.depth_ema = float(det.rel_depth)
            else:
                trk.depth_ema = (1 - a.depth_ema_alpha) * trk.depth_ema + a.depth_ema_alpha * det.rel_depth

    def _update_track(self, trk: Track, det: Detection) -> None:
        trk.state = self.kf.update(trk.state, det.bbox)
        trk.hits += 1
        trk.time_since_update = 0
        self._absorb_cues(trk, det)
        if trk.status is TrackStatus.TENTATIVE and trk.hits >= self.cfg.n_init:
            self._confirm(trk)

    def _confirm(self, trk: Track) -> None:
        trk.status = TrackStatus.CONFIRMED
        trk.track_id = self._next_id
        self._next_id += 1

    def _mark_missed(self, trk: Track) -> None:
        if trk.status is TrackStatus.TENTATIVE or trk.time_since_update > self.cfg.max_age:
            trk.status = TrackStatus.DELETED

    def _spawn(self, det: Detection) -> None:
        trk = Track(self._next_serial, self.kf.initiate(det.bbox), self.cfg.nn_budget)
        self._next_serial += 1
        self._absorb_cues(trk, det)
        if self.cfg.n_init <= 1:
            self._confirm(trk)
        self.tracks.append(trk)


def run_sequence(dets_by_frame: Mapping[int, Sequence[Detection]], meta=None,
                 cfg: TrackerConfig | None = None) -> list[tuple[int, int, BBox, float]]:
    """Track a whole sequence; returns ``(frame, id, box, conf)`` rows sorted by (frame, id)."""
    tracker = Tracker(cfg)
    last_det_frame = max(dets_by_frame, default=0)
    n_frames = last_det_frame
    if meta is not None:
        if last_det_frame > meta.seq_length:
            log.warning("detections reach frame %d but seqLength is %d", last_det_frame, meta.seq_length)
        n_frames = max(meta.seq_length, last_det_frame)
    rows = []
    for frame in range(1, n_frames + 1):
        for tid, box, conf in tracker.step(dets_by_frame.get(frame, []), frame):
            rows.append((frame, tid, box, conf))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows
