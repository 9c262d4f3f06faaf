"""Pedestrian detection post-processing, DeepSORT-style tracking with depth and
pose cues, and CLEAR-MOT / IDF1 evaluation over MOT17-format sequences."""

__version__ = "0.1.0"

from .geometry import BBox, giou, iou
from .detpre import DetPreConfig, Detection, filter_confidence, soft_nms
from .motion import KalmanBoxFilter, KalmanState, MotionConfig
from .assoc import AssocConfig, solve_assignment
from .tracker import Tracker, TrackerConfig, run_sequence
from .metrics import EvalConfig, EvalReport, evaluate_sequence
from .synth import SynthConfig, generate

__all__ = [
    "BBox", "iou", "giou", "Detection", "DetPreConfig", "filter_confidence", "soft_nms",
    "KalmanBoxFilter", "KalmanState", "MotionConfig", "AssocConfig", "solve_assignment",
    "Tracker", "TrackerConfig", "run_sequence", "EvalConfig", "EvalReport", "evaluate_sequence",
    "SynthConfig", "generate",
]
