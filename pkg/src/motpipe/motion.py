"""Constant-velocity Kalman filter over (cx, cy, aspect, height) box state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import BBox, check_box

# 0.95 quantile of the chi-square distribution, keyed by degrees of freedom.
CHI2_95 = {1: 3.8415, 2: 5.9915, 3: 7.8147, 4: 9.4877}

MIN_SHAPE = 1e-2


class FilterNumericsError(ArithmeticError):
    """Innovation covariance is not positive definite."""


@dataclass
class MotionConfig:
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    aspect_std: float = 1e-2
    aspect_velocity_std: float = 1e-5
    aspect_measurement_std: float = 1e-1
    gate_position_only: bool = False

    def validate(self) -> list[str]:
        errors = []
        for name in ("std_weight_position", "std_weight_velocity", "aspect_std",
                     "aspect_velocity_std", "aspect_measurement_std"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        return errors


@dataclass
class KalmanState:
    mean: np.ndarray        # (8,)
    covariance: np.ndarray  # (8, 8)

    def to_bbox(self) -> BBox:
        cx, cy, a, h = self.mean[:4]
        return BBox.from_xyah((cx, cy, max(a, MIN_SHAPE), max(h, MIN_SHAPE)))

    def copy(self) -> "KalmanState":
        return KalmanState(self.mean.copy(), self.covariance.copy())


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


class KalmanBoxFilter:
    """Box motion model with noise scaled by the current box height.

    All methods are pure: they return new states and never mutate inputs.
    """

    ndim = 4

    def __init__(self, cfg: MotionConfig | None = None):
        self.cfg = cfg or MotionConfig()
        self._motion_mat = np.eye(8)
        for i in range(4):
            self._motion_mat[i, 4 + i] = 1.0  # dt = 1 frame
        self._update_mat = np.eye(4, 8)

    def initiate(self, measurement: BBox) -> KalmanState:
        check_box(measurement)
        c = self.cfg
        z = measurement.to_xyah()
        h = z[3]
        mean = np.r_[z, np.zeros(4)]
        std = [
            2 * c.std_weight_position * h,
            2 * c.std_weight_position * h,
            c.aspect_std,
            2 * c.std_weight_position * h,
            10 * c.std_weight_velocity * h,
            10 * c.std_weight_velocity * h,
            c.aspect_velocity_std,
            10 * c.std_weight_velocity * h,
        ]
        return KalmanState(mean, np.diag(np.square(std)))

    def _process_noise(self, h: float) -> np.ndarray:
        c = self.cfg
        std = [
            c.std_weight_position * h, c.std_weight_position * h, c.aspect_std, c.std_weight_position * h,
            c.std_weight_velocity * h, c.std_weight_velocity * h, c.aspect_velocity_std,
            c.std_weight_velocity * h,
        ]
        return np.diag(np.square(std))

    def _measurement_noise(self, h: float) -> np.ndarray:
        c = self.cfg
        std = [c.std_weight_position * h, c.std_weight_position * h,
               c.aspect_measurement_std, c.std_weight_position * h]
        return np.diag(np.square(std))

    def predict(self, state: KalmanState) -> KalmanState:
        F = self._motion_mat
        mean = F @ state.mean
        cov = F @ state.covariance @ F.T + self._process_noise(state.mean[3])
        return KalmanState(mean, _symmetrize(cov))

    def project(self, state: KalmanState) -> tuple[np.ndarray, np.ndarray]:
        """Measurement-space mean and innovation covariance."""
        H = self._update_mat
        mean = H @ state.mean
        cov = H @ state.covariance @ H.T + self._measurement_noise(state.mean[3])
        return mean, _symmetrize(cov)

    def _cho(self, s: np.ndarray):
        try:
            return scipy.linalg.cho_factor(s, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise FilterNumericsError("innovation covariance is not positive definite") from exc

    def update(self, state: KalmanState, measurement: BBox) -> KalmanState:
        check_box(measurement)
        H = self._update_mat
        proj_mean, s = self.project(state)
        cho = self._cho(s)
        pht = state.covariance @ H.T
        gain = scipy.linalg.cho_solve(cho, pht.T).T
        innovation = measurement.to_xyah() - proj_mean
        mean = state.mean + gain @ innovation
        # Joseph form keeps the posterior PD under round-off.
        ikh = np.eye(8) - gain @ H
        r = self._measurement_noise(state.mean[3])
        cov = ikh @ state.covariance @ ikh.T + gain @ r @ gain.T
        mean[2] = max(mean[2], MIN_SHAPE)
        mean[3] = max(mean[3], MIN_SHAPE)
        return KalmanState(mean, _symmetrize(cov))

    def gating_distance(self, state: KalmanState, measurements, position_only: bool | None = None) -> np.ndarray:
        """Squared Mahalanobis distance of one or more boxes from the projected state.

        ``measurements`` may be a single BBox or a sequence of them; the
        return value is a scalar array for a single box.
        """
        if position_only is None:
            position_only = self.cfg.gate_position_only
        single = isinstance(measurements, BBox)
        boxes = [measurements] if single else list(measurements)
        if not boxes:
            return np.zeros(0)
        z = np.array([b.to_xyah() for b in boxes])
        mean, cov = self.project(state)
        if position_only:
            mean, cov, z = mean[:2], cov[:2, :2], z[:, :2]
        cho = self._cho(cov)
        d = z - mean
        solved = scipy.linalg.solve_triangular(cho[0], d.T, lower=True, check_finite=False)
        dist = np.sum(solved * solved, axis=0)
        return dist[0] if single else dist

    def gate_threshold(self, position_only: bool | None = None) -> float:
        if position_only is None:
            position_only = self.cfg.gate_position_only
        return CHI2_95[2 if position_only else 4]
