"""
Extended Kalman filter over the 3-D emitter position.

Random-walk prediction (mean held, covariance grows linearly in elapsed
time) and sequential correction from camera pixels and ultrasonic planar
estimates, processed one at a time in timestamp order.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import logging
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import CameraCalibration, project_point, projection_jacobian
from .ultrasonic import sonar_measurement_fn, sonar_measurement_jacobian

log = logging.getLogger(__name__)

CAMERA = "camera"
ULTRASONIC = "ultrasonic"
# ties at equal stamps: ultrasonic first
KIND_ORDER = {ULTRASONIC: 0, CAMERA: 1}

CAMERA_NOISE_CONSTANT = 0.002


class TimeRegressionError(ValueError):
    pass


class SingularInnovationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TargetState3D:
    x: np.ndarray
    p: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(3))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3, 3))


@dataclass(frozen=True)
class MotionNoise:
    rate: np.ndarray = field(default_factory=lambda: 0.25 * np.eye(3))  # m^2/s

    def __post_init__(self):
        R = np.asarray(self.rate, dtype=float).reshape(3, 3)
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("motion noise rate must be symmetric positive definite")
        object.__setattr__(self, "rate", R)


@dataclass(frozen=True)
class Measurement:
    stamp: float
    kind: str
    value: np.ndarray
    noise: np.ndarray
    pce: float | None = None

    def __post_init__(self):
        if self.kind not in KIND_ORDER:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float).reshape(2))
        Q = np.asarray(self.noise, dtype=float).reshape(2, 2)
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() <= 0:
            raise ValueError("measurement noise must be symmetric positive definite")
        object.__setattr__(self, "noise", Q)
        if self.kind == CAMERA and not (self.pce is not None and 0 < self.pce <= 1):
            raise ValueError("camera measurements carry a PCE in (0, 1]")

    def sort_key(self):
        # value breaks exact duplicates so any input order sorts identically
        return (self.stamp, KIND_ORDER[self.kind], tuple(self.value))


@dataclass(frozen=True)
class UpdateRecord:
    stamp: float
    kind: str
    innovation: np.ndarray
    x: np.ndarray
    p_diag: np.ndarray


def predict(state: TargetState3D, noise: MotionNoise, t_k: float) -> TargetState3D:
    dt = t_k - state.stamp
    if dt < 0:
        raise TimeRegressionError(f"cannot predict backwards from {state.stamp} to {t_k}")
    if dt == 0:
        return state
    # G = I for the random walk
    return TargetState3D(state.x.copy(), state.p + noise.rate * dt, t_k)


def camera_noise_from_pce(pce: float) -> np.ndarray:
    """Camera measurement covariance in normalised image units (pixels / width)^2."""
    if not pce > 0:
        raise ValueError("PCE must be positive")
    return np.eye(2) * CAMERA_NOISE_CONSTANT / pce


def camera_jacobian(x, cal: CameraCalibration) -> np.ndarray:
    return projection_jacobian(x, cal)


def kalman_correct(x, P, z, hx, H, Q):
    """
    One EKF correction in the textbook form, any dimension.

    Returns (x', P', innovation). P' is re-symmetrised.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    innov = np.atleast_1d(np.asarray(z, dtype=float) - np.asarray(hx, dtype=float))
    S = H @ P @ H.T + Q
    try:
        if np.linalg.cond(S) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        K = np.linalg.solve(S.T, (P @ H.T).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc
    x_new = x + K @ innov
    P_new = (np.eye(len(x)) - K @ H) @ P
    return x_new, 0.5 * (P_new + P_new.T), innov


def measurement_model(x, kind: str, cal: CameraCalibration | None):
    if kind == CAMERA:
        if cal is None:
            raise ValueError("camera updates need a calibration")
        return project_point(x, cal), camera_jacobian(x, cal)
    return sonar_measurement_fn(x), sonar_measurement_jacobian(x)


def update(state: TargetState3D, m: Measurement, cal: CameraCalibration | None = None,
           camera_noise_scale: float = 1.0, records: list | None = None) -> TargetState3D:
    """
    Correct `state` with `m` (same stamp). Camera noise is given in
    normalised units and converted to pixels^2 with `camera_noise_scale`^2.
    """
    if abs(m.stamp - state.stamp) > 1e-9:
        raise TimeRegressionError("predict to the measurement stamp before updating")
    hx, H = measurement_model(state.x, m.kind, cal)
    Q = m.noise * camera_noise_scale ** 2 if m.kind == CAMERA else m.noise
    x, P, innov = kalman_correct(state.x, state.p, m.value, hx, H, Q)
    if records is not None:
        records.append(UpdateRecord(m.stamp, m.kind, innov, x, np.diag(P).copy()))
    return TargetState3D(x, P, state.stamp)


def sort_measurements(queue) -> list[Measurement]:
    return sorted(queue, key=Measurement.sort_key)


def step(state: TargetState3D, queue, noise: MotionNoise, cal: CameraCalibration | None = None,
         until: float | None = None, camera_noise_scale: float = 1.0,
         records: list | None = None) -> TargetState3D:
    """
    Process `queue` in timestamp order (ultrasonic before camera on ties):
    predict to each stamp, then correct. A correction that fails on a
    singular innovation is skipped and the prediction kept. Finally predict
    to `until` if given.
    """
    for m in sort_measurements(queue):
        state = predict(state, noise, m.stamp)
        try:
            state = update(state, m, cal, camera_noise_scale, records)
        except SingularInnovationError:
            log.warning("skipping %s update at t=%.3f: singular innovation", m.kind, m.stamp)
    if until is not None:
        state = predict(state, noise, until)
    return state


class MeasurementQueue:
    """Thread-safe producer queue drained in (stamp, kind) order."""

    def __init__(self):
        self._heap = []
        self._lock = threading.Lock()
        self._counter = itertools.count()

    def put(self, m: Measurement) -> None:
        with self._lock:
            heapq.heappush(self._heap, (m.sort_key(), next(self._counter), m))

    def drain(self) -> list[Measurement]:
        with self._lock:
            items = [heapq.heappop(self._heap)[2] for _ in range(len(self._heap))]
        return items

    def __len__(self):
        with self._lock:
            return len(self._heap)


UPDATE_LOG_FIELDS = ("stamp", "kind", "innov_0", "innov_1", "x", "y", "z", "p_xx", "p_yy", "p_zz")


def write_update_log(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UPDATE_LOG_FIELDS)
        for r in records:
            w.writerow([f"{r.stamp:.6f}", r.kind] + [f"{v:.6f}" for v in r.innovation]
                       + [f"{v:.6f}" for v in r.x] + [f"{v:.8f}" for v in r.p_diag])
