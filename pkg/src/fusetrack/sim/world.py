"""
Deterministic scenario stepping.

The robot is a kinematic differential-drive base following the person with
a proportional controller. It steers on the true relative position so that
the produced sensor streams do not depend on which estimator consumes them.
All noise is drawn from generators keyed on (seed, stream, index), so any
frame or packet can be regenerated on its own.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator

from .render import FrameTruth, compose_frame, person_box, visibility
from .scenario import RobotParams, Scenario

CAMERA_STREAM = 0
SONAR_STREAM = 1


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0


class Trajectory:
    """Shape-preserving spline through the [t, x, y, z] waypoints."""

    def __init__(self, waypoints: np.ndarray):
        wp = np.asarray(waypoints, dtype=float)
        self._interp = PchipInterpolator(wp[:, 0], wp[:, 1:], axis=0)

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self._interp(t), dtype=float)


def to_robot_frame(p_world, pose: Pose) -> np.ndarray:
    dx, dy = p_world[0] - pose.x, p_world[1] - pose.y
    c, s = np.cos(pose.heading), np.sin(pose.heading)
    return np.array([c * dx + s * dy, -s * dx + c * dy, p_world[2]])


def integrate_pose(pose: Pose, v: float, w: float, dt: float) -> Pose:
    """Exact unicycle integration over `dt` at constant (v, w)."""
    th = pose.heading
    if abs(w) < 1e-9:
        return Pose(pose.x + v * dt * np.cos(th), pose.y + v * dt * np.sin(th), th)
    th1 = th + w * dt
    return Pose(pose.x + v / w * (np.sin(th1) - np.sin(th)),
                pose.y - v / w * (np.cos(th1) - np.cos(th)), th1)


def follow_controller(estimate, setpoint: float, params: RobotParams | None = None) -> tuple[float, float]:
    """
    Proportional follow law on a robot-frame position (x, y, z):
    v = k_v * (range - setpoint), w = k_w * atan2(y, x), both clamped.
    Positive w turns left (toward +y).
    """
    params = params or RobotParams()
    x, y = float(estimate[0]), float(estimate[1])
    z = float(estimate[2]) if len(estimate) > 2 else 0.0
    x_u = np.hypot(x, z)
    v = float(np.clip(params.k_v * (x_u - setpoint), params.v_min, params.v_max))
    w = float(np.clip(params.k_w * np.arctan2(y, x), -params.w_max, params.w_max))
    return v, w


def _noise_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream, int(index)])


def simulate_sonar(scn: Scenario, x_rel, index: int) -> np.ndarray | None:
    """
    Four path-length readings (m) from the emitter at robot-frame `x_rel`,
    or None when the target is outside the sonar field (the GPR region).
    """
    x_u, y_u = np.hypot(x_rel[0], x_rel[2]), x_rel[1]
    # the array only hears emitters in front of it
    if x_rel[0] <= 0 or not scn.gpr.grid().contains(x_u, y_u):
        return None
    rec = scn.sonar.geometry().positions
    d = np.sqrt((x_rel[0] - rec[:, 0]) ** 2 + (x_rel[1] - rec[:, 1]) ** 2 + x_rel[2] ** 2)
    if scn.sonar.noise_std > 0:
        d = d + _noise_rng(scn.seed, SONAR_STREAM, index).normal(0.0, scn.sonar.noise_std, size=d.shape)
    return d


def active_occluders(scn: Scenario, t: float):
    return [o.box for o in scn.occlusions if o.active(t)]


def render_frame(scn: Scenario, t: float, pose: Pose, index: int | None = None,
                 x_rel=None) -> tuple[np.ndarray, FrameTruth]:
    """Render the camera frame at time `t` seen from `pose`."""
    if not 0 <= t <= scn.duration:
        raise ValueError(f"t={t} outside [0, {scn.duration}]")
    if index is None:
        index = int(round(t * scn.camera_rate))
    if x_rel is None:
        x_rel = to_robot_frame(Trajectory(scn.waypoints)(t), pose)
    return compose_frame(scn.calibration, pose.heading, x_rel, scn.person,
                         active_occluders(scn, t), scn.image.noise_std,
                         _noise_rng(scn.seed, CAMERA_STREAM, index), scn.image.background_seed,
                         scn.image.texture)


@dataclass
class GroundTruthLog:
    stamps: np.ndarray
    positions: np.ndarray  # (n, 3) robot frame
    boxes: np.ndarray  # (n, 4) u, v, w, h; NaN when not projectable
    coverage: np.ndarray
    occluded: np.ndarray
    in_view: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.stamps) <= 0):
            raise ValueError("ground-truth stamps must be strictly increasing")

    def __len__(self):
        return len(self.stamps)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stamp", "x", "y", "z", "u", "v", "w", "h", "coverage", "occluded", "in_view"])
            for i in range(len(self)):
                w.writerow([f"{self.stamps[i]:.6f}"] + [f"{v:.6f}" for v in self.positions[i]]
                           + [f"{v:.4f}" for v in self.boxes[i]]
                           + [f"{self.coverage[i]:.4f}", int(self.occluded[i]), int(self.in_view[i])])


@dataclass(frozen=True)
class CameraEvent:
    stamp: float
    index: int
    step: int


@dataclass(frozen=True)
class SonarEvent:
    stamp: float
    index: int
    step: int
    readings: np.ndarray | None  # None: no detection


@dataclass
class SimulationRun:
    """Ordered sensor log of a scenario plus ground truth. Frames render on demand."""
    scenario: Scenario
    stamps: np.ndarray
    poses: list
    camera: list
    sonar: list
    truth: GroundTruthLog

    def frame(self, ev: CameraEvent) -> np.ndarray:
        img, _ = render_frame(self.scenario, ev.stamp, self.poses[ev.step], ev.index,
                              self.truth.positions[ev.step])
        return img

    def events_at(self, step: int):
        return self._by_step.get(step, ([], []))

    @cached_property
    def _by_step(self):
        out: dict[int, tuple[list, list]] = {}
        for ev in self.camera:
            out.setdefault(ev.step, ([], []))[0].append(ev)
        for ev in self.sonar:
            out.setdefault(ev.step, ([], []))[1].append(ev)
        return out

    def write_sensor_logs(self, camera_path, sonar_path) -> None:
        with open(camera_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stamp", "index", "robot_x", "robot_y", "robot_heading"])
            for ev in self.camera:
                p = self.poses[ev.step]
                w.writerow([f"{ev.stamp:.6f}", ev.index, f"{p.x:.6f}", f"{p.y:.6f}", f"{p.heading:.6f}"])
        with open(sonar_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stamp", "index", "detected", "reading_1", "reading_2", "reading_3", "reading_4"])
            for ev in self.sonar:
                vals = ["", "", "", ""] if ev.readings is None else [f"{r:.6f}" for r in ev.readings]
                w.writerow([f"{ev.stamp:.6f}", ev.index, int(ev.readings is not None)] + vals)


def _due(k: int, rate: float, step_rate: float) -> tuple[bool, int]:
    """Whether a sensor at `rate` samples on sim step k, and its sample index."""
    cur = int(np.floor(k * rate / step_rate + 1e-9))
    prev = int(np.floor((k - 1) * rate / step_rate + 1e-9)) if k > 0 else -1
    return cur > prev, cur


def run_scenario(scn: Scenario) -> SimulationRun:
    step_rate = scn.step_rate
    dt = 1.0 / step_rate
    n = int(round(scn.duration * step_rate))
    traj = Trajectory(scn.waypoints)
    pose = Pose()
    stamps, poses, cams, sons = [], [], [], []
    pos, boxes, cov, occl, view = [], [], [], [], []
    for k in range(n):
        t = k * dt
        x_rel = to_robot_frame(traj(t), pose)
        stamps.append(t)
        poses.append(pose)
        pos.append(x_rel)
        box = person_box(x_rel, scn.person, scn.calibration)
        boxes.append([np.nan] * 4 if box is None else [box.u, box.v, box.width, box.height])
        iv, c = visibility(box, active_occluders(scn, t), *scn.calibration.image_size)
        cov.append(c)
        occl.append(iv and c > 0)
        view.append(iv)

        due, idx = _due(k, scn.camera_rate, step_rate)
        if due:
            cams.append(CameraEvent(t, idx, k))
        due, idx = _due(k, scn.sonar_rate, step_rate)
        if due:
            sons.append(SonarEvent(t, idx, k, simulate_sonar(scn, x_rel, idx)))

        if scn.robot.follow:
            v, w = follow_controller(x_rel, scn.robot.setpoint, scn.robot)
            pose = integrate_pose(pose, v, w, dt)

    truth = GroundTruthLog(np.array(stamps), np.array(pos), np.array(boxes, dtype=float),
                           np.array(cov), np.array(occl), np.array(view))
    return SimulationRun(scn, np.array(stamps), poses, cams, sons, truth)


def gpr_training_data(scn: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free readings on the configured training grid of planar positions."""
    inputs = scn.gpr.training_inputs()
    return inputs, scn.sonar.geometry().path_lengths(inputs)
