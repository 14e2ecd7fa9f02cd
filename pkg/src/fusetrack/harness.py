"""
Tracking pipeline over a simulated run, per-axis error evaluation, report
files and plots.

Modes: "fused" (camera + ultrasonic), "camera" (camera only), "sonar"
(ultrasonic only). All three consume the same simulated streams.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import PointBehindCameraError, initial_bbox
from .ekf import (CAMERA, ULTRASONIC, Measurement, MotionNoise, TargetState3D,
                  camera_noise_from_pce, predict, step, write_update_log)
from .sim.scenario import Scenario
from .sim.world import SimulationRun, gpr_training_data, run_scenario
from .tracker.tracker import TrackerParams, init_tracker, track_frame, write_trace
from .ultrasonic import (DegeneratePosteriorError, SonarLocalizer, UndefinedRangeError,
                         train_receiver_models)

log = logging.getLogger(__name__)

MODES = ("fused", "camera", "sonar")
AXES = ("x", "y", "z")


class EmptyOverlapError(ValueError):
    pass


class NoDataError(ValueError):
    pass


class PipelineError(RuntimeError):
    """Wraps a failure inside a pipeline stage with the stage name."""


@dataclass
class RunReport:
    mode: str
    scenario: str
    seed: int
    errors: np.ndarray  # (3,) mean |est - truth| per axis, m
    stamps: np.ndarray  # ground-truth stamps
    estimates: np.ndarray  # (n, 3) state after all updates at each stamp
    truth: np.ndarray  # (n, 3)
    updated: np.ndarray  # (n,) bool: at least one correction at this stamp
    frame_stamps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pce: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    frame_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))
    frame_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    model_writes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    n_camera_updates: int = 0
    n_sonar_updates: int = 0
    runtime_s: float = 0.0
    trace: list = field(default_factory=list, repr=False)
    records: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        n = len(self.stamps)
        if not (len(self.estimates) == len(self.truth) == len(self.updated) == n):
            raise ValueError("report series must match the ground-truth log length")
        if np.any(np.asarray(self.errors) < 0):
            raise ValueError("errors must be non-negative")

    @property
    def frame_errors(self) -> np.ndarray:
        return np.abs(self.estimates - self.truth)

    @property
    def n_frames(self) -> int:
        return len(self.frame_stamps)

    @property
    def frames_per_s(self) -> float:
        return self.n_frames / self.runtime_s if self.runtime_s > 0 else 0.0

    @property
    def gated_fraction(self) -> float:
        return float(np.mean(self.gated)) if len(self.gated) else 0.0


def compute_errors(est_stamps, estimates, truth_stamps, truth, tol: float) -> np.ndarray:
    """
    Mean absolute per-axis error over estimates matched to the nearest
    ground-truth stamp within `tol` seconds. Unmatched estimates are dropped.
    """
    est_stamps = np.asarray(est_stamps, dtype=float)
    truth_stamps = np.asarray(truth_stamps, dtype=float)
    if len(est_stamps) == 0 or len(truth_stamps) == 0:
        raise EmptyOverlapError("no samples to compare")
    estimates = np.asarray(estimates, dtype=float).reshape(len(est_stamps), -1)
    truth = np.asarray(truth, dtype=float).reshape(len(truth_stamps), -1)
    order = np.argsort(truth_stamps, kind="stable")
    ts = truth_stamps[order]
    idx = np.clip(np.searchsorted(ts, est_stamps), 1, len(ts) - 1) if len(ts) > 1 else np.zeros(len(est_stamps), int)
    if len(ts) > 1:
        left = idx - 1
        idx = np.where(np.abs(ts[left] - est_stamps) <= np.abs(ts[idx] - est_stamps), left, idx)
    ok = np.abs(ts[idx] - est_stamps) <= tol
    if not np.any(ok):
        raise EmptyOverlapError("no estimate lies within tolerance of a ground-truth stamp")
    diff = np.abs(estimates[ok] - truth[order][idx[ok]])
    return diff.mean(axis=0)


def _localizer(scn: Scenario) -> SonarLocalizer:
    inputs, readings = gpr_training_data(scn)
    models = train_receiver_models(inputs, readings, scn.gpr.hyper(scn.sonar.noise_std))
    return SonarLocalizer(models, scn.gpr.grid())


def run_pipeline(scn: Scenario, mode: str = "fused", sim: SimulationRun | None = None,
                 tracker_params: TrackerParams | None = None, frame_sink=None) -> RunReport:
    """
    Run the estimator over the simulated streams of `scn`. The camera
    tracker is seeded from the initial box of the true starting position,
    as is the filter state. `frame_sink(index, image, center, pce)` receives
    every processed frame if given.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    use_cam, use_sonar = mode in ("fused", "camera"), mode in ("fused", "sonar")
    t_start = time.perf_counter()
    sim = sim or run_scenario(scn)
    truth = sim.truth
    cal = scn.calibration
    noise = MotionNoise(scn.filter.motion_noise * np.eye(3))
    scale_q = scn.camera_noise_scale
    localizer = _localizer(scn) if use_sonar else None

    state = TargetState3D(truth.positions[0], scn.filter.p0 * np.eye(3), float(sim.stamps[0]))
    tracker = None
    n = len(sim.stamps)
    est = np.zeros((n, 3))
    updated = np.zeros(n, dtype=bool)
    f_stamps, f_pce, f_gated, f_scale, f_centers, f_writes, trace, records = [], [], [], [], [], [], [], []
    n_cam = n_son = 0

    for k, t in enumerate(sim.stamps):
        cams, sons = sim.events_at(k)
        queue = []
        if use_sonar:
            for ev in sons:
                if ev.readings is None:
                    continue
                try:
                    e = localizer.locate(ev.readings)
                except DegeneratePosteriorError:
                    log.warning("sonar packet %d: degenerate posterior, skipped", ev.index)
                    continue
                queue.append(Measurement(ev.stamp, ULTRASONIC, e.position, e.covariance))
        # ultrasonic goes first at equal stamps, so the camera sees the corrected prior
        state = _correct(state, queue, noise, cal, t, scale_q, records)
        n_son += len(queue)
        queue = []
        if use_cam:
            for ev in cams:
                image = sim.frame(ev)
                if tracker is None:
                    try:
                        box = initial_bbox(state.x, scn.person, cal)
                    except PointBehindCameraError as exc:
                        raise PipelineError(f"camera_geometry: cannot seed the tracker ({exc})") from exc
                    tracker = init_tracker(image, box, tracker_params, scn.person, cal)
                    center, pce, s_k = tracker.center, 1.0, 1.0
                    if frame_sink:
                        frame_sink(ev.index, image, center, pce)
                    _log_frame(f_stamps, f_pce, f_gated, f_scale, f_centers, f_writes, trace,
                               ev.stamp, center, s_k, pce, False, tracker.model_writes)
                    continue
                tracker, center, pce, s_k = track_frame(tracker, image, x_k=state)
                if frame_sink:
                    frame_sink(ev.index, image, center, pce)
                _log_frame(f_stamps, f_pce, f_gated, f_scale, f_centers, f_writes, trace,
                           ev.stamp, center, s_k, pce, tracker.update_gated, tracker.model_writes)
                if pce > 0:
                    queue.append(Measurement(ev.stamp, CAMERA, center, camera_noise_from_pce(min(pce, 1.0)), min(pce, 1.0)))
        state = _correct(state, queue, noise, cal, t, scale_q, records)
        n_cam += len(queue)
        est[k] = state.x
        updated[k] = bool(records) and records[-1].stamp == t

    upd = np.flatnonzero(updated)
    if len(upd) == 0:
        raise EmptyOverlapError(f"mode {mode!r} produced no measurement updates")
    errors = compute_errors(sim.stamps[upd], est[upd], sim.stamps, truth.positions,
                            tol=0.5 / scn.step_rate)
    return RunReport(mode, scn.name, scn.seed, errors, np.asarray(sim.stamps), est,
                     truth.positions.copy(), updated, np.array(f_stamps), np.array(f_pce),
                     np.array(f_gated, dtype=bool), np.array(f_scale),
                     np.array(f_centers).reshape(-1, 2), np.array(f_writes, dtype=int),
                     n_cam, n_son, time.perf_counter() - t_start, trace, records)


def _correct(state, queue, noise, cal, t, scale_q, records):
    try:
        return step(state, queue, noise, cal, until=t, camera_noise_scale=scale_q, records=records)
    except (PointBehindCameraError, UndefinedRangeError) as exc:
        # the linearisation point is invalid; keep the prediction
        log.warning("t=%.3f: update skipped (%s)", t, exc)
        return predict(state, noise, t)


def _log_frame(f_stamps, f_pce, f_gated, f_scale, f_centers, f_writes, trace,
               stamp, center, s_k, pce, gated, writes):
    f_stamps.append(stamp)
    f_pce.append(pce)
    f_gated.append(gated)
    f_scale.append(s_k)
    f_centers.append(center)
    f_writes.append(writes)
    trace.append((stamp, center[0], center[1], s_k, pce, gated))


# -- report files ----------------------------------------------------------

SUMMARY_FILE = "summary.csv"
PER_FRAME_FILE = "per_frame.csv"
UPDATES_FILE = "updates.csv"
TRACE_FILE = "tracker.csv"
TRUTH_FILE = "ground_truth.csv"
CAMERA_LOG_FILE = "camera_log.csv"
SONAR_LOG_FILE = "sonar_log.csv"
RUN_INFO_FILE = "run_info.json"
PLOT_FILES = ("x.png", "y.png", "z.png", "pce.png")


def write_summary(report: RunReport, path) -> None:
    """One row per axis plus the PCE gating statistics. No timing, so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "axis", "mean_abs_error_m"])
        for axis, e in zip(AXES, report.errors):
            w.writerow([report.mode, axis, f"{e:.6f}"])


def write_per_frame(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stamp", "updated", "est_x", "est_y", "est_z", "true_x", "true_y", "true_z",
                    "err_x", "err_y", "err_z"])
        err = report.frame_errors
        for i, t in enumerate(report.stamps):
            w.writerow([f"{t:.6f}", int(report.updated[i])]
                       + [f"{v:.6f}" for v in report.estimates[i]]
                       + [f"{v:.6f}" for v in report.truth[i]]
                       + [f"{v:.6f}" for v in err[i]])


def write_reports(report: RunReport, sim: SimulationRun, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / SUMMARY_FILE, out / PER_FRAME_FILE, out / UPDATES_FILE, out / TRUTH_FILE,
             out / CAMERA_LOG_FILE, out / SONAR_LOG_FILE, out / RUN_INFO_FILE]
    write_summary(report, files[0])
    write_per_frame(report, files[1])
    write_update_log(files[2], report.records)
    sim.truth.write_csv(files[3])
    sim.write_sensor_logs(files[4], files[5])
    if report.trace:
        write_trace(out / TRACE_FILE, report.trace)
        files.append(out / TRACE_FILE)
    info = {
        "mode": report.mode,
        "scenario": report.scenario,
        "seed": report.seed,
        "errors_m": dict(zip(AXES, (float(e) for e in report.errors))),
        "camera_updates": report.n_camera_updates,
        "sonar_updates": report.n_sonar_updates,
        "frames": report.n_frames,
        "gated_fraction": report.gated_fraction,
        "median_pce": float(np.median(report.pce)) if len(report.pce) else None,
        "runtime_s": report.runtime_s,
        "frames_per_s": report.frames_per_s,
    }
    files[6].write_text(json.dumps(info, indent=2) + "\n")
    return files


def emit_plots(report: RunReport, out_dir) -> list[Path]:
    """Per-axis truth vs estimate and PCE over time, as PNG files."""
    if len(report.stamps) == 0:
        raise NoDataError("report has no samples to plot")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the PNG bytes reproducible
    meta = {"Software": None}
    paths = []
    for i, axis in enumerate(AXES):
        fig, ax = plt.subplots(figsize=(7, 3), dpi=100)
        ax.plot(report.stamps, report.truth[:, i], color="k", lw=1.2, label="ground truth")
        ax.plot(report.stamps, report.estimates[:, i], color="tab:red", lw=1.0, label=report.mode)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(f"{axis} (m)")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = out / f"{axis}.png"
        fig.savefig(p, metadata=meta)
        plt.close(fig)
        paths.append(p)
    fig, ax = plt.subplots(figsize=(7, 3), dpi=100)
    if len(report.pce):
        ax.plot(report.frame_stamps, report.pce, color="tab:blue", lw=1.0)
    ax.axhline(0.2, color="gray", ls="--", lw=0.8)
    ax.set_ylim(0, 1)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("PCE")
    fig.tight_layout()
    p = out / "pce.png"
    fig.savefig(p, metadata=meta)
    plt.close(fig)
    paths.append(p)
    return paths
