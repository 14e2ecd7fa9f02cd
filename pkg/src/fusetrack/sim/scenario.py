"""
Scenario description for the simulator, loaded from JSON with strict
field checking.

World frame: origin at the robot's start pose, x forward, y left, z up,
z = 0 at the height of the sonar array (the robot drives on a flat plane,
so world z equals robot-frame z). Trajectory waypoints give the emitter
position over time.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..camera import CameraCalibration, PersonModel
from ..config import ConfigError, strict_fields
from ..ultrasonic import KernelHyper, PosteriorGrid, SonarArrayGeometry


def _sub(cls, data, where):
    names = {f.name for f in fields(cls)}
    strict_fields(data or {}, optional=names, where=where)
    return cls(**(data or {}))


@dataclass(frozen=True)
class Occlusion:
    start: float
    end: float
    box: tuple[float, float, float, float]  # (u0, v0, u1, v1) pixels

    def active(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class ImageParams:
    noise_std: float = 2.0  # grey levels
    texture: str = "high"  # "high" | "low" contrast target
    background_seed: int = 11

    def __post_init__(self):
        if self.texture not in ("high", "low"):
            raise ConfigError("image.texture must be 'high' or 'low'")
        if self.noise_std < 0:
            raise ConfigError("image.noise_std must be >= 0")


@dataclass(frozen=True)
class SonarParams:
    noise_std: float = 0.02  # m of path length
    spacing: float = 0.2  # receiver spacing, m

    def __post_init__(self):
        if self.noise_std < 0 or self.spacing <= 0:
            raise ConfigError("sonar.noise_std must be >= 0 and sonar.spacing > 0")

    def geometry(self) -> SonarArrayGeometry:
        return SonarArrayGeometry.linear(self.spacing)


@dataclass(frozen=True)
class RobotParams:
    follow: bool = True
    setpoint: float = 3.0
    k_v: float = 0.5
    k_w: float = 1.5
    v_min: float = -0.5
    v_max: float = 1.5
    w_max: float = 1.5


@dataclass(frozen=True)
class GprParams:
    length_scale: float = 0.5
    signal_std: float = 0.2
    min_noise_std: float = 1e-3  # floor keeps the Gram factorisation well posed
    train_nx: int = 21
    train_ny: int = 17
    x_min: float = 0.5
    x_max: float = 5.0
    y_min: float = -2.0
    y_max: float = 2.0
    resolution: float = 0.05

    def grid(self) -> PosteriorGrid:
        return PosteriorGrid(self.x_min, self.x_max, self.y_min, self.y_max, self.resolution)

    def hyper(self, noise_std: float) -> KernelHyper:
        return KernelHyper(self.length_scale, self.signal_std, max(noise_std, self.min_noise_std))

    def training_inputs(self) -> np.ndarray:
        xs = np.linspace(self.x_min, self.x_max, self.train_nx)
        ys = np.linspace(self.y_min, self.y_max, self.train_ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class FilterParams:
    motion_noise: float = 0.25  # m^2/s, isotropic random-walk rate
    p0: float = 0.1  # m^2, initial variance per axis
    camera_noise_scale: float | None = None  # pixels per normalised unit; default image width


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: float
    camera_rate: float
    sonar_rate: float
    waypoints: np.ndarray  # (n, 4): t, x, y, z
    calibration: CameraCalibration
    person: PersonModel = field(default_factory=PersonModel)
    occlusions: tuple[Occlusion, ...] = ()
    image: ImageParams = field(default_factory=ImageParams)
    sonar: SonarParams = field(default_factory=SonarParams)
    robot: RobotParams = field(default_factory=RobotParams)
    gpr: GprParams = field(default_factory=GprParams)
    filter: FilterParams = field(default_factory=FilterParams)
    name: str = "scenario"

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        object.__setattr__(self, "waypoints", wp)
        if not (self.duration > 0 and self.camera_rate > 0 and self.sonar_rate > 0):
            raise ConfigError("duration, camera_rate and sonar_rate must be positive")
        if wp.ndim != 2 or wp.shape[1] != 4 or len(wp) < 2:
            raise ConfigError("trajectory needs at least two [t, x, y, z] waypoints")
        if np.any(np.diff(wp[:, 0]) <= 0):
            raise ConfigError("waypoint times must be strictly increasing")
        if wp[0, 0] > 0 or wp[-1, 0] < self.duration:
            raise ConfigError("waypoints must span [0, duration]")
        for occ in self.occlusions:
            if not (0 <= occ.start < occ.end <= self.duration):
                raise ConfigError("occlusion windows must lie within [0, duration]")

    @property
    def step_rate(self) -> float:
        return max(self.camera_rate, self.sonar_rate)

    @property
    def camera_noise_scale(self) -> float:
        s = self.filter.camera_noise_scale
        return float(self.calibration.width if s is None else s)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))

    # -- serialisation -------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        strict_fields(data, required={"seed", "duration", "camera_rate", "sonar_rate",
                                      "trajectory", "calibration"},
                      optional={"name", "person", "occlusions", "image", "sonar", "robot",
                                "gpr", "filter"}, where="scenario")
        traj = strict_fields(data["trajectory"], required={"waypoints"}, where="trajectory")
        occs = []
        for i, o in enumerate(data.get("occlusions", [])):
            strict_fields(o, required={"start", "end", "box"}, where=f"occlusions[{i}]")
            if len(o["box"]) != 4:
                raise ConfigError(f"occlusions[{i}].box must be [u0, v0, u1, v1]")
            occs.append(Occlusion(float(o["start"]), float(o["end"]), tuple(float(v) for v in o["box"])))
        return cls(
            seed=int(data["seed"]),
            duration=float(data["duration"]),
            camera_rate=float(data["camera_rate"]),
            sonar_rate=float(data["sonar_rate"]),
            waypoints=np.asarray(traj["waypoints"], dtype=float),
            calibration=CameraCalibration.from_dict(data["calibration"]),
            person=PersonModel.from_dict(data.get("person", {})),
            occlusions=tuple(occs),
            image=_sub(ImageParams, data.get("image"), "image"),
            sonar=_sub(SonarParams, data.get("sonar"), "sonar"),
            robot=_sub(RobotParams, data.get("robot"), "robot"),
            gpr=_sub(GprParams, data.get("gpr"), "gpr"),
            filter=_sub(FilterParams, data.get("filter"), "filter"),
            name=str(data.get("name", "scenario")),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "duration": self.duration,
            "camera_rate": self.camera_rate,
            "sonar_rate": self.sonar_rate,
            "trajectory": {"waypoints": self.waypoints.tolist()},
            "calibration": self.calibration.to_dict(),
            "person": asdict(self.person),
            "occlusions": [{"start": o.start, "end": o.end, "box": list(o.box)} for o in self.occlusions],
            "image": asdict(self.image),
            "sonar": asdict(self.sonar),
            "robot": asdict(self.robot),
            "gpr": asdict(self.gpr),
            "filter": asdict(self.filter),
        }


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return Scenario.from_dict(data)


def save_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scn.to_dict(), indent=2) + "\n")
