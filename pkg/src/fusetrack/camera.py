"""
Pinhole camera model and initial bounding-box construction.

Robot frame: x forward, y left, z up (meters). Camera frame: x right,
y down, z along the optical axis. Extrinsics map robot -> camera.

    [u v 1]^T ~ A [R | t] [p 1]^T
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import strict_fields

BEHIND_CAMERA_EPS = 1e-6


class PointBehindCameraError(ValueError):
    """Raised when a point has (near) non-positive depth in the camera frame."""


class DegenerateBoxError(ValueError):
    pass


@dataclass(frozen=True)
class CameraCalibration:
    intrinsics: np.ndarray  # 3x3
    extrinsics: np.ndarray  # 3x4 [R|t], robot -> camera
    image_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        A = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        Rt = np.asarray(self.extrinsics, dtype=float).reshape(3, 4)
        object.__setattr__(self, "intrinsics", A)
        object.__setattr__(self, "extrinsics", Rt)
        w, h = (int(v) for v in self.image_size)
        object.__setattr__(self, "image_size", (w, h))
        if not (A[0, 0] > 0 and A[1, 1] > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= A[0, 2] < w and 0 <= A[1, 2] < h):
            raise ValueError("principal point must lie inside the image")
        R = Rt[:, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("extrinsic rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("extrinsic rotation must have det +1")

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsics[:, 3]

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    @classmethod
    def from_dict(cls, data: dict) -> "CameraCalibration":
        strict_fields(data, required={"intrinsics", "extrinsics", "image_size"}, where="calibration")
        intr = np.asarray(data["intrinsics"], dtype=float)
        extr = np.asarray(data["extrinsics"], dtype=float)
        if intr.size != 9:
            raise ValueError("calibration.intrinsics needs 9 row-major values")
        if extr.size != 12:
            raise ValueError("calibration.extrinsics needs 12 row-major values")
        size = data["image_size"]
        if len(size) != 2:
            raise ValueError("calibration.image_size must be [width, height]")
        return cls(intr.reshape(3, 3), extr.reshape(3, 4), (int(size[0]), int(size[1])))

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.ravel().tolist(),
            "extrinsics": self.extrinsics.ravel().tolist(),
            "image_size": list(self.image_size),
        }

    @classmethod
    def load(cls, path) -> "CameraCalibration":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def forward_looking(cls, fx: float, fy: float, cx: float, cy: float,
                        image_size: tuple[int, int],
                        position=(0.0, 0.0, 0.0)) -> "CameraCalibration":
        """Camera at `position` (robot frame) looking along robot +x, no tilt."""
        R = np.array([[0.0, -1.0, 0.0],
                      [0.0, 0.0, -1.0],
                      [1.0, 0.0, 0.0]])
        t = -R @ np.asarray(position, dtype=float)
        A = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(A, np.column_stack([R, t]), image_size)


@dataclass(frozen=True)
class BoundingBox:
    center: tuple[float, float]
    width: float
    height: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0 and self.scale > 0):
            raise DegenerateBoxError(
                f"box dimensions must be positive (w={self.width}, h={self.height}, s={self.scale})")

    @property
    def u(self) -> float:
        return self.center[0]

    @property
    def v(self) -> float:
        return self.center[1]

    def corners(self) -> tuple[float, float, float, float]:
        """(u0, v0, u1, v1)"""
        u, v = self.center
        return (u - self.width / 2, v - self.height / 2,
                u + self.width / 2, v + self.height / 2)


@dataclass(frozen=True)
class PersonModel:
    height_m: float = 1.7
    width_m: float = 0.4
    emitter_ratio: float = 0.5

    def __post_init__(self):
        if not 0.5 < self.height_m < 2.5:
            raise ValueError("person height must be in (0.5, 2.5) m")
        if self.width_m <= 0:
            raise ValueError("person width must be positive")
        if not 0 < self.emitter_ratio < 1:
            raise ValueError("emitter_ratio must be in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "PersonModel":
        strict_fields(data, optional={"height_m", "width_m", "emitter_ratio"}, where="person")
        return cls(**{k: float(v) for k, v in data.items()})


def camera_coords(p, cal: CameraCalibration) -> np.ndarray:
    return cal.rotation @ np.asarray(p, dtype=float) + cal.translation


def project_point(p, cal: CameraCalibration) -> np.ndarray:
    """Project a robot-frame point to pixel coordinates (u, v)."""
    pc = camera_coords(p, cal)
    if pc[2] <= BEHIND_CAMERA_EPS:
        raise PointBehindCameraError(f"camera-frame depth {pc[2]:.3g} m is not in front of the camera")
    hom = cal.intrinsics @ pc
    return hom[:2] / hom[2]


def projection_jacobian(p, cal: CameraCalibration) -> np.ndarray:
    """Analytic 2x3 derivative of project_point with respect to the robot-frame point."""
    pc = camera_coords(p, cal)
    if pc[2] <= BEHIND_CAMERA_EPS:
        raise PointBehindCameraError(f"camera-frame depth {pc[2]:.3g} m is not in front of the camera")
    A = cal.intrinsics
    hom = A @ pc
    uv = hom[:2] / hom[2]
    # d(a/c) = (da * c - a * dc) / c^2 with [a, b, c] = A pc
    d_pc = (A[:2, :] - np.outer(uv, A[2, :])) / hom[2]
    return d_pc @ cal.rotation


def person_anchor_points(x, person: PersonModel) -> dict[str, np.ndarray]:
    x = np.asarray(x, dtype=float)
    half_w = person.width_m / 2
    dz = person.emitter_ratio * person.height_m
    return {
        "left": x + np.array([0.0, half_w, 0.0]),
        "right": x + np.array([0.0, -half_w, 0.0]),
        "head": x + np.array([0.0, 0.0, dz]),
        "feet": x + np.array([0.0, 0.0, -dz]),
    }


def box_from_anchors(x, person: PersonModel, cal: CameraCalibration) -> BoundingBox:
    anchors = person_anchor_points(x, person)
    u_left = project_point(anchors["left"], cal)[0]
    u_right = project_point(anchors["right"], cal)[0]
    v_head = project_point(anchors["head"], cal)[1]
    v_feet = project_point(anchors["feet"], cal)[1]
    w = u_right - u_left
    h = v_feet - v_head
    if w <= 0 or h <= 0:
        raise DegenerateBoxError(f"projected box is degenerate (w={w:.3g}, h={h:.3g})")
    return BoundingBox(((u_left + u_right) / 2, (v_feet + v_head) / 2), w, h, 1.0)


def initial_bbox(x_init, person: PersonModel, cal: CameraCalibration) -> BoundingBox:
    """Image box of a person whose emitter sits at `x_init`."""
    return box_from_anchors(x_init, person, cal)
