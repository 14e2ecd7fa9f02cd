"""Built-in scenarios. The JSON copies under fusetrack/data/scenarios are generated from these."""

from __future__ import annotations

import numpy as np

from ..camera import CameraCalibration, PersonModel
from .scenario import (FilterParams, ImageParams, Occlusion, RobotParams, Scenario,
                       SonarParams)

IMAGE_SIZE = (480, 360)
FOCAL = 360.0
CAMERA_POSITION = (0.0, 0.0, -0.05)  # just below the sonar array
EMITTER_Z = -0.05  # waist height relative to the array


def default_calibration() -> CameraCalibration:
    w, h = IMAGE_SIZE
    return CameraCalibration.forward_looking(FOCAL, FOCAL, w / 2, h / 2, IMAGE_SIZE,
                                             position=CAMERA_POSITION)


def _walk(duration: float, speed, heading, z, start=(3.0, 0.0), dt: float = 0.25) -> np.ndarray:
    """Integrate a speed/heading profile into [t, x, y, z] waypoints."""
    t = np.arange(0.0, duration + dt / 2, dt)
    v, psi = speed(t), heading(t)
    x = start[0] + np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] * np.cos(psi[1:]) + v[:-1] * np.cos(psi[:-1])) * dt)])
    y = start[1] + np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] * np.sin(psi[1:]) + v[:-1] * np.sin(psi[:-1])) * dt)])
    return np.column_stack([t, x, y, z(t)])


def _smoothstep(t, a, b):
    s = np.clip((t - a) / (b - a), 0.0, 1.0)
    return s * s * (3 - 2 * s)


def outdoor(seed: int = 7) -> Scenario:
    """60 s walk with stops, weaving, uneven ground and passing occluders."""
    def speed(t):
        go = _smoothstep(t, 3, 5) - _smoothstep(t, 19, 21) + _smoothstep(t, 25, 27) \
            - _smoothstep(t, 41, 43) + _smoothstep(t, 47, 49)
        return 0.8 * go

    def heading(t):
        return 0.5 * np.sin(2 * np.pi * t / 24.0)

    def z(t):
        return EMITTER_Z + 0.3 * np.sin(2 * np.pi * t / 16.0) + 0.08 * np.sin(2 * np.pi * t / 6.5 + 1.0)

    band = (190.0, 0.0, 290.0, float(IMAGE_SIZE[1]))
    occ = tuple(Occlusion(s, s + 1.6, band) for s in (8.0, 17.0, 30.0, 38.0, 52.0))
    return Scenario(seed=seed, duration=60.0, camera_rate=25.0, sonar_rate=5.0,
                    waypoints=_walk(60.0, speed, heading, z), calibration=default_calibration(),
                    person=PersonModel(1.7), occlusions=occ, image=ImageParams(noise_std=3.0),
                    sonar=SonarParams(noise_std=0.02), name="outdoor")


def occlusion(seed: int = 3) -> Scenario:
    """Person standing still in front of a static robot; a board hides them for 2 s."""
    wp = np.array([[0.0, 3.0, 0.0, EMITTER_Z], [12.0, 3.0, 0.0, EMITTER_Z]])
    band = (150.0, 0.0, 330.0, float(IMAGE_SIZE[1]))
    return Scenario(seed=seed, duration=12.0, camera_rate=25.0, sonar_rate=5.0, waypoints=wp,
                    calibration=default_calibration(), occlusions=(Occlusion(4.0, 6.0, band),),
                    robot=RobotParams(follow=False), name="occlusion")


def depth_doubling(seed: int = 5) -> Scenario:
    """Straight walk away from a static robot, doubling the depth."""
    wp = np.array([[0.0, 2.4, 0.0, EMITTER_Z], [2.0, 2.4, 0.0, EMITTER_Z],
                   [14.0, 4.8, 0.0, EMITTER_Z], [16.0, 4.8, 0.0, EMITTER_Z]])
    return Scenario(seed=seed, duration=16.0, camera_rate=25.0, sonar_rate=5.0, waypoints=wp,
                    calibration=default_calibration(), robot=RobotParams(follow=False),
                    name="depth_doubling")


def noiseless(seed: int = 1) -> Scenario:
    """No pixel or sonar noise, no occlusion, gentle walk."""
    def speed(t):
        return 0.5 * (_smoothstep(t, 2, 4) - _smoothstep(t, 14, 16))

    def heading(t):
        return 0.3 * np.sin(2 * np.pi * t / 20.0)

    def z(t):
        return EMITTER_Z + 0.1 * np.sin(2 * np.pi * t / 10.0)

    return Scenario(seed=seed, duration=20.0, camera_rate=25.0, sonar_rate=5.0,
                    waypoints=_walk(20.0, speed, heading, z), calibration=default_calibration(),
                    image=ImageParams(noise_std=0.0), sonar=SonarParams(noise_std=0.0),
                    name="noiseless")


PRESETS = {"outdoor": outdoor, "occlusion": occlusion, "depth_doubling": depth_doubling,
           "noiseless": noiseless}
