import numpy as np
import pytest

from fusetrack.camera import CameraCalibration


def identity_calibration(fx=500.0, fy=500.0, cx=320.0, cy=240.0, size=(640, 480)):
    A = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
    return CameraCalibration(A, np.hstack([np.eye(3), np.zeros((3, 1))]), size)


@pytest.fixture
def ident_cal():
    return identity_calibration()


@pytest.fixture
def robot_cal():
    # forward-looking camera at the robot origin
    return CameraCalibration.forward_looking(500.0, 500.0, 320.0, 240.0, (640, 480))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
