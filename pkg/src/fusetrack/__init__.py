"""3-D person tracking from a monocular camera and an ultrasonic array."""

from .camera import (BoundingBox, CameraCalibration, PersonModel, initial_bbox,
                     person_anchor_points, project_point)
from .ekf import Measurement, TargetState3D, predict, step, update
from .harness import RunReport, compute_errors, emit_plots, run_pipeline

__version__ = "0.1.0"
