"""Pallet pitch measurement from one wide-angle image.

Also covers one-shot camera-to-fork calibration with a panel lying on the
forks and the clearance check for a straight fork insertion.
"""
from .calibration import CalibrationResult, calibrate_camera_to_fork, shift_error_prediction
from .errors import (
    CalibrationMissing,
    ConfigError,
    DetectionFailure,
    NotDetected,
    NoValidHypothesis,
    PalletPitchError,
)
from .estimators import (
    InsertionSafetyClassifier,
    PalletPitchEstimator,
    PanelCalibrator,
    PanoramaTransformer,
)
from .geometry import CameraModel, RigidTransform, ViewpointShiftCurve, default_camera
from .pitch import PalletPose, PitchResult, measure_pitch
from .specs import CargoBox, PalletSpec, PanelSpec
from .synthetic import SyntheticScene, render_scene
from .tolerance import InsertionError, InsertionGeometry, is_safe_insertion, tolerance_region

__version__ = "0.1.0"

__all__ = [
    "CalibrationMissing", "CalibrationResult", "CameraModel", "CargoBox", "ConfigError",
    "DetectionFailure", "InsertionError", "InsertionGeometry", "InsertionSafetyClassifier",
    "NoValidHypothesis", "NotDetected", "PalletPitchError", "PalletPitchEstimator", "PalletPose",
    "PalletSpec", "PanelCalibrator", "PanelSpec", "PanoramaTransformer", "PitchResult",
    "RigidTransform", "SyntheticScene", "ViewpointShiftCurve", "calibrate_camera_to_fork",
    "default_camera", "is_safe_insertion", "measure_pitch", "render_scene",
    "shift_error_prediction", "tolerance_region",
]
