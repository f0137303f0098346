"""scikit-learn style front ends over the measurement pipeline.

Hyper-parameters go to ``__init__`` untouched; everything is validated in
``fit``. Fitted state ends in an underscore, so ``check_is_fitted`` and
``clone`` work as usual.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .calibration import CalibrationResult, calibrate_camera_to_fork
from .edges import DEFAULT_EDGE_THRESHOLD, DEFAULT_RATIO_THRESHOLD
from .errors import CalibrationMissing, ConfigError, DimensionMismatch
from .geometry import CameraModel, RigidTransform, default_camera
from .panorama import PanoramaSpec, build_panorama
from .pitch import PalletPose, PitchResult, measure_pitch
from .pose_search import DEFAULT_DETECT_THRESHOLD
from .specs import PalletSpec, PanelSpec
from .tolerance import InsertionGeometry, clearance_terms, tolerance_region


def _camera(camera) -> CameraModel:
    if camera is None:
        return default_camera()
    if isinstance(camera, dict):
        return CameraModel.from_dict(camera)
    if not isinstance(camera, CameraModel):
        raise ConfigError("camera must be a CameraModel, a dict or None")
    return camera


def _check_threshold(name, value):
    if not (0.0 < float(value) <= 1.0):
        raise ConfigError(f"{name} must lie in (0, 1], got {value}")


def _images(X, camera: CameraModel) -> list:
    """A single 2-D image or a stack / sequence of them, each checked against the camera size."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    elif isinstance(X, np.ndarray) and X.ndim == 3:
        X = list(X)
    out = []
    for img in X:
        img = check_array(img, dtype=None, ensure_min_samples=2, ensure_min_features=2)
        if img.shape != (camera.height, camera.width):
            raise DimensionMismatch(f"image {img.shape} does not match the camera "
                                    f"({camera.height}, {camera.width})")
        out.append(img)
    return out


class PanoramaTransformer(TransformerMixin, BaseEstimator):
    """Wide-angle images to equirectangular panoramas about a camera axis.

    Parameters
    ----------
    camera : CameraModel, dict or None
        Intrinsics; ``None`` uses :func:`default_camera`.
    axis : {"x", "y", "z"}
        Pseudo-vertical camera axis of the panorama.
    width : int
        Panorama width; the height is half of it.
    """

    def __init__(self, camera=None, axis: str = "z", width: int = 2048):
        self.camera = camera
        self.axis = axis
        self.width = width

    def fit(self, X=None, y=None):
        if str(self.axis).lower() not in ("x", "y", "z"):
            raise ConfigError(f"axis must be x, y or z, got {self.axis!r}")
        if int(self.width) < 4 or int(self.width) % 2:
            raise ConfigError("panorama width must be an even number >= 4")
        self.camera_ = _camera(self.camera)
        self.spec_ = PanoramaSpec.about(self.axis, int(self.width), int(self.width) // 2)
        return self

    def transform(self, X) -> np.ndarray:
        """Stack of float panoramas, shape ``(n, width // 2, width)``."""
        check_is_fitted(self, "spec_")
        imgs = _images(X, self.camera_)
        return np.stack([build_panorama(im, self.camera_, self.spec_).intensity for im in imgs])


class PanelCalibrator(TransformerMixin, BaseEstimator):
    """Camera-to-fork calibration from one image of a panel lying on the forks.

    After :meth:`fit`, :meth:`transform` maps camera-frame points (``n x 3``)
    into the fork frame.
    """

    def __init__(self, camera=None, panel: PanelSpec | None = None, use_shift: bool = True,
                 edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
                 ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
                 detect_threshold: float = DEFAULT_DETECT_THRESHOLD):
        self.camera = camera
        self.panel = panel
        self.use_shift = use_shift
        self.edge_threshold = edge_threshold
        self.ratio_threshold = ratio_threshold
        self.detect_threshold = detect_threshold

    def fit(self, X, y=None):
        """Calibrate from ``X``, one panel image (2-D array or a length-1 stack)."""
        _check_threshold("ratio_threshold", self.ratio_threshold)
        _check_threshold("detect_threshold", self.detect_threshold)
        camera = _camera(self.camera)
        imgs = _images(X, camera)
        if len(imgs) != 1:
            raise ConfigError("calibration uses exactly one panel image")
        panel = self.panel if self.panel is not None else PanelSpec()
        res = calibrate_camera_to_fork(imgs[0], camera, panel, bool(self.use_shift),
                                       detect_threshold=self.detect_threshold,
                                       edge_threshold=self.edge_threshold,
                                       ratio_threshold=self.ratio_threshold)
        self.result_: CalibrationResult = res
        self.camera_to_fork_: RigidTransform = res.camera_to_fork
        self.residual_ = res.residual
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "camera_to_fork_")
        pts = check_array(X, dtype=float)
        if pts.shape[1] != 3:
            raise DimensionMismatch("expected n x 3 camera-frame points")
        return self.camera_to_fork_.apply_points(pts)


class PalletPitchEstimator(BaseEstimator):
    """Pallet pitch (degrees, front up positive) from wide-angle images.

    Parameters
    ----------
    camera : CameraModel, dict or None
    calibration : RigidTransform
        Camera-to-fork transform, e.g. ``PanelCalibrator().fit(img).camera_to_fork_``.
    pallet : PalletSpec or None
    prior : PalletPose, dict or None
        Rough pallet pose in the fork frame; the search covers +-150 mm
        and +-5 deg of yaw around it.
    """

    def __init__(self, camera=None, calibration: RigidTransform | None = None,
                 pallet: PalletSpec | None = None, prior=None, use_shift: bool = False,
                 edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
                 ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
                 detect_threshold: float = DEFAULT_DETECT_THRESHOLD):
        self.camera = camera
        self.calibration = calibration
        self.pallet = pallet
        self.prior = prior
        self.use_shift = use_shift
        self.edge_threshold = edge_threshold
        self.ratio_threshold = ratio_threshold
        self.detect_threshold = detect_threshold

    def fit(self, X=None, y=None):
        """Validate the configuration; the pipeline has nothing to learn from data."""
        _check_threshold("ratio_threshold", self.ratio_threshold)
        _check_threshold("detect_threshold", self.detect_threshold)
        if self.calibration is None:
            raise CalibrationMissing("a camera-to-fork calibration is required")
        if not isinstance(self.calibration, RigidTransform):
            raise ConfigError("calibration must be a RigidTransform")
        self.camera_ = _camera(self.camera)
        self.calibration_ = self.calibration
        self.pallet_ = self.pallet if self.pallet is not None else PalletSpec()
        prior = self.prior
        if prior is None:
            prior = PalletPose(200.0, 0.0, 300.0)
        elif isinstance(prior, dict):
            prior = PalletPose.from_dict(prior)
        self.prior_ = prior
        return self

    def measure(self, image) -> PitchResult:
        """Full result for one image."""
        check_is_fitted(self, "calibration_")
        (img,) = _images(image, self.camera_)
        return measure_pitch(img, self.camera_, self.calibration_, self.pallet_, self.prior_,
                             use_shift=bool(self.use_shift),
                             detect_threshold=self.detect_threshold,
                             edge_threshold=self.edge_threshold,
                             ratio_threshold=self.ratio_threshold)

    def predict(self, X) -> np.ndarray:
        """Pitch in degrees for each image."""
        check_is_fitted(self, "calibration_")
        return np.array([self.measure(im).pitch_deg for im in _images(X, self.camera_)])

    def score(self, X, y) -> float:
        """Negative mean absolute pitch error in degrees (higher is better)."""
        y = np.asarray(y, dtype=float).ravel()
        return -float(np.mean(np.abs(self.predict(X) - y)))


class InsertionSafetyClassifier(ClassifierMixin, BaseEstimator):
    """Straight-insertion safety of pose errors.

    ``X`` rows are ``(dz_mm, dtheta_deg)`` or ``(dx_mm, dz_mm, dtheta_deg)``;
    ``dx`` does not enter the decision. :meth:`decision_function` is the
    smallest of the four clearance margins in mm (positive means safe).
    """

    def __init__(self, ph: float = 90.0, ft: float = 36.0, fl: float = 1070.0):
        self.ph = ph
        self.ft = ft
        self.fl = fl

    def fit(self, X=None, y=None):
        try:
            self.geometry_ = InsertionGeometry(float(self.ph), float(self.ft), float(self.fl))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.classes_ = np.array([False, True])
        return self

    def _split(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] == 3:
            X = X[:, 1:]
        if X.shape[1] != 2:
            raise DimensionMismatch("rows must be (dz, dtheta) or (dx, dz, dtheta)")
        if np.any(np.abs(X[:, 1]) >= 90.0):
            raise ValueError("|dtheta| must be below 90 degrees")
        return X[:, 0], X[:, 1]

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "geometry_")
        dz, th = self._split(X)
        return np.min(np.stack(clearance_terms(self.geometry_, dz, th)), axis=0)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X) > 0

    def region(self, theta_range=(-2.0, 2.0), theta_step: float = 0.05) -> np.ndarray:
        """Rows ``(theta_deg, z_min_mm, z_max_mm)`` of the safe set; NaN where empty."""
        check_is_fitted(self, "geometry_")
        return np.array(tolerance_region(self.geometry_, theta_range, theta_step))
