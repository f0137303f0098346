"""Exception hierarchy shared by all measurement stages."""


class PalletPitchError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(PalletPitchError):
    pass


class OutOfFieldOfView(GeometryError):
    pass


class OutOfImage(GeometryError):
    pass


class NonInvertibleModel(GeometryError):
    pass


class DegenerateAxes(GeometryError):
    pass


class FrameMismatch(GeometryError):
    pass


class OutOfBounds(GeometryError):
    pass


class DimensionMismatch(PalletPitchError):
    pass


class RegionOutOfPanorama(PalletPitchError):
    pass


class NothingVisible(PalletPitchError):
    pass


class DetectionFailure(PalletPitchError):
    """Raised when the image does not support a measurement (CLI exit code 2)."""


class NotDetected(DetectionFailure):
    pass


# the measurement pipeline reports the same condition under this name
PalletNotDetected = NotDetected


class NoEdges(DetectionFailure):
    pass


class NoValidHypothesis(DetectionFailure):
    pass


class CalibrationMissing(PalletPitchError):
    pass


class ConfigError(PalletPitchError):
    """Malformed or inconsistent configuration (CLI exit code 3)."""


class PoleAmbiguity(UserWarning):
    """Longitude is undefined for a ray along the panorama pole."""
