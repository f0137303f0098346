"""File formats: JSON configs and results, 8-bit grayscale PNG/PGM images."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .geometry import CameraModel, RigidTransform
from .specs import PalletSpec, PanelSpec

IMAGE_SUFFIXES = (".png", ".pgm")


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{p}: file not found")
    try:
        with p.open() as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a JSON object")
    return data


def _clean(obj):
    # NaN is not valid JSON; emit null instead
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def _parse(loader, path, what):
    d = read_json(path)
    try:
        return loader(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad {what} ({exc!r})") from exc


def load_camera(path) -> CameraModel:
    return _parse(CameraModel.from_dict, path, "camera intrinsics")


def load_transform(path) -> RigidTransform:
    return _parse(RigidTransform.from_dict, path, "transform")


def load_calibration(path) -> RigidTransform:
    """Camera-to-fork transform from a calibration file (or the truth file of a render)."""
    d = read_json(path)
    if "rotation" not in d and "camera_to_fork" in d:
        d = d["camera_to_fork"]
    try:
        T = RigidTransform.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad calibration ({exc!r})") from exc
    if (T.from_frame, T.to_frame) == ("fork", "camera"):
        T = T.inverse()
    if (T.from_frame, T.to_frame) != ("camera", "fork"):
        raise ConfigError(f"{path}: calibration must relate the camera and fork frames")
    return T


def load_pallet(path) -> PalletSpec:
    return _parse(PalletSpec.from_dict, path, "pallet spec")


def load_panel(path) -> PanelSpec:
    return _parse(PanelSpec.from_dict, path, "panel spec")


def read_image(path) -> np.ndarray:
    """8-bit grayscale image as a 2-D uint8 array; colour input is converted to luma."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{p}: image not found")
    try:
        with Image.open(p) as im:
            if im.mode not in ("L", "P", "RGB", "RGBA", "LA", "1"):
                raise ConfigError(f"{p}: unsupported image mode {im.mode}")
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise ConfigError(f"{p}: unreadable image ({exc})") from exc


def write_image(path, image) -> None:
    p = Path(path)
    if p.suffix.lower() not in IMAGE_SUFFIXES:
        raise ConfigError(f"{p}: image output must be .png or .pgm")
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(p)
