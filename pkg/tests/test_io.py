import json
import math

import numpy as np
import pytest

from palletpitch import io
from palletpitch.errors import ConfigError
from palletpitch.geometry import RigidTransform, default_camera, pitch_yaw_rotation
from palletpitch.specs import CargoBox, PalletSpec, PanelSpec


def test_json_nan_becomes_null(tmp_path):
    p = tmp_path / "x.json"
    io.write_json(p, {"a": math.nan, "b": np.float64(1.5), "c": np.arange(2)})
    assert json.loads(p.read_text()) == {"a": None, "b": 1.5, "c": [0, 1]}


def test_missing_and_invalid(tmp_path):
    with pytest.raises(ConfigError):
        io.read_json(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        io.read_json(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        io.read_json(bad)


def test_camera_round_trip(tmp_path):
    p = tmp_path / "cam.json"
    io.write_json(p, default_camera().to_dict())
    assert io.load_camera(p).to_dict() == default_camera().to_dict()
    io.write_json(p, {"width": 10})
    with pytest.raises(ConfigError):
        io.load_camera(p)


def test_calibration_accepts_inverse_and_truth(tmp_path):
    T = RigidTransform(pitch_yaw_rotation(1.0, 2.0), [1.0, 2.0, 3.0], "camera", "fork")
    p = tmp_path / "c.json"
    io.write_json(p, T.inverse().to_dict())
    assert np.allclose(io.load_calibration(p).translation, T.translation)
    io.write_json(p, {"camera_to_fork": T.to_dict(), "loaded": False})
    assert np.allclose(io.load_calibration(p).rotation, T.rotation)
    io.write_json(p, RigidTransform(np.eye(3), np.zeros(3), "pallet", "camera").to_dict())
    with pytest.raises(ConfigError):
        io.load_calibration(p)


def test_specs_round_trip(tmp_path):
    p = tmp_path / "s.json"
    spec = PalletSpec(cargo=CargoBox())
    io.write_json(p, spec.to_dict())
    assert io.load_pallet(p) == spec
    io.write_json(p, PanelSpec(width=800.0).to_dict())
    assert io.load_panel(p) == PanelSpec(width=800.0)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_image_round_trip(tmp_path, suffix):
    img = (np.arange(120).reshape(10, 12) * 2).astype(np.uint8)
    p = tmp_path / f"i{suffix}"
    io.write_image(p, img)
    assert np.array_equal(io.read_image(p), img)


def test_image_errors(tmp_path):
    with pytest.raises(ConfigError):
        io.write_image(tmp_path / "i.jpg", np.zeros((2, 2), np.uint8))
    with pytest.raises(ConfigError):
        io.read_image(tmp_path / "missing.png")
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"not an image")
    with pytest.raises(ConfigError):
        io.read_image(junk)
