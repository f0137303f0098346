"""Physical descriptions of pallets, cargo and the calibration panel."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pose_search import Hole, PlanarModel


@dataclass(frozen=True)
class CargoBox:
    width: float = 1140.0
    depth: float = 1100.0
    height: float = 900.0

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError("cargo dimensions must be positive")


@dataclass(frozen=True)
class PalletSpec:
    """Two-way entry pallet; frame origin at the front-face centre (slot mid-height).

    X points into the pallet (away from the forklift), Y left, Z up. Top and
    bottom decks have equal thickness, so the slots are vertically centred.
    ``slots`` holds ``(centre_y, width)`` pairs in mm.
    """

    width: float = 1100.0
    depth: float = 1100.0
    height: float = 150.0
    slot_height: float = 90.0
    slots: tuple = ((-300.0, 400.0), (300.0, 400.0))
    cargo: CargoBox | None = None

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple((float(c), float(w)) for c, w in self.slots))
        if min(self.width, self.depth, self.height, self.slot_height) <= 0:
            raise ValueError("pallet dimensions must be positive")
        if self.slot_height >= self.height:
            raise ValueError("slot height must be below the overall height")
        for c, w in self.slots:
            if w <= 0 or abs(c) + w / 2 > self.width / 2:
                raise ValueError("slot outside the pallet width")

    @property
    def deck(self) -> float:
        return (self.height - self.slot_height) / 2.0

    def face_model(self) -> PlanarModel:
        holes = tuple(Hole(c, 0.0, w, self.slot_height) for c, w in self.slots)
        return PlanarModel(self.width, self.height, holes, plane="yz")

    def boxes(self) -> list:
        """Solid parts as ``(lo, hi)`` corner pairs in the pallet frame."""
        W, D, H, P = self.width / 2, self.depth, self.height / 2, self.slot_height / 2
        parts = [((0.0, -W, P), (D, W, H)), ((0.0, -W, -H), (D, W, -P))]
        edges = sorted([-W, W] + [c - w / 2 for c, w in self.slots] + [c + w / 2 for c, w in self.slots])
        # stringers fill the gaps between consecutive slot boundaries
        for lo, hi in zip(edges[0::2], edges[1::2]):
            if hi - lo > 1e-9:
                parts.append(((0.0, lo, -P), (D, hi, P)))
        return parts

    def cargo_box(self) -> tuple:
        c = self.cargo if self.cargo is not None else CargoBox()
        H = self.height / 2
        return ((0.0, -c.width / 2, H), (c.depth, c.width / 2, H + c.height))

    def to_dict(self) -> dict:
        d = {
            "width_mm": self.width, "depth_mm": self.depth, "height_mm": self.height,
            "slot_height_mm": self.slot_height,
            "slots": [{"center_mm": c, "width_mm": w} for c, w in self.slots],
        }
        if self.cargo is not None:
            d["cargo"] = {"width_mm": self.cargo.width, "depth_mm": self.cargo.depth,
                          "height_mm": self.cargo.height}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PalletSpec":
        cargo = d.get("cargo")
        kw = {}
        if "slots" in d:
            kw["slots"] = tuple((s["center_mm"], s["width_mm"]) for s in d["slots"])
        return cls(
            width=float(d.get("width_mm", 1100.0)), depth=float(d.get("depth_mm", 1100.0)),
            height=float(d.get("height_mm", 150.0)), slot_height=float(d.get("slot_height_mm", 90.0)),
            cargo=CargoBox(cargo["width_mm"], cargo["depth_mm"], cargo["height_mm"]) if cargo else None,
            **kw,
        )


@dataclass(frozen=True)
class PanelSpec:
    """Rectangular calibration panel lying on the forks.

    ``height`` runs along the fork X axis, ``width`` along Y. The panel frame
    origin is the centre of its top face; ``offset`` leads from there to the
    fork origin (front lateral edge centre, on the fork top surface).
    """

    width: float = 900.0
    height: float = 1100.0
    thickness: float = 5.0
    offset: tuple = field(default=None)

    def __post_init__(self):
        if min(self.width, self.height) <= 0 or self.thickness < 0:
            raise ValueError("panel dimensions must be positive")
        off = self.offset if self.offset is not None else (self.height / 2, 0.0, -self.thickness)
        off = tuple(float(x) for x in off)
        if abs(off[0] - self.height / 2) > 1e-9:
            raise ValueError("the fork origin must sit on the panel's front lateral edge")
        object.__setattr__(self, "offset", off)

    def model(self) -> PlanarModel:
        return PlanarModel(self.width, self.height, (), plane="xy")

    def to_dict(self) -> dict:
        return {"width_mm": self.width, "height_mm": self.height,
                "thickness_mm": self.thickness, "offset_mm": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "PanelSpec":
        return cls(float(d.get("width_mm", 900.0)), float(d.get("height_mm", 1100.0)),
                   float(d.get("thickness_mm", 5.0)),
                   tuple(d["offset_mm"]) if "offset_mm" in d else None)


def box_corners(lo, hi) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    idx = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    return np.where(idx == 0, lo, hi)
