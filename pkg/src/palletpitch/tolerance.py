"""Clearance conditions for a straight fork insertion into a pallet slot.

A fork of thickness FT and length FL enters a slot of height PH with a
height error dZ and a tilt error dTheta. The fork's front (root) section
and its tip must both stay strictly inside the slot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class InsertionGeometry:
    ph: float = 90.0
    ft: float = 36.0
    fl: float = 1070.0

    def __post_init__(self):
        if not (0 < self.ft < self.ph):
            raise ValueError("fork thickness must be positive and below the slot height")
        if self.fl <= 0:
            raise ValueError("fork length must be positive")

    @property
    def clearance(self) -> float:
        """Vertical play at zero tilt, (PH - FT) / 2."""
        return (self.ph - self.ft) / 2.0


@dataclass(frozen=True)
class InsertionError:
    dx: float
    dz: float
    dtheta_deg: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dz, self.dtheta_deg)):
            raise ValueError("insertion error must be finite")
        if abs(self.dtheta_deg) >= 90.0:
            raise ValueError("|dtheta| must be below 90 degrees")


def reach_height_coupling(dx: float, dtheta_deg: float) -> float:
    """Height change picked up over a reach error ``dx`` at tilt ``dtheta_deg``."""
    if abs(dtheta_deg) >= 90.0:
        raise ValueError("|dtheta| must be below 90 degrees")
    return dx * math.tan(math.radians(dtheta_deg))


def clearance_terms(geom: InsertionGeometry, dz, dtheta_deg):
    """Left-minus-right margins of the four strict inequalities (all must be > 0)."""
    th = np.radians(dtheta_deg)
    half = geom.ft / 2.0 * np.cos(th)
    tip = geom.fl * np.sin(th)
    lim = geom.ph / 2.0
    return (
        (dz - half) + lim,
        lim - (dz + half),
        (dz - half + tip) + lim,
        lim - (dz + half + tip),
    )


def is_safe_insertion(geom: InsertionGeometry, err: InsertionError) -> bool:
    """True iff all four clearance inequalities hold strictly. ``dx`` is ignored."""
    return all(float(t) > 0 for t in clearance_terms(geom, err.dz, err.dtheta_deg))


def safe_mask(geom: InsertionGeometry, dz, dtheta_deg) -> np.ndarray:
    """Vectorised :func:`is_safe_insertion` over broadcast ``dz`` / ``dtheta_deg`` arrays."""
    t1, t2, t3, t4 = clearance_terms(geom, np.asarray(dz, float), np.asarray(dtheta_deg, float))
    return (t1 > 0) & (t2 > 0) & (t3 > 0) & (t4 > 0)


def dz_interval(geom: InsertionGeometry, dtheta_deg):
    """Open interval ``(z_min, z_max)`` of safe dZ at each tilt; NaN where empty."""
    th = np.radians(np.asarray(dtheta_deg, dtype=float))
    half = geom.ft / 2.0 * np.cos(th)
    tip = geom.fl * np.sin(th)
    lim = geom.ph / 2.0
    z_min = -lim + half + np.maximum(0.0, -tip)
    z_max = lim - half - np.maximum(0.0, tip)
    empty = z_min >= z_max
    return np.where(empty, np.nan, z_min), np.where(empty, np.nan, z_max)


def tolerance_region(geom: InsertionGeometry, theta_range=(-2.0, 2.0), theta_step: float = 0.05,
                     z_step: float | None = None) -> list:
    """Rows ``(theta_deg, z_min, z_max)`` describing the safe region.

    Without ``z_step`` the interval ends are exact. With ``z_step`` they are
    the extreme safe samples of a dZ grid of that spacing (useful as an
    independent check of the closed form). Empty intervals give NaN.
    """
    if theta_step <= 0 or (z_step is not None and z_step <= 0):
        raise ValueError("steps must be positive")
    lo, hi = float(theta_range[0]), float(theta_range[1])
    n = int(math.floor((hi - lo) / theta_step + 1e-9))
    thetas = lo + np.arange(n + 1) * theta_step
    if z_step is None:
        z_min, z_max = dz_interval(geom, thetas)
        return [(float(t), float(a), float(b)) for t, a, b in zip(thetas, z_min, z_max)]
    k = int(math.ceil(geom.ph / 2.0 / z_step))
    zs = np.arange(-k, k + 1) * z_step
    ok = safe_mask(geom, zs[None, :], thetas[:, None])
    rows = []
    for t, row in zip(thetas, ok):
        if row.any():
            rows.append((float(t), float(zs[row].min()), float(zs[row].max())))
        else:
            rows.append((float(t), math.nan, math.nan))
    return rows


def max_safe_tilt(geom: InsertionGeometry, dz: float = 0.0) -> float:
    """Largest positive tilt (deg) that is still safe at height error ``dz``; bisection."""
    lo, hi = 0.0, 89.0
    if not bool(safe_mask(geom, dz, 0.0)):
        return math.nan
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if bool(safe_mask(geom, dz, mid)):
            lo = mid
        else:
            hi = mid
    return lo
