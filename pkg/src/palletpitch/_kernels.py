"""Compiled inner loop of the pose search.

Projects every template sample for every candidate position, looks up the
edge distance and reduces to the ranking score and the 2 px fraction,
without materialising the (poses x samples) intermediates.
"""
from __future__ import annotations

import math

import numba
import numpy as np

_FAR = 1e3


@numba.njit(cache=True, fastmath=False)
def _interp_clamped(x, xs, ys):
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    for i in range(1, n):
        if x <= xs[i]:
            f = (x - xs[i - 1]) / (xs[i] - xs[i - 1])
            return ys[i - 1] + f * (ys[i] - ys[i - 1])
    return ys[n - 1]


@numba.njit(cache=True)
def _distance_at(dist, u, v, bilinear):
    H, W = dist.shape
    if not (u >= 0.0 and v >= 0.0 and u <= W - 1 and v <= H - 1):
        return _FAR
    if not bilinear:
        return dist[int(math.floor(v + 0.5)), int(math.floor(u + 0.5))]
    u0 = min(int(math.floor(u)), W - 2)
    v0 = min(int(math.floor(v)), H - 2)
    fu = u - u0
    fv = v - v0
    return ((1.0 - fv) * ((1.0 - fu) * dist[v0, u0] + fu * dist[v0, u0 + 1])
            + fv * ((1.0 - fu) * dist[v0 + 1, u0] + fu * dist[v0 + 1, u0 + 1]))


@numba.njit(cache=True)
def score_kernel(dist, pts, positions, cx, cy, poly, affine, theta_max, shift_deg, shift_mm,
                 tolerance, reach, kernel_weight, bilinear):
    m = positions.shape[0]
    n = pts.shape[0]
    rank = np.empty(m)
    frac = np.empty(m)
    c, d, e = affine[0], affine[1], affine[2]
    use_shift = shift_deg.shape[0] > 0
    for j in range(m):
        hits = 0
        acc = 0.0
        for i in range(n):
            x = pts[i, 0] + positions[j, 0]
            y = pts[i, 1] + positions[j, 1]
            z = pts[i, 2] + positions[j, 2]
            r = math.hypot(y, z)
            theta = math.atan2(r, x)
            if use_shift:
                x = x - _interp_clamped(math.degrees(theta), shift_deg, shift_mm)
                theta = math.atan2(r, x)
            if theta > theta_max + 1e-12:
                dd = _FAR
            else:
                rho = 0.0
                for k in range(poly.shape[0] - 1, -1, -1):
                    rho = rho * theta + poly[k]
                scale = rho / r if r > 0 else 0.0
                mx = -y * scale
                my = -z * scale
                dd = _distance_at(dist, c * mx + d * my + cx, e * mx + my + cy, bilinear)
            if dd <= tolerance:
                hits += 1
            w = 1.0 - dd / reach
            if w > 0.0:
                acc += w
        frac[j] = hits / n
        rank[j] = frac[j] + kernel_weight * acc / n
    return rank, frac


def camera_arrays(camera):
    if camera.shift_curve is None:
        sd = np.zeros(0)
        sm = np.zeros(0)
    else:
        sd = np.asarray(camera.shift_curve.angles_deg, dtype=float)
        sm = np.asarray(camera.shift_curve.offsets_mm, dtype=float)
    return (float(camera.cx), float(camera.cy), np.asarray(camera.poly, dtype=float),
            np.asarray(camera.affine, dtype=float), float(camera.theta_max), sd, sm)
