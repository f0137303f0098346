"""Edge extraction on panoramas and 3D direction recovery of parallel lines.

The direction search is a Hough accumulator over candidate poles. For each
candidate pole every edge ray gets the longitude it would have in a
panorama about that pole; rays of a 3D line parallel to the pole all share
one longitude, so the true direction concentrates votes in a single bin in
each of the two regions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import RegionOutOfPanorama
from .geometry import angle_between, unit
from .panorama import PanoramaImage, PanoramaSpec, pano_pixel_to_ray, ray_to_pano_pixel

DEFAULT_EDGE_THRESHOLD = 40.0 / 255.0
DEFAULT_RATIO_THRESHOLD = 0.5

# a full-scale (0 -> 255) step gives a normalised Sobel magnitude of 1
_SOBEL_NORM = 4.0 * 255.0


@dataclass(frozen=True)
class PredictedRegion:
    """Inclusive pixel rectangle in a panorama plus the ideal line length in px."""

    u_min: int
    u_max: int
    v_min: int
    v_max: int
    expected_line_height: float

    def __post_init__(self):
        if self.u_max < self.u_min or self.v_max < self.v_min:
            raise ValueError("empty region")
        if not self.expected_line_height > 0:
            raise ValueError("expected_line_height must be positive")

    @property
    def shape(self) -> tuple:
        return (self.v_max - self.v_min + 1, self.u_max - self.u_min + 1)

    def check_inside(self, spec: PanoramaSpec) -> None:
        if self.u_min < 0 or self.v_min < 0 or self.u_max >= spec.width or self.v_max >= spec.height:
            raise RegionOutOfPanorama("region exceeds panorama bounds")


def segment_track(seg_cam, spec: PanoramaSpec, n: int = 64):
    """Panorama pixels along a camera-frame 3D segment."""
    seg_cam = np.asarray(seg_cam, dtype=float)
    s = np.linspace(0.0, 1.0, n)[:, None]
    u, v = ray_to_pano_pixel(spec, unit(seg_cam[0] + s * (seg_cam[1] - seg_cam[0])))
    u, v = np.asarray(u), np.asarray(v)
    if np.any(np.abs(np.diff(u)) > spec.width / 2):
        raise RegionOutOfPanorama("segment straddles the panorama seam")
    return u, v


def region_around_segments(variants, spec: PanoramaSpec, margin_px: float = 8.0) -> PredictedRegion:
    """Bounding rectangle of the tracks of several placements of one segment.

    ``variants`` are camera-frame segments; the first is the nominal one and
    sets the expected line height (its vertical extent in pixels).
    """
    us, vs = [], []
    for seg in variants:
        u, v = segment_track(seg, spec)
        us.append(u)
        vs.append(v)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    region = PredictedRegion(
        int(math.floor(u.min() - margin_px)), int(math.ceil(u.max() + margin_px)),
        int(math.floor(v.min() - margin_px)), int(math.ceil(v.max() + margin_px)),
        max(float(vs[0].max() - vs[0].min()), 1.0))
    region.check_inside(spec)
    return region


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Edges inside one predicted region; arrays are region-shaped."""

    spec: PanoramaSpec
    region: PredictedRegion
    magnitude: np.ndarray
    orientation: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_pixels(cls, spec: PanoramaSpec, region: PredictedRegion, u, v, weights=None) -> "EdgeMap":
        """Edge map with exactly the given panorama pixels set (for constructed inputs)."""
        shape = region.shape
        mask = np.zeros(shape, dtype=bool)
        mag = np.zeros(shape)
        rows = np.asarray(v, dtype=int) - region.v_min
        cols = np.asarray(u, dtype=int) - region.u_min
        mask[rows, cols] = True
        mag[rows, cols] = 1.0 if weights is None else weights
        return cls(spec, region, mag, np.zeros(shape), mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def pixels(self):
        rows, cols = np.nonzero(self.mask)
        return cols + self.region.u_min, rows + self.region.v_min

    def rays(self) -> np.ndarray:
        u, v = self.pixels()
        return pano_pixel_to_ray(self.spec, u, v, strict=False)

    def weights(self) -> np.ndarray:
        return self.magnitude[self.mask]

    def across_weights(self, max_angle_deg: float = 35.0) -> np.ndarray:
        """Magnitudes of edge pixels whose gradient is within ``max_angle_deg`` of horizontal.

        Those belong to near-vertical (meridian-like) lines; the rest get 0.
        """
        ori = self.orientation[self.mask]
        return np.where(np.abs(np.cos(ori)) >= math.cos(math.radians(max_angle_deg)),
                        self.weights(), 0.0)

    def row_pairs(self):
        """Index pairs (into :meth:`pixels` order) of horizontally adjacent edge pixels."""
        idx = np.full(self.mask.shape, -1, dtype=np.int64)
        idx[self.mask] = np.arange(self.count)
        left = idx[:, :-1]
        right = idx[:, 1:]
        both = (left >= 0) & (right >= 0)
        return left[both], right[both]

    def without(self, keep: np.ndarray) -> "EdgeMap":
        """Copy keeping only edge pixels flagged in ``keep`` (ordered like :meth:`pixels`)."""
        mask = np.zeros_like(self.mask)
        rows, cols = np.nonzero(self.mask)
        mask[rows[keep], cols[keep]] = True
        return EdgeMap(self.spec, self.region, self.magnitude, self.orientation, mask)


def sobel_gradients(image: np.ndarray):
    img = np.asarray(image, dtype=float)
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return np.hypot(gx, gy) / _SOBEL_NORM, np.arctan2(gy, gx)


def detect_edges(panorama: PanoramaImage, region: PredictedRegion,
                 edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> EdgeMap:
    """3x3 Sobel edges inside ``region``, thresholded on normalised magnitude."""
    region.check_inside(panorama.spec)
    H, W = panorama.intensity.shape
    v0, v1 = max(region.v_min - 1, 0), min(region.v_max + 2, H)
    u0, u1 = max(region.u_min - 1, 0), min(region.u_max + 2, W)
    crop = panorama.intensity[v0:v1, u0:u1]
    mag, ori = sobel_gradients(crop)
    # keep away from the field-of-view border, where the zero fill makes a step
    valid = ndimage.binary_erosion(panorama.valid[v0:v1, u0:u1], iterations=1, border_value=1)
    rs = slice(region.v_min - v0, region.v_min - v0 + region.shape[0])
    cs = slice(region.u_min - u0, region.u_min - u0 + region.shape[1])
    mag = mag[rs, cs]
    ori = ori[rs, cs]
    mask = (mag >= edge_threshold) & valid[rs, cs]
    return EdgeMap(panorama.spec, region, mag, ori, mask)


@dataclass(frozen=True, eq=False)
class LineDetection:
    direction: np.ndarray
    bins: tuple
    scores: tuple
    expected: tuple
    ratios: tuple
    valid: bool
    alpha_deg: float = 0.0
    beta_deg: float = 0.0
    status: str = "ok"
    accumulator: np.ndarray | None = field(default=None, repr=False)

    @property
    def score(self) -> int:
        return int(sum(self.scores))

    def to_dict(self) -> dict:
        return {
            "direction": [float(x) for x in self.direction],
            "scores": list(self.scores),
            "score_ratios": [float(r) for r in self.ratios],
            "valid": self.valid,
            "status": self.status,
        }


def line_validity(detection: LineDetection, ratio_threshold: float = DEFAULT_RATIO_THRESHOLD) -> bool:
    """True iff both regions reach the score ratio (inclusive)."""
    return all(r >= ratio_threshold for r in detection.ratios)


def _perpendicular(axis: np.ndarray, hint: np.ndarray) -> np.ndarray:
    b = hint - np.dot(hint, axis) * axis
    if np.linalg.norm(b) < 1e-6:
        e = np.eye(3)[int(np.argmin(np.abs(axis)))]
        b = e - np.dot(e, axis) * axis
    return unit(b)


def _candidate_frames(a, b, alphas, betas):
    """Poles tilted by alpha toward ``b`` and beta toward ``a x b``, with their reference axes."""
    c = np.cross(a, b)
    d = (a[None, :] + np.tan(alphas)[:, None] * b[None, :] + np.tan(betas)[:, None] * c[None, :])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    bp = b[None, :] - (d @ b)[:, None] * d
    bp /= np.linalg.norm(bp, axis=1, keepdims=True)
    cp = np.cross(d, bp)
    return d, bp, cp


def _grid(values_deg: np.ndarray):
    aa, bb = np.meshgrid(values_deg, values_deg, indexing="ij")
    aa = aa.ravel()
    bb = bb.ravel()
    order = np.lexsort((bb, aa, np.abs(bb), np.abs(aa)))
    return aa[order], bb[order]


def _bins(rays, bp, cp, width):
    lon = np.arctan2(rays @ cp.T, rays @ bp.T)
    return np.floor((lon + math.pi) / width).astype(np.int64)


def _max_bin(bins: np.ndarray, nbins: int, pairs=None):
    """Per candidate (column) peak vote and the lowest bin achieving it.

    A bin gets one vote per panorama row: horizontally adjacent pixels
    (``pairs``) falling into the same bin count once, so a thick edge
    cannot outvote a thin one by folding its columns together.
    """
    n, k = bins.shape
    if n == 0:
        return np.zeros(k, dtype=np.int64), np.zeros(k, dtype=np.int64)
    offs = (np.arange(k) * nbins)[None, :]
    idx = bins + offs
    counts = np.bincount(idx.ravel(), minlength=k * nbins)
    if pairs is not None and len(pairs[0]):
        bi = bins[pairs[0]]
        same = bi == bins[pairs[1]]
        counts -= np.bincount((bi + offs)[same], minlength=k * nbins)
    counts = counts.reshape(k, nbins)
    return counts.max(axis=1), counts.argmax(axis=1)


def _accumulate(rays_l, rays_r, a, b, alphas_deg, betas_deg, width, pairs_l=None, pairs_r=None,
                chunk=1024):
    nbins = int(math.ceil(2 * math.pi / width)) + 1
    k = len(alphas_deg)
    out = np.zeros((4, k), dtype=np.int64)
    for s in range(0, k, chunk):
        sl = slice(s, s + chunk)
        _, bp, cp = _candidate_frames(a, b, np.radians(alphas_deg[sl]), np.radians(betas_deg[sl]))
        out[0, sl], out[1, sl] = _max_bin(_bins(rays_l, bp, cp, width), nbins, pairs_l)
        out[2, sl], out[3, sl] = _max_bin(_bins(rays_r, bp, cp, width), nbins, pairs_r)
    return out


def _plane_normal(rays, weights):
    M = (rays * weights[:, None]).T @ rays
    w, V = np.linalg.eigh(M)
    return V[:, 0], w


def _refine_direction(direction, a, b, groups, width, iterations: int = 8,
                      max_change_deg: float = 5.0, bands=(4, 2, 2, 2, 2, 2)):
    """Intersect great-circle planes fitted to each region's peak band.

    Each pass re-bins the rays about the current direction, keeps the peak
    bins around it per region (a wide band first, then one bin either
    side), fits a plane through the origin to the near-vertical edge pixels
    among them, weighted by gradient magnitude, and takes the cross product of the two
    normals. Falls back to the grid answer if the fit drifts too far.
    """
    nbins = int(math.ceil(2 * math.pi / width)) + 1
    d = direction
    for it in range(iterations):
        # wide band first so a grid pole that is off by a few bins still sees the whole line
        band = max(1, bands[it] if it < len(bands) else 1)
        bp = _perpendicular(d, b)
        cp = np.cross(d, bp)
        normals = []
        for rays, weights in groups:
            bins = _bins(rays, bp[None, :], cp[None, :], width)[:, 0]
            peak = int(_max_bin(bins[:, None], nbins)[1][0])
            sel = (np.abs(bins - peak) <= band) & (weights > 0)
            if sel.sum() < 2:
                return direction
            normals.append(_plane_normal(rays[sel], weights[sel])[0])
        cand = np.cross(normals[0], normals[1])
        if np.linalg.norm(cand) < 1e-3:
            return direction
        cand = unit(cand)
        cand = cand if np.dot(cand, a) >= 0 else -cand
        moved = angle_between(cand, d)
        d = cand
        if moved < 1e-9 and it >= len(bands):
            break
    if angle_between(d, direction) > math.radians(max_change_deg):
        return direction
    return d


def hough_direction(edges_left: EdgeMap, edges_right: EdgeMap, camera_axis,
                    search_half_angle: float = 10.0, step: float = 0.1,
                    bin_width: float = 0.2, ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
                    coarse_step: float | None = None, coarse_bin_width: float = 0.5,
                    refine: bool = True, keep_accumulator: bool = False) -> LineDetection:
    """Common 3D direction of the line groups seen in two edge regions.

    Candidate poles lie on a (alpha, beta) grid of ``step`` degrees within
    ``search_half_angle`` of ``camera_axis``; alpha tilts toward the
    panorama reference axis. The winner maximises the sum of the two
    regions' peak longitude-bin votes; ties go to the smallest
    ``(|alpha|, |beta|)`` and then the lowest bin. With ``coarse_step`` the
    fine grid is only evaluated within one coarse cell (plus a margin) of a
    coarser pass with wider bins; ``coarse_step=None`` enumerates the full
    fine grid. ``refine`` replaces the grid direction with the intersection
    of great circles fitted to the peak bands (see :func:`_refine_direction`);
    the grid only resolves the direction to within its flat vote ridge.
    """
    if search_half_angle > 15.0:
        raise ValueError("search_half_angle must not exceed 15 degrees")
    a = unit(camera_axis)
    b = _perpendicular(a, np.asarray(edges_left.spec.reference, dtype=float))
    expected = (float(edges_left.region.expected_line_height),
                float(edges_right.region.expected_line_height))
    if edges_left.count == 0 or edges_right.count == 0:
        return LineDetection(a, (0, 0), (edges_left.count, edges_right.count), expected,
                             (0.0, 0.0), False, status="no_edges")

    rays_l = edges_left.rays()
    rays_r = edges_right.rays()
    pairs_l = edges_left.row_pairs()
    pairs_r = edges_right.row_pairs()
    n_half = int(round(search_half_angle / step))
    fine_values = np.arange(-n_half, n_half + 1) * step

    if coarse_step is None:
        alphas, betas = _grid(fine_values)
    else:
        n_c = int(math.floor(search_half_angle / coarse_step + 1e-9))
        ca, cb = _grid(np.arange(-n_c, n_c + 1) * coarse_step)
        acc = _accumulate(rays_l, rays_r, a, b, ca, cb, math.radians(coarse_bin_width),
                          pairs_l, pairs_r)
        best = int(np.argmax(acc[0] + acc[2]))
        win = coarse_step + 2 * step
        sel_a = fine_values[np.abs(fine_values - ca[best]) <= win + 1e-9]
        sel_b = fine_values[np.abs(fine_values - cb[best]) <= win + 1e-9]
        aa, bb = np.meshgrid(sel_a, sel_b, indexing="ij")
        aa, bb = aa.ravel(), bb.ravel()
        order = np.lexsort((bb, aa, np.abs(bb), np.abs(aa)))
        alphas, betas = aa[order], bb[order]

    width = math.radians(bin_width)
    acc = _accumulate(rays_l, rays_r, a, b, alphas, betas, width, pairs_l, pairs_r)
    total = acc[0] + acc[2]
    best = int(np.argmax(total))
    alpha, beta = float(alphas[best]), float(betas[best])
    score_l, bin_l, score_r, bin_r = (int(x) for x in acc[:, best])

    d, bp, cp = _candidate_frames(a, b, np.radians([alpha]), np.radians([beta]))
    direction = d[0]
    if refine:
        direction = _refine_direction(direction, a, b, ((rays_l, edges_left.across_weights()),
                                                       (rays_r, edges_right.across_weights())),
                                      width)

    ratios = (score_l / expected[0], score_r / expected[1])
    detection = LineDetection(
        direction=direction, bins=(bin_l, bin_r), scores=(score_l, score_r),
        expected=expected, ratios=ratios,
        valid=bool(ratios[0] >= ratio_threshold and ratios[1] >= ratio_threshold),
        alpha_deg=alpha, beta_deg=beta,
        accumulator=np.stack([alphas, betas, total]) if keep_accumulator else None,
    )
    return detection
