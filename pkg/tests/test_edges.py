import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_line_pair, rendered_pallet, step_edge_pair
from palletpitch.edges import (
    EdgeMap,
    LineDetection,
    PredictedRegion,
    detect_edges,
    hough_direction,
    line_validity,
    region_around_segments,
    sobel_gradients,
)
from palletpitch.errors import RegionOutOfPanorama
from palletpitch.geometry import angle_between, axis_angle, unit
from palletpitch.panorama import PanoramaImage, PanoramaSpec, build_panorama, ray_to_pano_pixel

SPEC = PanoramaSpec.about("z")
REGION = PredictedRegion(900, 1000, 400, 500, 100.0)


def _pano(img):
    return PanoramaImage(SPEC, img.astype(np.uint8), np.ones(img.shape, dtype=bool))


def _axis_error_deg(d, truth):
    return math.degrees(min(angle_between(d, truth), angle_between(-d, truth)))


class TestDetectEdges:
    def test_uniform_is_empty(self):
        em = detect_edges(_pano(np.full((1024, 2048), 100)), REGION)
        assert em.count == 0

    def test_vertical_step_columns(self):
        img = np.zeros((1024, 2048))
        img[:, 950:] = 255
        em = detect_edges(_pano(img), REGION)
        u, v = em.pixels()
        assert em.count > 0
        assert set(np.unique(u)) <= {949, 950, 951}
        # analytic Sobel response of a full step is 4 * 255 -> normalised 1
        assert em.magnitude.max() == pytest.approx(1.0)

    def test_orientation_rotates_with_step(self):
        v_img = np.zeros((1024, 2048))
        v_img[:, 950:] = 255
        h_img = np.zeros((1024, 2048))
        h_img[450:, :] = 255
        ov = detect_edges(_pano(v_img), REGION)
        oh = detect_edges(_pano(h_img), REGION)
        diff = np.median(oh.orientation[oh.mask]) - np.median(ov.orientation[ov.mask])
        assert abs(abs(math.degrees(diff)) - 90.0) < 1e-6

    def test_mask_inside_valid(self):
        img = np.zeros((1024, 2048))
        img[:, 950:] = 255
        valid = np.ones(img.shape, dtype=bool)
        valid[:, :960] = False
        img[~valid] = 0
        em = detect_edges(PanoramaImage(SPEC, img.astype(np.uint8), valid), REGION)
        u, _ = em.pixels()
        assert np.all(valid[em.pixels()[1], u])

    def test_threshold(self):
        img = np.zeros((1024, 2048))
        img[:, 950:] = 30  # below 40/255 after normalisation
        assert detect_edges(_pano(img), REGION).count == 0
        assert detect_edges(_pano(img), REGION, edge_threshold=0.1).count > 0

    def test_region_outside(self):
        with pytest.raises(RegionOutOfPanorama):
            detect_edges(_pano(np.zeros((1024, 2048))), PredictedRegion(2000, 2100, 0, 10, 5.0))

    def test_sobel_normalisation(self):
        mag, _ = sobel_gradients(np.tile(np.r_[np.zeros(5), np.full(5, 255.0)], (5, 1)))
        assert mag.max() == pytest.approx(1.0)


def _detection(ratios):
    return LineDetection(np.array([0, 0, 1.0]), (0, 0), (0, 0), (1.0, 1.0), ratios,
                         min(ratios) >= 0.5)


@pytest.mark.parametrize("ratios, valid", [((1.0, 1.0), True), ((0.9, 0.2), False), ((0.5, 0.5), True)])
def test_line_validity(ratios, valid):
    assert line_validity(_detection(ratios), 0.5) is valid


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.floats(0.01, 1), st.floats(0.01, 1))
def test_validity_monotone_in_threshold(r1, r2, t, t2):
    det = _detection((r1, r2))
    lo, hi = sorted((t, t2))
    if line_validity(det, hi):
        assert line_validity(det, lo)


def _meridian_maps(pole_spec, columns, rows):
    maps = []
    for u in columns:
        v = np.arange(rows[0], rows[1])
        region = PredictedRegion(u - 8, u + 8, rows[0] - 8, rows[1] + 8, float(len(v)))
        maps.append(EdgeMap.from_pixels(pole_spec, region, np.full(len(v), u), v))
    return maps


@pytest.fixture(scope="module")
def tilted_pair():
    rng = np.random.default_rng(21)
    d, segs = random_line_pair(rng)
    pano, regions = step_edge_pair(SPEC, d, segs)
    maps = [detect_edges(pano, rg) for rg in regions]
    return d, maps, hough_direction(*maps, SPEC.pole)


class TestHough:
    def test_exact_meridians(self):
        left, right = _meridian_maps(SPEC, (900, 1150), (300, 420))
        det = hough_direction(left, right, SPEC.pole)
        assert (det.alpha_deg, det.beta_deg) == (0.0, 0.0)
        assert _axis_error_deg(det.direction, np.array(SPEC.pole)) < 1e-6
        assert det.scores == (120, 120)
        assert det.ratios == (1.0, 1.0) and det.valid

    @pytest.mark.parametrize("columns", [(700, 1300), (1000, 1060)])
    def test_score_equals_point_count(self, columns):
        left, right = _meridian_maps(SPEC, columns, (200, 287))
        det = hough_direction(left, right, SPEC.pole)
        assert det.scores == (87, 87)

    def test_empty_region(self):
        left, right = _meridian_maps(SPEC, (900, 1150), (300, 420))
        empty = EdgeMap.from_pixels(SPEC, left.region, [], [])
        det = hough_direction(empty, right, SPEC.pole)
        assert not det.valid and det.status == "no_edges" and det.ratios == (0.0, 0.0)

    def test_cone_limit(self):
        left, right = _meridian_maps(SPEC, (900, 1150), (300, 420))
        with pytest.raises(ValueError):
            hough_direction(left, right, SPEC.pole, search_half_angle=16.0)

    def test_tilted_pair_recovered(self, tilted_pair):
        d, _, det = tilted_pair
        assert _axis_error_deg(det.direction, d) <= 0.2
        assert det.valid

    @pytest.mark.parametrize("seed", [0, 1])
    def test_score_monotone_under_removal(self, tilted_pair, seed):
        _, maps, det = tilted_pair
        rng = np.random.default_rng(seed)
        keep = [rng.random(m.count) < 0.7 for m in maps]
        sub = hough_direction(maps[0].without(keep[0]), maps[1].without(keep[1]), SPEC.pole)
        assert sub.score <= det.score
        assert all(s <= f for s, f in zip(sub.scores, det.scores))

    def test_rotational_consistency(self, tilted_pair):
        # the same pixels under a rotated panorama frame are the rotated scene
        _, maps, det = tilted_pair
        R = axis_angle([0.3, -0.5, 0.8], 0.7)
        rspec = PanoramaSpec(tuple(R @ SPEC.pole), tuple(R @ SPEC.reference))
        rmaps = [EdgeMap(rspec, m.region, m.magnitude, m.orientation, m.mask) for m in maps]
        rdet = hough_direction(*rmaps, rspec.pole)
        assert _axis_error_deg(rdet.direction, R @ det.direction) <= 0.1
        assert rdet.scores == det.scores


def test_rendered_front_up_tilt(camera):
    # top-surface edges of a pallet pitched 4.19 deg, seen in the X-axis panorama
    _, img, truth = rendered_pallet(False, pitch=4.19, position=(201.0, 0.0, 400.0))
    spec = PanoramaSpec.about("x")
    pano = build_panorama(img, camera, spec)
    segs = [np.array(truth["edge_endpoints_3d"][k]) for k in ("top_left", "top_right")]
    maps = [detect_edges(pano, region_around_segments([s], spec)) for s in segs]
    det = hough_direction(*maps, spec.pole)
    d = unit(segs[0][1] - segs[0][0])
    assert _axis_error_deg(det.direction, d) <= 0.1
    assert det.valid
