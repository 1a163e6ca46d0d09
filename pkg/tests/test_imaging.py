"""Thresholding, morphology, connected components, NCC, and rescaling."""

from __future__ import annotations

import numpy as np
import pytest

from trackbench.imaging import (
    DegeneratePatchError,
    dilate,
    erode,
    extract_patch,
    extract_segments,
    morphological_open,
    ncc,
    ncc_surface,
    rescale,
    segment_points,
    threshold_ir,
)


def ncc_oracle(a: np.ndarray, b: np.ndarray) -> float:
    """Textbook zero-mean NCC, written independently of the implementation."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    da = a - a.mean()
    db = b - b.mean()
    return float(np.dot(da, db) / np.sqrt(np.dot(da, da) * np.dot(db, db)))


# ---------------------------------------------------------------------------
# thresholding

def test_threshold_is_strictly_greater():
    image = np.array([[24, 25, 26]], dtype=np.uint8)
    mask = threshold_ir(image, 25)
    assert mask.tolist() == [[False, False, True]]


def test_threshold_collapses_channels_with_max():
    image = np.zeros((2, 2, 3), dtype=np.uint8)
    image[0, 0, 2] = 200  # bright in one channel only
    assert threshold_ir(image, 25).tolist() == [[True, False], [False, False]]


def test_threshold_rejects_other_ranks():
    with pytest.raises(ValueError):
        threshold_ir(np.zeros(5))


# ---------------------------------------------------------------------------
# morphology

def test_opening_removes_isolated_pixel():
    mask = np.zeros((9, 9), dtype=bool)
    mask[4, 4] = True
    assert not morphological_open(mask).any()


def test_opening_preserves_large_square():
    mask = np.zeros((11, 11), dtype=bool)
    mask[3:8, 3:8] = True
    assert np.array_equal(morphological_open(mask), mask)


def test_opening_sandwich():
    # erosion <= opening <= original <= dilation, pointwise
    rng = np.random.default_rng(0)
    mask = rng.random((32, 32)) > 0.6
    opened = morphological_open(mask)
    assert not (erode(mask) & ~opened).any()
    assert not (opened & ~mask).any()
    assert not (mask & ~dilate(mask)).any()


def test_opening_idempotent():
    rng = np.random.default_rng(1)
    mask = rng.random((32, 32)) > 0.5
    once = morphological_open(mask)
    assert np.array_equal(morphological_open(once), once)


# ---------------------------------------------------------------------------
# connected components

def test_two_blocks_centroids():
    # 3x3 blocks with corners at (10,10) and (50,50) -> centroids at the
    # block centres, ordered top to bottom
    mask = np.zeros((64, 64), dtype=bool)
    mask[10:13, 10:13] = True
    mask[50:53, 50:53] = True
    segs = extract_segments(mask, min_area=1)
    assert [s.centroid for s in segs] == [(11.0, 11.0), (51.0, 51.0)]
    assert [s.area for s in segs] == [9, 9]


def test_ring_centroid_is_its_centre():
    # unweighted centroid of a symmetric ring: the (empty) middle
    mask = np.zeros((16, 16), dtype=bool)
    mask[5:10, 5:10] = True
    mask[7, 7] = False
    (seg,) = extract_segments(mask)
    assert seg.centroid == (7.0, 7.0)
    assert seg.area == 24


def test_min_area_filter_boundary():
    mask = np.zeros((20, 20), dtype=bool)
    mask[1:4, 1:4] = True     # area 9: dropped at the default minimum of 10
    mask[10:12, 10:15] = True  # area 10: kept
    segs = extract_segments(mask)
    assert len(segs) == 1
    assert segs[0].area == 10


def test_diagonal_pixels_are_one_component():
    # 8-connectivity joins diagonal neighbours
    mask = np.zeros((8, 8), dtype=bool)
    mask[2, 2] = mask[3, 3] = mask[4, 4] = True
    assert len(extract_segments(mask, min_area=1)) == 1


def test_segments_ordered_by_row_then_column():
    mask = np.zeros((30, 30), dtype=bool)
    mask[20:23, 2:5] = True
    mask[2:5, 20:23] = True
    mask[2:5, 2:5] = True
    centroids = [s.centroid for s in extract_segments(mask, min_area=1)]
    assert centroids == [(3.0, 3.0), (21.0, 3.0), (3.0, 21.0)]


def test_segments_partition_the_mask():
    rng = np.random.default_rng(2)
    mask = rng.random((40, 40)) > 0.7
    segs = extract_segments(mask, min_area=1)
    assert sum(s.area for s in segs) == int(mask.sum())


def test_empty_mask_gives_no_segments():
    assert extract_segments(np.zeros((10, 10), dtype=bool)) == []
    assert segment_points(np.zeros((10, 10), dtype=np.uint8)).shape == (0, 2)


# ---------------------------------------------------------------------------
# NCC

def test_ncc_of_patch_with_itself_is_one():
    rng = np.random.default_rng(3)
    p = rng.integers(0, 256, size=(9, 9)).astype(float)
    assert ncc(p, p) == pytest.approx(1.0, abs=1e-12)


def test_ncc_of_inverted_patch_is_minus_one():
    rng = np.random.default_rng(4)
    p = rng.integers(0, 200, size=(7, 7)).astype(float)
    assert ncc(p, 255.0 - p) == pytest.approx(-1.0, abs=1e-12)


def test_ncc_matches_oracle_on_random_patches():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.normal(size=(11, 11))
        b = rng.normal(size=(11, 11))
        assert ncc(a, b) == pytest.approx(ncc_oracle(a, b), abs=1e-12)


def test_ncc_invariant_to_gain_and_offset():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(9, 9))
    b = rng.normal(size=(9, 9))
    assert ncc(2.5 * a + 17.0, b) == pytest.approx(ncc(a, b), abs=1e-12)


def test_ncc_rejects_flat_patch():
    with pytest.raises(DegeneratePatchError):
        ncc(np.full((5, 5), 7.0), np.arange(25, dtype=float).reshape(5, 5))


def test_ncc_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        ncc(np.zeros((3, 3)), np.zeros((3, 4)))


def test_ncc_surface_matches_per_window_ncc():
    rng = np.random.default_rng(7)
    image = rng.normal(size=(16, 20))
    template = rng.normal(size=(5, 7))
    surface = ncc_surface(image, template)
    assert surface.shape == (12, 14)
    for i in range(surface.shape[0]):
        for j in range(surface.shape[1]):
            window = image[i:i + 5, j:j + 7]
            assert surface[i, j] == pytest.approx(ncc(window, template), abs=1e-9)


def test_ncc_surface_peaks_at_true_location():
    rng = np.random.default_rng(8)
    image = rng.normal(size=(30, 30))
    template = image[12:19, 4:11].copy()
    surface = ncc_surface(image, template)
    assert np.unravel_index(np.argmax(surface), surface.shape) == (12, 4)
    assert surface[12, 4] == pytest.approx(1.0, abs=1e-12)


def test_ncc_surface_flat_windows_never_win():
    image = np.zeros((10, 10))
    image[6:9, 6:9] = np.arange(9).reshape(3, 3)
    template = np.arange(9, dtype=float).reshape(3, 3)
    surface = ncc_surface(image, template)
    assert np.isneginf(surface[0, 0])
    assert np.unravel_index(np.argmax(surface), surface.shape) == (6, 6)


def test_extract_patch_center_and_bounds():
    image = np.arange(100).reshape(10, 10)
    patch = extract_patch(image, (5.2, 4.8), 3)
    assert np.array_equal(patch, image[4:7, 4:7])
    assert extract_patch(image, (0, 5), 3) is None  # would cross the border
    with pytest.raises(ValueError):
        extract_patch(image, (5, 5), 4)


# ---------------------------------------------------------------------------
# rescaling

def test_rescale_shapes_and_validation():
    image = np.zeros((64, 80))
    assert rescale(image, 0.5).shape == (32, 40)
    assert rescale(image, 2.0).shape == (128, 160)
    with pytest.raises(ValueError):
        rescale(np.zeros((65, 80)), 0.5)  # 32.5 rows is not a size
    with pytest.raises(ValueError):
        rescale(image, 0.0)


def test_rescale_constant_image_stays_constant():
    image = np.full((32, 32), 13.0)
    assert np.allclose(rescale(image, 0.5), 13.0)
    assert np.allclose(rescale(image, 2.0), 13.0)


def test_rescale_halves_coordinates_exactly():
    # a bright pixel at even coordinates lands at exactly half the position
    image = np.zeros((64, 64))
    image[40, 24] = 100.0
    small = rescale(image, 0.5)
    assert small[20, 12] == 100.0
    assert small.sum() == 100.0  # decimation: no bleed into neighbours


def test_rescale_doubling_keeps_grid_points():
    rng = np.random.default_rng(9)
    image = rng.normal(size=(16, 16))
    big = rescale(image, 2.0)
    assert np.allclose(big[::2, ::2], image, atol=1e-12)


def test_rescale_round_trip_feature_within_one_pixel():
    # a smooth bump's peak must come back within 1 px after 0.5 -> 2.0
    ys, xs = np.mgrid[0:64, 0:64]
    image = np.exp(-((xs - 25.0) ** 2 + (ys - 41.0) ** 2) / 30.0)
    back = rescale(rescale(image, 0.5), 2.0)
    py, px = np.unravel_index(np.argmax(back), back.shape)
    assert abs(px - 25) <= 1
    assert abs(py - 41) <= 1
