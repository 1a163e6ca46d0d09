"""Depth equation, pinhole projection, epipolar matching, consistency filter."""

from __future__ import annotations

import numpy as np
import pytest

from trackbench.dataset import CameraCalibration
from trackbench.geometry import (
    DegenerateDisparityError,
    EpipolarConfig,
    backproject,
    depth_from_disparity,
    filter_consistent_segments,
    match_segments_epipolar,
    project_left,
    project_right,
)
from trackbench.imaging import Segment, extract_segments


def make_calib(f=1000.0, cx=640.0, cy=512.0, cpx=640.0, b=0.004) -> CameraCalibration:
    return CameraCalibration(
        left_focal_x=f, left_focal_y=f, left_principal_x=cx, left_principal_y=cy,
        right_focal_x=f, right_focal_y=f, right_principal_x=cpx, right_principal_y=cy,
        baseline_b=b,
    )


# ---------------------------------------------------------------------------
# depth from disparity

def test_depth_hand_case_equal_principals():
    calib = make_calib()
    # disparity 100 px with b=0.004 m and f=1000 px -> 4 cm
    assert depth_from_disparity(740.0, 640.0, calib) == pytest.approx(0.04, rel=1e-12)


def test_depth_hand_case_distinct_principals():
    calib = make_calib(cx=640.0, cpx=630.0)
    # adjusted disparity (660-640) - (645-630) = 5
    z = depth_from_disparity(660.0, 645.0, calib)
    assert z == pytest.approx(0.004 * 1000.0 / 5.0, rel=1e-12)


def test_depth_zero_disparity_is_degenerate():
    calib = make_calib()
    with pytest.raises(DegenerateDisparityError):
        depth_from_disparity(640.0, 640.0, calib)
    with pytest.raises(DegenerateDisparityError):
        depth_from_disparity(600.0, 640.0, calib)  # negative disparity


def test_depth_broadcasts_over_arrays():
    calib = make_calib()
    x = np.array([740.0, 690.0])
    z = depth_from_disparity(x, np.array([640.0, 640.0]), calib)
    assert z == pytest.approx([0.04, 0.08], rel=1e-12)


def test_depth_strictly_decreasing_in_disparity():
    calib = make_calib()
    disparities = np.linspace(1.0, 300.0, 400)
    z = depth_from_disparity(640.0 + disparities, np.full(400, 640.0), calib)
    assert np.all(np.diff(z) < 0)


def test_equal_principals_reduce_to_plain_disparity():
    # z = b*f/(x - x') when c_x == c'_x
    calib = make_calib(cx=512.0, cpx=512.0)
    rng = np.random.default_rng(10)
    for _ in range(100):
        d = rng.uniform(0.5, 200.0)
        x = rng.uniform(-100.0, 1400.0)
        z = depth_from_disparity(x, x - d, calib)
        assert z == pytest.approx(0.004 * 1000.0 / d, rel=1e-12)


# ---------------------------------------------------------------------------
# backprojection / projection

def test_backproject_hand_case():
    calib = make_calib()
    out = backproject(np.array([740.0, 512.0]), 0.04, calib)
    assert out == pytest.approx([4.0, 0.0, 40.0], abs=1e-12)


def test_backproject_principal_point_is_on_axis():
    calib = make_calib()
    out = backproject(np.array([640.0, 512.0]), 0.07, calib)
    assert out == pytest.approx([0.0, 0.0, 70.0], abs=1e-12)


def test_backproject_shapes():
    calib = make_calib()
    one = backproject(np.array([650.0, 500.0]), 0.05, calib)
    many = backproject(np.array([[650.0, 500.0], [640.0, 512.0]]), [0.05, 0.06], calib)
    assert one.shape == (3,)
    assert many.shape == (2, 3)
    assert many[0] == pytest.approx(one)


def test_project_backproject_round_trip():
    calib = make_calib(f=800.0, cx=600.0, cy=480.0)
    rng = np.random.default_rng(11)
    pos = np.stack([rng.uniform(-30, 30, 1000), rng.uniform(-30, 30, 1000),
                    rng.uniform(20, 200, 1000)], axis=1)  # mm
    px = project_left(pos, calib)
    back = backproject(px, pos[:, 2] / 1000.0, calib)
    assert np.max(np.abs(back - pos)) < 1e-9


def test_projection_rejects_nonpositive_depth():
    calib = make_calib()
    with pytest.raises(ValueError):
        project_left(np.array([1.0, 2.0, -5.0]), calib)
    with pytest.raises(ValueError):
        project_right(np.array([0.0, 0.0, 0.0]), calib)


def test_left_right_projection_consistent_with_depth_equation():
    # project a 3-D point into both eyes; the depth equation must invert it
    calib = make_calib(cx=660.0, cpx=615.0)
    pos = np.array([7.5, -3.0, 55.0])  # mm
    (ul, _), (ur, _) = project_left(pos, calib), project_right(pos, calib)
    z = depth_from_disparity(ul, ur, calib)
    assert z == pytest.approx(0.055, rel=1e-12)


# ---------------------------------------------------------------------------
# epipolar matching

def _blob_image(size, centers, intensities=None):
    """Gaussian blobs rendered onto a ramp so patches are never flat."""
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w]
    image = 0.01 * xs + 0.013 * ys
    for k, (cx, cy) in enumerate(centers):
        peak = 200.0 if intensities is None else intensities[k]
        image = image + peak * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / 8.0)
    return image


def _segments_at(centers):
    return [Segment(label=i + 1, area=9, centroid=(float(x), float(y)),
                    bbox=(int(x) - 1, int(y) - 1, int(x) + 2, int(y) + 2))
            for i, (x, y) in enumerate(centers)]


def test_matching_recovers_known_disparities():
    lefts = [(60.0, 40.0), (120.0, 80.0), (200.0, 120.0)]
    disparities = [12.0, 20.0, 31.0]
    rights = [(x - d, y) for (x, y), d in zip(lefts, disparities)]
    left_img = _blob_image((160, 260), lefts)
    right_img = _blob_image((160, 260), rights)
    result = match_segments_epipolar(left_img, right_img,
                                     _segments_at(lefts), _segments_at(rights))
    assert len(result.matches) == 3
    assert result.unmatched_left == []
    for m, d in zip(result.matches, disparities):
        assert m.disparity == pytest.approx(d, abs=1e-9)
        assert m.score > 0.9


def test_matching_respects_vertical_band():
    lefts = [(100.0, 50.0)]
    rights = [(80.0, 58.0)]  # 8 rows off: outside the +-3 band
    left_img = _blob_image((120, 200), lefts)
    right_img = _blob_image((120, 200), rights)
    result = match_segments_epipolar(left_img, right_img,
                                     _segments_at(lefts), _segments_at(rights))
    assert result.matches == []
    assert result.unmatched_left == [0]
    assert result.unmatched_right == [0]


def test_matching_requires_positive_disparity():
    lefts = [(100.0, 50.0)]
    rights = [(130.0, 50.0)]  # right of the left point: behind the camera
    left_img = _blob_image((120, 200), lefts)
    right_img = _blob_image((120, 200), rights)
    result = match_segments_epipolar(left_img, right_img,
                                     _segments_at(lefts), _segments_at(rights))
    assert result.matches == []


def test_matching_no_right_segments():
    lefts = [(100.0, 50.0), (150.0, 90.0)]
    img = _blob_image((120, 200), lefts)
    result = match_segments_epipolar(img, img, _segments_at(lefts), [])
    assert result.matches == []
    assert result.unmatched_left == [0, 1]


def test_matching_prefers_correlated_candidate():
    # two same-row right candidates: a copy of the left blob and an inverted
    # (dark) blob; NCC must pick the copy
    left = (150.0, 60.0)
    good = (120.0, 60.0)
    bad = (60.0, 60.0)
    left_img = _blob_image((120, 220), [left])
    right_img = _blob_image((120, 220), [good, bad], intensities=[200.0, -200.0])
    result = match_segments_epipolar(left_img, right_img,
                                     _segments_at([left]),
                                     _segments_at([good, bad]))
    (m,) = result.matches
    assert m.right_index == 0
    assert result.unmatched_right == [1]


def test_matching_is_injective_on_right_segments():
    # two left blobs compete for one right blob: exactly one wins
    lefts = [(100.0, 50.0), (140.0, 51.0)]
    rights = [(80.0, 50.0)]
    left_img = _blob_image((120, 220), lefts)
    right_img = _blob_image((120, 220), rights)
    result = match_segments_epipolar(left_img, right_img,
                                     _segments_at(lefts), _segments_at(rights))
    assert len(result.matches) == 1
    assert len(result.unmatched_left) == 1
    assert all(m.disparity > 0 for m in result.matches)


def test_matching_on_segmented_masks_end_to_end():
    # run the actual segmentation on rendered IR pairs, then match
    lefts = [(60.0, 40.0), (60.0, 90.0)]
    rights = [(35.0, 40.0), (28.0, 90.0)]
    left_img = _blob_image((140, 160), lefts)
    right_img = _blob_image((140, 160), rights)
    left_segs = extract_segments(left_img > 100)
    right_segs = extract_segments(right_img > 100)
    result = match_segments_epipolar(left_img, right_img, left_segs, right_segs)
    assert len(result.matches) == 2
    assert result.matches[0].disparity == pytest.approx(25.0, abs=0.1)
    assert result.matches[1].disparity == pytest.approx(32.0, abs=0.1)


def test_epipolar_config_validation():
    with pytest.raises(ValueError):
        EpipolarConfig(patch_side=10)
    with pytest.raises(ValueError):
        EpipolarConfig(band_px=-1.0)


# ---------------------------------------------------------------------------
# start/end consistency filter

def test_consistency_equal_counts_pass_through():
    segs = _segments_at([(10.0, 10.0), (30.0, 30.0)])
    left, right, report = filter_consistent_segments(segs, list(segs))
    assert report.consistent
    assert report.flagged_left == [] and report.flagged_right == []
    assert left == segs and right == segs


def test_consistency_flags_surplus_without_dropping():
    lefts = _segments_at([(10.0, 10.0), (30.0, 30.0), (200.0, 200.0)])
    rights = _segments_at([(11.0, 10.0), (29.0, 31.0)])
    left, right, report = filter_consistent_segments(lefts, rights)
    assert not report.consistent
    assert report.flagged_left == [2]  # the far-away extra
    assert report.flagged_right == []
    assert len(left) == 3 and len(right) == 2  # nothing silently dropped
    assert not report.removed


def test_consistency_remove_is_opt_in():
    lefts = _segments_at([(10.0, 10.0), (30.0, 30.0), (200.0, 200.0)])
    rights = _segments_at([(11.0, 10.0), (29.0, 31.0)])
    left, right, report = filter_consistent_segments(lefts, rights, remove=True)
    assert report.removed
    assert len(left) == 2 and len(right) == 2


def test_consistency_empty_side_flags_everything():
    lefts = _segments_at([(10.0, 10.0), (30.0, 30.0)])
    left, right, report = filter_consistent_segments(lefts, [])
    assert report.flagged_left == [0, 1]
    assert left == lefts and right == []
