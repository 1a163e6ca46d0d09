"""Stereo geometry: disparity -> depth, pinhole backprojection, epipolar matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import CameraCalibration
from .imaging import DegeneratePatchError, Segment, extract_patch, ncc

MM_PER_M = 1000.0


class DegenerateDisparityError(ValueError):
    """Adjusted disparity is zero or negative: the point is at or behind infinity."""


# ---------------------------------------------------------------------------
# depth and backprojection

def depth_from_disparity(x_left, x_right, calib: CameraCalibration):
    """Depth in metres from a horizontal stereo correspondence.

    Uses the principal-point-adjusted disparity
    ``(x_left - c_x) - (x_right - c'_x)`` with the left focal length and the
    baseline in metres.  Broadcasts over array inputs.
    """
    x_left = np.asarray(x_left, dtype=float)
    x_right = np.asarray(x_right, dtype=float)
    adjusted = (x_left - calib.left_principal_x) - (x_right - calib.right_principal_x)
    if np.any(adjusted <= 0):
        raise DegenerateDisparityError(
            f"non-positive adjusted disparity (min {np.min(adjusted)})")
    z = calib.baseline_b * calib.left_focal_x / adjusted
    return float(z) if z.ndim == 0 else z


def backproject(point_xy, z_m, calib: CameraCalibration) -> np.ndarray:
    """Left-pixel + depth (m) -> camera-frame 3-D position in millimetres."""
    pts = np.atleast_2d(np.asarray(point_xy, dtype=float))
    z = np.broadcast_to(np.asarray(z_m, dtype=float), pts.shape[0]).astype(float)
    x = (pts[:, 0] - calib.left_principal_x) * z / calib.left_focal_x
    y = (pts[:, 1] - calib.left_principal_y) * z / calib.left_focal_y
    out = np.stack([x, y, z], axis=1) * MM_PER_M
    return out[0] if np.asarray(point_xy).ndim == 1 else out


def project_left(position_mm, calib: CameraCalibration) -> np.ndarray:
    """Inverse of :func:`backproject`: millimetre 3-D point -> left pixel."""
    pos = np.atleast_2d(np.asarray(position_mm, dtype=float)) / MM_PER_M
    z = pos[:, 2]
    if np.any(z <= 0):
        raise ValueError("cannot project non-positive depth")
    u = pos[:, 0] / z * calib.left_focal_x + calib.left_principal_x
    v = pos[:, 1] / z * calib.left_focal_y + calib.left_principal_y
    out = np.stack([u, v], axis=1)
    return out[0] if np.asarray(position_mm).ndim == 1 else out


def project_right(position_mm, calib: CameraCalibration) -> np.ndarray:
    """Millimetre 3-D point (left-camera frame) -> right pixel.

    Assumes the rectified-pair geometry that the depth equation encodes: the
    right camera displaced by the baseline along +x, no relative rotation.
    """
    pos = np.atleast_2d(np.asarray(position_mm, dtype=float)) / MM_PER_M
    z = pos[:, 2]
    if np.any(z <= 0):
        raise ValueError("cannot project non-positive depth")
    u = (pos[:, 0] - calib.baseline_b) / z * calib.right_focal_x + calib.right_principal_x
    v = pos[:, 1] / z * calib.right_focal_y + calib.right_principal_y
    out = np.stack([u, v], axis=1)
    return out[0] if np.asarray(position_mm).ndim == 1 else out


# ---------------------------------------------------------------------------
# epipolar correspondence between left/right segment sets

@dataclass(frozen=True)
class EpipolarConfig:
    """Knobs for left->right segment matching along (near-)horizontal epipolar lines."""

    band_px: float = 3.0          # vertical tolerance around the left row
    patch_side: int = 21          # odd NCC patch side in pixels
    ncc_min: float = 0.5          # reject matches scoring below this
    require_positive_disparity: bool = True

    def __post_init__(self):
        if self.patch_side % 2 != 1:
            raise ValueError("patch_side must be odd")
        if self.band_px < 0:
            raise ValueError("band_px must be non-negative")


@dataclass(frozen=True)
class StereoCorrespondence:
    left_index: int
    right_index: int
    left_xy: tuple[float, float]
    right_xy: tuple[float, float]
    score: float

    @property
    def disparity(self) -> float:
        return self.left_xy[0] - self.right_xy[0]


@dataclass
class MatchResult:
    matches: list[StereoCorrespondence]
    unmatched_left: list[int]
    unmatched_right: list[int]

    def match_for_left(self, left_index: int) -> StereoCorrespondence | None:
        for m in self.matches:
            if m.left_index == left_index:
                return m
        return None


def _candidate_score(left_img, right_img, ls: Segment, rs: Segment,
                     config: EpipolarConfig) -> float | None:
    lp = extract_patch(left_img, ls.centroid, config.patch_side)
    rp = extract_patch(right_img, rs.centroid, config.patch_side)
    if lp is None or rp is None:
        return None
    try:
        return ncc(lp, rp)
    except DegeneratePatchError:
        return None


def match_segments_epipolar(left_image: np.ndarray, right_image: np.ndarray,
                            left_segments: list[Segment], right_segments: list[Segment],
                            config: EpipolarConfig = EpipolarConfig()) -> MatchResult:
    """Greedy one-to-one left->right matching restricted to the epipolar band.

    Candidates are right segments whose centroid row is within ``band_px`` of
    the left centroid row (and, by default, strictly left of it in x, since a
    visible point must have positive raw disparity).  Candidate pairs are
    scored with patch NCC and accepted greedily by descending score, ties
    broken by (left index, right index); scores below ``ncc_min`` are dropped.
    """
    candidates = []
    for li, ls in enumerate(left_segments):
        for ri, rs in enumerate(right_segments):
            if abs(rs.centroid[1] - ls.centroid[1]) > config.band_px:
                continue
            if config.require_positive_disparity and rs.centroid[0] >= ls.centroid[0]:
                continue
            score = _candidate_score(left_image, right_image, ls, rs, config)
            if score is None or score < config.ncc_min:
                continue
            candidates.append((score, li, ri))

    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_left: set[int] = set()
    used_right: set[int] = set()
    matches = []
    for score, li, ri in candidates:
        if li in used_left or ri in used_right:
            continue
        used_left.add(li)
        used_right.add(ri)
        matches.append(StereoCorrespondence(
            left_index=li, right_index=ri,
            left_xy=left_segments[li].centroid,
            right_xy=right_segments[ri].centroid,
            score=score,
        ))
    matches.sort(key=lambda m: m.left_index)
    return MatchResult(
        matches=matches,
        unmatched_left=[i for i in range(len(left_segments)) if i not in used_left],
        unmatched_right=[i for i in range(len(right_segments)) if i not in used_right],
    )


# ---------------------------------------------------------------------------
# left/right segment-count consistency

@dataclass
class ConsistencyReport:
    left_count: int
    right_count: int
    flagged_left: list[int] = field(default_factory=list)
    flagged_right: list[int] = field(default_factory=list)
    removed: bool = False

    @property
    def consistent(self) -> bool:
        return self.left_count == self.right_count


def filter_consistent_segments(left_segments: list[Segment], right_segments: list[Segment],
                               *, remove: bool = False
                               ) -> tuple[list[Segment], list[Segment], ConsistencyReport]:
    """Flag (or optionally drop) surplus segments when eye counts disagree.

    When both eyes found the same number of segments everything passes
    through untouched.  Otherwise segments are paired greedily by nearest
    centroid distance across eyes and the leftovers on the larger side are
    flagged; with ``remove=True`` they are also dropped from the output.
    """
    report = ConsistencyReport(left_count=len(left_segments), right_count=len(right_segments))
    if report.consistent or not left_segments or not right_segments:
        if not report.consistent:
            # one side is empty: everything on the other side is surplus
            report.flagged_left = list(range(len(left_segments)))
            report.flagged_right = list(range(len(right_segments)))
            if remove:
                report.removed = True
                return [], [], report
        return list(left_segments), list(right_segments), report

    pairs = []
    for li, ls in enumerate(left_segments):
        for ri, rs in enumerate(right_segments):
            d = float(np.hypot(ls.centroid[0] - rs.centroid[0],
                               ls.centroid[1] - rs.centroid[1]))
            pairs.append((d, li, ri))
    pairs.sort()
    used_left: set[int] = set()
    used_right: set[int] = set()
    for _, li, ri in pairs:
        if li in used_left or ri in used_right:
            continue
        used_left.add(li)
        used_right.add(ri)
    report.flagged_left = [i for i in range(len(left_segments)) if i not in used_left]
    report.flagged_right = [i for i in range(len(right_segments)) if i not in used_right]

    if remove:
        report.removed = True
        left_out = [s for i, s in enumerate(left_segments) if i in used_left]
        right_out = [s for i, s in enumerate(right_segments) if i in used_right]
        return left_out, right_out, report
    return list(left_segments), list(right_segments), report
