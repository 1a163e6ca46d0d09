"""Ground-truth construction: labelled IR blobs -> 2D centroids -> 3D positions.

For each sequence and each of its two labelled instants (start, end) the
pipeline segments both eyes' infrared images, pairs left and right segments
along epipolar bands with patch NCC, converts each pair's adjusted disparity
to depth, and backprojects to millimetre 3-D positions.  Results are written
as one JSON document per sequence so evaluation never has to re-derive them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .dataset import DatasetError, Sequence
from .geometry import (
    DegenerateDisparityError,
    EpipolarConfig,
    backproject,
    depth_from_disparity,
    filter_consistent_segments,
    match_segments_epipolar,
)

SCHEMA_VERSION = 1


@dataclass
class PointRecord:
    """One labelled point at one instant: 2-D in both eyes, lifted 3-D."""

    point_index: int
    left_px: tuple[float, float]
    right_px: tuple[float, float] | None = None
    ncc_score: float | None = None
    disparity_px: float | None = None
    depth_m: float | None = None
    position_mm: tuple[float, float, float] | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "point_index": self.point_index,
            "left_px": list(self.left_px),
            "right_px": None if self.right_px is None else list(self.right_px),
            "ncc_score": self.ncc_score,
            "disparity_px": self.disparity_px,
            "depth_m": self.depth_m,
            "position_mm": None if self.position_mm is None else list(self.position_mm),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PointRecord":
        return cls(
            point_index=int(data["point_index"]),
            left_px=tuple(data["left_px"]),
            right_px=None if data.get("right_px") is None else tuple(data["right_px"]),
            ncc_score=data.get("ncc_score"),
            disparity_px=data.get("disparity_px"),
            depth_m=data.get("depth_m"),
            position_mm=None if data.get("position_mm") is None
            else tuple(data["position_mm"]),
            flags=list(data.get("flags", [])),
        )


@dataclass
class SequenceGroundTruth:
    sequence_key: str
    start_records: list[PointRecord]
    end_records: list[PointRecord]
    consistency: dict
    config: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "sequence": self.sequence_key,
            "units": {"2d": "px", "3d": "mm"},
            "config": self.config,
            "consistency": self.consistency,
            "start": [r.to_dict() for r in self.start_records],
            "end": [r.to_dict() for r in self.end_records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SequenceGroundTruth":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DatasetError(
                f"unsupported ground-truth schema version {version!r} "
                f"(expected {SCHEMA_VERSION})")
        return cls(
            sequence_key=data["sequence"],
            start_records=[PointRecord.from_dict(r) for r in data["start"]],
            end_records=[PointRecord.from_dict(r) for r in data["end"]],
            consistency=data.get("consistency", {}),
            config=data.get("config", {}),
        )


def _eye_mask(sequence: Sequence, eye: str, which: str, *, tau: float) -> np.ndarray:
    mask = sequence.load_mask(eye, which)
    if mask is None:
        mask = imaging.segment_mask(sequence.load_ir(eye, which), tau=tau)
    return mask


def _build_instant(sequence: Sequence, which: str, *, tau: float, min_area: int,
                   epipolar: EpipolarConfig) -> tuple[list[PointRecord], dict]:
    left_ir = sequence.load_ir("left", which)
    right_ir = sequence.load_ir("right", which)
    left_segs = imaging.extract_segments(_eye_mask(sequence, "left", which, tau=tau),
                                         min_area=min_area)
    right_segs = imaging.extract_segments(_eye_mask(sequence, "right", which, tau=tau),
                                          min_area=min_area)
    left_segs, right_segs, consistency = filter_consistent_segments(left_segs, right_segs)

    matching = match_segments_epipolar(left_ir, right_ir, left_segs, right_segs,
                                       epipolar)
    records = []
    for i, seg in enumerate(left_segs):
        record = PointRecord(point_index=i, left_px=seg.centroid)
        if i in consistency.flagged_left:
            record.flags.append("count-mismatch")
        match = matching.match_for_left(i)
        if match is None:
            record.flags.append("no-stereo-match")
        else:
            record.right_px = match.right_xy
            record.ncc_score = match.score
            record.disparity_px = match.disparity
            try:
                z = depth_from_disparity(match.left_xy[0], match.right_xy[0],
                                         sequence.calibration)
            except DegenerateDisparityError:
                record.flags.append("degenerate-disparity")
            else:
                record.depth_m = z
                pos = backproject(np.array(seg.centroid), z, sequence.calibration)
                record.position_mm = tuple(float(v) for v in pos)
        records.append(record)

    summary = {
        "left_count": consistency.left_count,
        "right_count": consistency.right_count,
        "flagged_left": consistency.flagged_left,
        "flagged_right": consistency.flagged_right,
        "matched": len(matching.matches),
    }
    return records, summary


def build_sequence_ground_truth(sequence: Sequence, *,
                                tau: float = imaging.DEFAULT_IR_THRESHOLD,
                                min_area: int = imaging.DEFAULT_MIN_AREA,
                                epipolar: EpipolarConfig = EpipolarConfig()
                                ) -> SequenceGroundTruth:
    start_records, start_consistency = _build_instant(
        sequence, "start", tau=tau, min_area=min_area, epipolar=epipolar)
    end_records, end_consistency = _build_instant(
        sequence, "end", tau=tau, min_area=min_area, epipolar=epipolar)
    return SequenceGroundTruth(
        sequence_key=sequence.key,
        start_records=start_records,
        end_records=end_records,
        consistency={"start": start_consistency, "end": end_consistency},
        config={
            "ir_threshold": tau,
            "min_area": min_area,
            "band_px": epipolar.band_px,
            "patch_side": epipolar.patch_side,
            "ncc_min": epipolar.ncc_min,
        },
    )


def ground_truth_path(sequence: Sequence, gt_dir: Path | str | None = None) -> Path:
    """Canonical location: inside the sequence directory unless redirected."""
    if gt_dir is None:
        return sequence.root / "gt.json"
    return Path(gt_dir) / f"{sequence.session_id}_{sequence.sequence_id}.json"


def write_ground_truth(gt: SequenceGroundTruth, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(gt.to_dict(), indent=2, sort_keys=True) + "\n")


def load_ground_truth(path: Path | str) -> SequenceGroundTruth:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"ground-truth file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"ground truth {path}: invalid JSON ({exc})") from exc
    return SequenceGroundTruth.from_dict(data)


def get_or_build(sequence: Sequence, gt_dir: Path | str | None = None, *,
                 tau: float = imaging.DEFAULT_IR_THRESHOLD,
                 min_area: int = imaging.DEFAULT_MIN_AREA,
                 epipolar: EpipolarConfig = EpipolarConfig()) -> SequenceGroundTruth:
    """Load the sequence's ground-truth file, or derive it in memory.

    Derivation never writes to disk; persisting is the job of the explicit
    generation step so evaluation stays read-only on the dataset.
    """
    path = ground_truth_path(sequence, gt_dir)
    if path.is_file():
        return load_ground_truth(path)
    return build_sequence_ground_truth(sequence, tau=tau, min_area=min_area,
                                       epipolar=epipolar)
