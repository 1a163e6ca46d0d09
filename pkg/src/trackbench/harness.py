"""Streaming evaluation harness.

Runs a tracker over each sequence under the streaming contract — frames are
handed over strictly in temporal order, never ahead of time — records per-point
trajectories and per-step wall-clock latency, and scores the final-frame
estimates against end labels.  A zero-motion control tracker always runs
alongside the submission as a sanity block.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .dataset import Dataset, DatasetError, Sequence, open_frame_stream
from .metrics import (
    AccuracyReport,
    DistanceSample,
    LatencyStats,
    ThresholdSchedule,
    build_accuracy_report,
    latency_stats,
    nearest_distances,
)


class ContractViolation(Exception):
    """A tracker broke the streaming contract (e.g. wrong estimate count)."""

    def __init__(self, message: str, frame_index: int):
        super().__init__(f"{message} (frame {frame_index})")
        self.frame_index = frame_index


class PointTracker:
    """Streaming tracker contract.

    ``init`` receives the start points (N, 2) in left-eye pixels, the first
    frame pair, and the calibration; each subsequent frame arrives through
    ``step``, which must return the current estimates: an (N, 2) pixel array
    in 2D mode or an (N, 3) millimetre array in 3D mode.  The estimate count
    must equal the start-point count at every step, and implementations only
    ever see frames in order — there is no way to peek ahead.

    Subclasses should keep ``self.estimates`` current; the harness reads it
    for the frame-0 trajectory entry and for single-frame sequences.
    """

    name = "base"

    def init(self, start_points: np.ndarray, first_left_frame: np.ndarray,
             first_right_frame: np.ndarray | None = None, calibration=None) -> None:
        raise NotImplementedError

    def step(self, left_frame: np.ndarray,
             right_frame: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError


class ControlTracker(PointTracker):
    """Zero-motion baseline: every step returns the start points unchanged."""

    name = "control"

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        self.estimates = np.array(start_points, dtype=float).reshape(-1, 2)

    def step(self, left_frame, right_frame=None):
        return self.estimates.copy()


@dataclass
class TrackRecord:
    """One point's per-frame estimates; ``trajectory`` has one row per frame."""

    point_id: int
    trajectory: np.ndarray  # (frame_count, d)

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]


@dataclass
class SequenceEvalResult:
    sequence_key: str
    status: str  # "ok" | "failed"
    n_points: int
    frame_count: int
    start_points: np.ndarray
    records: list[TrackRecord] = field(default_factory=list)
    latencies_ms: np.ndarray = field(default_factory=lambda: np.empty(0))
    init_latency_ms: float | None = None
    failure_reason: str | None = None

    @property
    def final_estimates(self) -> np.ndarray | None:
        if self.status != "ok":
            return None
        return np.array([r.final for r in self.records])


def start_points_for(sequence: Sequence, *, tau: float = imaging.DEFAULT_IR_THRESHOLD,
                     min_area: int = imaging.DEFAULT_MIN_AREA) -> np.ndarray:
    """Left-eye start labels: centroids of the start-mask segments, (N, 2)."""
    return _label_centroids(sequence, "start", tau=tau, min_area=min_area)


def end_points_for(sequence: Sequence, *, tau: float = imaging.DEFAULT_IR_THRESHOLD,
                   min_area: int = imaging.DEFAULT_MIN_AREA) -> np.ndarray:
    """Left-eye end labels, same construction as :func:`start_points_for`."""
    return _label_centroids(sequence, "end", tau=tau, min_area=min_area)


def _label_centroids(sequence: Sequence, which: str, *, tau: float,
                     min_area: int) -> np.ndarray:
    mask = sequence.load_mask("left", which)
    if mask is None:
        # no shipped segmentation: derive it from the infrared image
        mask = imaging.segment_mask(sequence.load_ir("left", which), tau=tau)
    segments = imaging.extract_segments(mask, min_area=min_area)
    if not segments:
        return np.empty((0, 2), dtype=float)
    return np.array([s.centroid for s in segments], dtype=float)


def run_sequence_eval(sequence: Sequence, tracker: PointTracker, *, mode: str = "2d",
                      measure_latency: bool = False,
                      tau: float = imaging.DEFAULT_IR_THRESHOLD,
                      min_area: int = imaging.DEFAULT_MIN_AREA,
                      start_points: np.ndarray | None = None) -> SequenceEvalResult:
    """Stream one sequence through a tracker instance.

    Start points default to the left start-mask centroids.  Latency is wall
    time around each ``step`` call; the ``init`` call is timed separately and
    never enters the per-frame samples.  A wrong-length estimate array raises
    :class:`ContractViolation` naming the frame; any other tracker exception
    marks the sequence failed and evaluation of other sequences continues.
    """
    if mode not in ("2d", "3d"):
        raise ValueError(f"mode must be '2d' or '3d', got {mode!r}")
    dim = 2 if mode == "2d" else 3
    if start_points is None:
        start_points = start_points_for(sequence, tau=tau, min_area=min_area)
    start_points = np.asarray(start_points, dtype=float).reshape(-1, 2)
    n_points = start_points.shape[0]
    if n_points == 0:
        raise DatasetError(f"{sequence.key}: no start points to track")

    left_stream = open_frame_stream(sequence, "left")
    right_stream = open_frame_stream(sequence, "right") if mode == "3d" else None
    frame_count = left_stream.frame_count

    result = SequenceEvalResult(
        sequence_key=sequence.key, status="ok", n_points=n_points,
        frame_count=frame_count, start_points=start_points,
    )

    per_frame: list[np.ndarray] = []
    latencies: list[float] = []
    try:
        for index in range(frame_count):
            left = next(left_stream)
            right = next(right_stream) if right_stream is not None else None
            if index == 0:
                t0 = time.perf_counter()
                tracker.init(start_points, left, right, sequence.calibration)
                init_ms = (time.perf_counter() - t0) * 1000.0
                if measure_latency:
                    result.init_latency_ms = init_ms
                first = getattr(tracker, "estimates", None)
                if first is None:
                    first = start_points if dim == 2 else np.full((n_points, 3), np.nan)
                estimates = _check_estimates(first, n_points, dim, index)
            else:
                t0 = time.perf_counter()
                raw = tracker.step(left, right)
                elapsed = (time.perf_counter() - t0) * 1000.0
                if measure_latency:
                    latencies.append(elapsed)
                estimates = _check_estimates(raw, n_points, dim, index)
            per_frame.append(estimates)
    except ContractViolation:
        raise
    except Exception as exc:
        result.status = "failed"
        result.failure_reason = f"{type(exc).__name__}: {exc}"
        return result

    trajectory = np.stack(per_frame)  # (frame_count, n_points, dim)
    result.records = [TrackRecord(point_id=i, trajectory=trajectory[:, i, :])
                      for i in range(n_points)]
    result.latencies_ms = np.array(latencies, dtype=float)
    return result


def _check_estimates(raw, n_points: int, dim: int, frame_index: int) -> np.ndarray:
    estimates = np.asarray(raw, dtype=float)
    if estimates.shape != (n_points, dim):
        raise ContractViolation(
            f"tracker returned estimates of shape {estimates.shape}, "
            f"expected ({n_points}, {dim})", frame_index)
    if not np.all(np.isfinite(estimates)):
        raise ContractViolation("tracker returned non-finite estimates", frame_index)
    return estimates


# ---------------------------------------------------------------------------
# dataset-level evaluation

@dataclass
class EvalReport:
    """Dataset-level evaluation: pooled accuracy, latency, and the control block."""

    mode: str
    tracker_name: str
    schedule: ThresholdSchedule
    accuracy: AccuracyReport
    control_accuracy: AccuracyReport
    latency: LatencyStats | None
    sequence_results: list[SequenceEvalResult]
    control_results: list[SequenceEvalResult]
    skipped: list[tuple[str, str]]
    violations: list[tuple[str, str]]

    @property
    def any_violation(self) -> bool:
        return bool(self.violations)


def _ground_truth_end_points(sequence: Sequence, mode: str, gt_dir: Path | None,
                             *, tau: float, min_area: int) -> np.ndarray:
    """End labels for scoring: 2-D mask centroids or 3-D lifted positions (mm)."""
    from . import groundtruth  # deferred: groundtruth imports geometry/imaging

    if gt_dir is not None or mode == "3d":
        gt = groundtruth.get_or_build(sequence, gt_dir=gt_dir, tau=tau,
                                      min_area=min_area)
        if mode == "2d":
            points = np.array([r.left_px for r in gt.end_records], dtype=float)
        else:
            lifted = [r.position_mm for r in gt.end_records if r.position_mm is not None]
            points = np.array(lifted, dtype=float)
        if points.size == 0:
            raise DatasetError(f"{sequence.key}: no usable end labels in ground truth")
        return points
    return end_points_for(sequence, tau=tau, min_area=min_area)


def run_dataset_eval(dataset: Dataset, tracker_factory, *, mode: str = "2d",
                     schedule: ThresholdSchedule | None = None,
                     measure_latency: bool = False, jobs: int = 1,
                     gt_dir: Path | str | None = None,
                     tau: float = imaging.DEFAULT_IR_THRESHOLD,
                     min_area: int = imaging.DEFAULT_MIN_AREA) -> EvalReport:
    """Evaluate a tracker over every usable sequence of a dataset.

    ``tracker_factory`` is a zero-argument callable; a fresh instance is made
    per sequence (trackers are single-sequence, stateful objects).  Distances
    are pooled over all points of all sequences, so every point carries the
    same weight regardless of its sequence.  Failed sequences keep their
    points in the denominator as guaranteed misses.  The control tracker runs
    alongside on the same ground truth.  When ``measure_latency`` is set, all
    tracker runs happen serially on one dedicated thread, whatever ``jobs``
    says; accuracy-only runs may fan out across sequences.
    """
    if schedule is None:
        schedule = ThresholdSchedule.default_2d() if mode == "2d" \
            else ThresholdSchedule.default_3d()
    expected_unit = "px" if mode == "2d" else "mm"
    if schedule.unit != expected_unit:
        raise ValueError(f"{mode} evaluation needs a schedule in {expected_unit}, "
                         f"got {schedule.unit}")
    gt_dir = Path(gt_dir) if gt_dir is not None else None

    plan: list[tuple[Sequence, np.ndarray, np.ndarray]] = []
    skipped: list[tuple[str, str]] = list(dataset.skipped)
    for sequence in dataset.sequences:
        try:
            starts = start_points_for(sequence, tau=tau, min_area=min_area)
            if starts.shape[0] == 0:
                raise DatasetError(f"{sequence.key}: no start points")
            gt_points = _ground_truth_end_points(sequence, mode, gt_dir,
                                                 tau=tau, min_area=min_area)
        except DatasetError as exc:
            skipped.append((sequence.key, str(exc)))
            continue
        plan.append((sequence, starts, gt_points))
    if not plan:
        raise DatasetError("no usable sequences in dataset")

    violations: list[tuple[str, str]] = []

    def eval_one(item, factory, latency_flag) -> SequenceEvalResult:
        sequence, starts, _ = item
        tracker = factory()
        try:
            return run_sequence_eval(sequence, tracker, mode=mode,
                                     measure_latency=latency_flag,
                                     tau=tau, min_area=min_area,
                                     start_points=starts)
        except ContractViolation as exc:
            violations.append((sequence.key, str(exc)))
            return SequenceEvalResult(
                sequence_key=sequence.key, status="failed",
                n_points=starts.shape[0], frame_count=sequence.frame_count,
                start_points=starts, failure_reason=f"contract violation: {exc}")

    if measure_latency:
        # timing purity beats throughput: one dedicated thread, strictly serial
        with ThreadPoolExecutor(max_workers=1) as pool:
            results = pool.submit(
                lambda: [eval_one(item, tracker_factory, True) for item in plan]
            ).result()
    elif jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda item: eval_one(item, tracker_factory, False), plan))
    else:
        results = [eval_one(item, tracker_factory, False) for item in plan]

    control_factory = _control_factory(mode)
    control_results = [eval_one(item, control_factory, False) for item in plan]

    accuracy = _score(results, plan, schedule)
    control_accuracy = _score(control_results, plan, schedule)

    latency = None
    if measure_latency:
        pooled = np.concatenate([r.latencies_ms for r in results]) \
            if results else np.empty(0)
        if pooled.size:
            latency = latency_stats(pooled)

    if hasattr(tracker_factory, "tracker_name"):
        tracker_name = tracker_factory.tracker_name
    else:
        probe = tracker_factory()
        tracker_name = getattr(probe, "name", type(probe).__name__)

    return EvalReport(
        mode=mode,
        tracker_name=tracker_name,
        schedule=schedule,
        accuracy=accuracy,
        control_accuracy=control_accuracy,
        latency=latency,
        sequence_results=results,
        control_results=control_results,
        skipped=skipped,
        violations=violations,
    )


def _control_factory(mode: str):
    if mode == "2d":
        return ControlTracker
    from .trackers import Control3DTracker  # deferred: trackers imports this module
    return Control3DTracker


def _score(results: list[SequenceEvalResult],
           plan: list[tuple[Sequence, np.ndarray, np.ndarray]],
           schedule: ThresholdSchedule) -> AccuracyReport:
    samples: list[DistanceSample] = []
    extra_misses: dict[str, int] = {}
    for result, (_, _, gt_points) in zip(results, plan):
        if result.status != "ok":
            extra_misses[result.sequence_key] = result.n_points
            continue
        distances = nearest_distances(result.final_estimates, gt_points)
        samples.extend(
            DistanceSample(result.sequence_key, i, float(d))
            for i, d in enumerate(distances))
    return build_accuracy_report(samples, schedule, extra_misses)
