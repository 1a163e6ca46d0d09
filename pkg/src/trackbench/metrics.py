"""Accuracy and efficiency scoring.

Accuracy is a threshold sweep over endpoint errors: for each threshold l the
score is the fraction of tracked points whose distance to the *nearest*
ground-truth endpoint is strictly below l, and the headline number averages
those fractions over the schedule.  Pooling is global: every point of every
sequence contributes one sample with equal weight.

Efficiency summarizes per-frame processing latency as
(mean + p95 + p99) / 3, with nearest-rank percentiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLDS_2D_PX = (4.0, 8.0, 16.0, 32.0, 64.0)
DEFAULT_THRESHOLDS_3D_MM = (2.0, 4.0, 8.0, 16.0, 32.0)
DEFAULT_ELIGIBILITY_MIN_DELTA_AVG = 0.5


@dataclass(frozen=True)
class ThresholdSchedule:
    """Ascending error thresholds with their unit ('px' or 'mm')."""

    thresholds: tuple[float, ...]
    unit: str

    def __post_init__(self):
        if not self.thresholds:
            raise ValueError("threshold schedule is empty")
        if any(t <= 0 for t in self.thresholds):
            raise ValueError("thresholds must be positive")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ValueError("thresholds must be ascending")
        if len(set(self.thresholds)) != len(self.thresholds):
            raise ValueError("thresholds must be distinct")
        if self.unit not in ("px", "mm"):
            raise ValueError(f"unit must be 'px' or 'mm', got {self.unit!r}")

    @classmethod
    def default_2d(cls) -> "ThresholdSchedule":
        return cls(DEFAULT_THRESHOLDS_2D_PX, "px")

    @classmethod
    def default_3d(cls) -> "ThresholdSchedule":
        return cls(DEFAULT_THRESHOLDS_3D_MM, "mm")

    def label(self, threshold: float) -> str:
        t = int(threshold) if float(threshold).is_integer() else threshold
        return f"<{t}{self.unit}"


@dataclass(frozen=True)
class DistanceSample:
    """One pooled endpoint error: a tracked point vs its nearest ground truth."""

    sequence_key: str
    point_index: int
    distance: float

    def __post_init__(self):
        if not math.isfinite(self.distance) or self.distance < 0:
            raise ValueError(f"distance must be finite and non-negative: {self.distance}")


def nearest_distances(predicted: np.ndarray, ground_truth: np.ndarray) -> np.ndarray:
    """Euclidean distance from each predicted point to its nearest GT point.

    ``predicted`` is (N, d), ``ground_truth`` (M, d) with M >= 1; matching is
    many-to-one, so several predictions may share a nearest ground-truth point.
    """
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    ground_truth = np.atleast_2d(np.asarray(ground_truth, dtype=float))
    if ground_truth.shape[0] == 0:
        raise ValueError("sequence has no end labels to match against")
    if predicted.shape[1] != ground_truth.shape[1]:
        raise ValueError(
            f"dimension mismatch: predicted {predicted.shape[1]}-D vs "
            f"ground truth {ground_truth.shape[1]}-D")
    diff = predicted[:, None, :] - ground_truth[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2)).min(axis=1)


def delta_at_threshold(distances, threshold: float, extra_misses: int = 0) -> float:
    """Fraction of samples with distance strictly below ``threshold``.

    ``extra_misses`` adds denominator-only samples for points whose tracker
    failed outright (equivalent to an infinite error).
    """
    distances = np.asarray(distances, dtype=float)
    if extra_misses < 0:
        raise ValueError("extra_misses must be non-negative")
    n = distances.size + extra_misses
    if n == 0:
        raise ValueError("no distance samples")
    return float(np.count_nonzero(distances < threshold)) / n


def delta_avg(distances, schedule: ThresholdSchedule, extra_misses: int = 0) -> float:
    """Mean of per-threshold fractions over the schedule (the headline score)."""
    return sum(delta_at_threshold(distances, t, extra_misses)
               for t in schedule.thresholds) / len(schedule.thresholds)


def format_percent(fraction: float) -> str:
    return f"{100.0 * fraction:.2f}"


@dataclass
class AccuracyReport:
    """Pooled threshold-sweep scores plus per-sequence diagnostics."""

    schedule: ThresholdSchedule
    per_threshold: dict[float, float]
    delta_avg: float
    n_samples: int
    n_failed: int
    per_sequence: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "unit": self.schedule.unit,
            "thresholds": list(self.schedule.thresholds),
            "per_threshold": {self.schedule.label(t): v
                              for t, v in self.per_threshold.items()},
            "delta_avg": self.delta_avg,
            "n_samples": self.n_samples,
            "n_failed": self.n_failed,
            "per_sequence": self.per_sequence,
        }


def build_accuracy_report(samples: list[DistanceSample], schedule: ThresholdSchedule,
                          extra_misses_by_sequence: dict[str, int] | None = None
                          ) -> AccuracyReport:
    """Pool distance samples across sequences into one report.

    ``extra_misses_by_sequence`` counts points on failed sequences that must
    still occupy the denominator.
    """
    extra = dict(extra_misses_by_sequence or {})
    distances = np.array([s.distance for s in samples], dtype=float)
    total_extra = sum(extra.values())
    per_threshold = {t: delta_at_threshold(distances, t, total_extra)
                     for t in schedule.thresholds}
    avg = sum(per_threshold.values()) / len(schedule.thresholds)

    per_sequence: dict[str, dict] = {}
    keys = sorted({s.sequence_key for s in samples} | set(extra))
    for key in keys:
        seq_d = np.array([s.distance for s in samples if s.sequence_key == key])
        seq_extra = extra.get(key, 0)
        entry = {
            "n_points": int(seq_d.size) + seq_extra,
            "n_failed": seq_extra,
        }
        if seq_d.size + seq_extra:
            entry["delta_avg"] = delta_avg(seq_d, schedule, seq_extra)
            entry["median_distance"] = float(np.median(seq_d)) if seq_d.size else None
        per_sequence[key] = entry

    return AccuracyReport(
        schedule=schedule,
        per_threshold=per_threshold,
        delta_avg=avg,
        n_samples=int(distances.size) + total_extra,
        n_failed=total_extra,
        per_sequence=per_sequence,
    )


# ---------------------------------------------------------------------------
# latency / efficiency

def percentile_nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: sorted value at 1-based index ceil(q * n)."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("no latency samples")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    rank = math.ceil(q * values.size)
    return float(values[rank - 1])


@dataclass(frozen=True)
class LatencyStats:
    n_frames: int
    mean: float
    p95: float
    p99: float

    @property
    def score(self) -> float:
        """Efficiency score: (mean + p95 + p99) / 3."""
        return (self.mean + self.p95 + self.p99) / 3.0

    def to_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "mean_ms": self.mean,
            "p95_ms": self.p95,
            "p99_ms": self.p99,
            "score_ms": self.score,
        }


def latency_stats(latencies_ms) -> LatencyStats:
    """Summarize per-frame latencies (ms) into mean/p95/p99 and the score."""
    arr = np.asarray(latencies_ms, dtype=float)
    if arr.size == 0:
        raise ValueError("no latency samples")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("latencies must be finite and non-negative")
    return LatencyStats(
        n_frames=int(arr.size),
        mean=float(arr.mean()),
        p95=percentile_nearest_rank(arr, 0.95),
        p99=percentile_nearest_rank(arr, 0.99),
    )


def efficiency_eligible(delta_avg_value: float,
                        minimum: float = DEFAULT_ELIGIBILITY_MIN_DELTA_AVG) -> bool:
    """Whether an entry is accurate enough for its latency score to count."""
    return delta_avg_value >= minimum
