"""Instrumented tracker doubles for contract and harness tests."""

from __future__ import annotations

import time

import numpy as np

from .harness import PointTracker


class SpyTracker(PointTracker):
    """Zero-motion tracker that logs every frame it is shown.

    ``seen`` collects (frame_index, left checksum) pairs so tests can prove
    each frame arrived exactly once and strictly in order.
    """

    name = "spy"

    def __init__(self):
        self.seen: list[tuple[int, float]] = []
        self.init_calls = 0

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        self.init_calls += 1
        self.estimates = np.array(start_points, dtype=float).reshape(-1, 2)
        self.seen.append((0, float(np.sum(first_left_frame))))

    def step(self, left_frame, right_frame=None):
        self.seen.append((len(self.seen), float(np.sum(left_frame))))
        return self.estimates.copy()


class WrongLengthTracker(PointTracker):
    """Drops one point at a configurable frame: a contract violation."""

    name = "wrong-length"

    def __init__(self, offending_frame: int = 1):
        self.offending_frame = offending_frame
        self._frame = 0

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        self.estimates = np.array(start_points, dtype=float).reshape(-1, 2)

    def step(self, left_frame, right_frame=None):
        self._frame += 1
        if self._frame >= self.offending_frame:
            return self.estimates[:-1].copy()
        return self.estimates.copy()


class ExplodingTracker(PointTracker):
    """Raises partway through a sequence (a failed submission, not a violation)."""

    name = "exploding"

    def __init__(self, explode_at: int = 1):
        self.explode_at = explode_at
        self._frame = 0

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        self.estimates = np.array(start_points, dtype=float).reshape(-1, 2)

    def step(self, left_frame, right_frame=None):
        self._frame += 1
        if self._frame >= self.explode_at:
            raise RuntimeError("synthetic tracker failure")
        return self.estimates.copy()


class SleepyTracker(PointTracker):
    """Sleeps a fixed time per step and records its own internal durations.

    Used to audit timer placement: the harness-reported latency must bracket
    the tracker's self-measured duration tightly.
    """

    name = "sleepy"

    def __init__(self, sleep_s: float = 0.005):
        self.sleep_s = sleep_s
        self.internal_ms: list[float] = []

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        self.estimates = np.array(start_points, dtype=float).reshape(-1, 2)

    def step(self, left_frame, right_frame=None):
        t0 = time.perf_counter()
        time.sleep(self.sleep_s)
        self.internal_ms.append((time.perf_counter() - t0) * 1000.0)
        return self.estimates.copy()
