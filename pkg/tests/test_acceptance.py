"""End-to-end verification gates for the measurement stack.

Each test pins one externally checkable guarantee: metric equivalence against
brute-force oracles, the depth equation against its closed form, generator ->
ground-truth closure, the streaming contract, exact control-tracker scores on
engineered fixtures, and the latency statistics on a hand-computable sample
set.  Timed tests assert their own runtime budget so the suite stays fast.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from conftest import TEXTURE20_CONFIG
from trackbench import cli
from trackbench.dataset import CameraCalibration, load_dataset
from trackbench.geometry import backproject, depth_from_disparity, project_left
from trackbench.groundtruth import load_ground_truth
from trackbench.harness import (
    ControlTracker,
    run_dataset_eval,
    run_sequence_eval,
    start_points_for,
)
from trackbench.imaging import morphological_open
from trackbench.metrics import (
    ThresholdSchedule,
    delta_at_threshold,
    delta_avg,
    format_percent,
    latency_stats,
)
from trackbench.testing import SpyTracker, WrongLengthTracker
from trackbench.trackers import TemplateTracker


# ---------------------------------------------------------------------------
# accuracy metric vs brute-force oracle

def _oracle_nearest(predicted, ground_truth):
    """Plain double loop: distance from each prediction to its nearest label."""
    out = []
    for p in predicted:
        best = math.inf
        for g in ground_truth:
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, g)))
            best = min(best, d)
        out.append(best)
    return out


def test_metric_matches_bruteforce_oracle_on_random_instances():
    started = time.perf_counter()
    rng = np.random.default_rng(20240917)
    from trackbench.metrics import nearest_distances

    for _ in range(1000):
        dim = int(rng.choice([2, 3]))
        n_pred = int(rng.integers(1, 51))
        n_gt = int(rng.integers(1, 51))
        scale = float(rng.uniform(0.5, 100.0))
        predicted = rng.normal(0.0, scale, size=(n_pred, dim))
        ground_truth = rng.normal(0.0, scale, size=(n_gt, dim))

        distances = nearest_distances(predicted, ground_truth)
        oracle = _oracle_nearest(predicted, ground_truth)
        # the vectorized reduction may differ from the loop by one ulp
        assert np.allclose(distances, np.array(oracle), rtol=1e-12, atol=0.0)

        thresholds = np.sort(rng.uniform(0.1, 3.0 * scale, size=3))
        while len(set(thresholds)) < 3:
            thresholds = np.sort(rng.uniform(0.1, 3.0 * scale, size=3))
        schedule = ThresholdSchedule(tuple(float(t) for t in thresholds), "px")

        fractions = []
        for t in schedule.thresholds:
            count = sum(1 for d in oracle if d < t)  # strict, by hand
            assert delta_at_threshold(distances, t) == count / n_pred
            fractions.append(count / n_pred)
        assert abs(delta_avg(distances, schedule) - np.mean(fractions)) <= 1e-12
    assert time.perf_counter() - started < 10.0


def test_hand_derived_schedule_average():
    distances = np.array([3.0, 10.0, 20.0])
    value = delta_avg(distances, ThresholdSchedule.default_2d())
    assert abs(100.0 * value - 66.67) <= 0.005
    assert format_percent(value) == "66.67"


def test_error_equal_to_threshold_never_counts():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        distances = rng.uniform(0.0, 50.0, size=n)
        # plant exact hits: a few entries equal to the threshold itself
        t = float(rng.uniform(1.0, 50.0))
        k = int(rng.integers(1, 5))
        planted = np.concatenate([distances, np.full(k, t)])
        expected = np.count_nonzero(planted < t) / planted.size
        assert delta_at_threshold(planted, t) == expected
        # none of the planted exact hits were counted
        assert delta_at_threshold(np.full(k, t), t) == 0.0


# ---------------------------------------------------------------------------
# stereo depth equation and projection round trip

def test_depth_equation_matches_closed_form():
    started = time.perf_counter()
    rng = np.random.default_rng(31)
    for _ in range(10_000):
        b = float(rng.uniform(0.001, 0.02))
        f = float(rng.uniform(300.0, 2500.0))
        cx = float(rng.uniform(1.0, 1279.0))
        cpx = float(rng.uniform(1.0, 1279.0))
        calib = CameraCalibration(
            left_focal_x=f, left_focal_y=f, left_principal_x=cx,
            left_principal_y=512.0, right_focal_x=f, right_focal_y=f,
            right_principal_x=cpx, right_principal_y=512.0, baseline_b=b)
        x = float(rng.uniform(0.0, 1280.0))
        adjusted = float(rng.uniform(0.5, 300.0))
        x_right = x - cx + cpx - adjusted
        z = depth_from_disparity(x, x_right, calib)
        expected = b * f / ((x - cx) - (x_right - cpx))
        assert abs(z - expected) / expected <= 1e-12

    # projection -> backprojection closure on a batch of random scene points
    calib = CameraCalibration(
        left_focal_x=1035.0, left_focal_y=1035.0, left_principal_x=640.0,
        left_principal_y=512.0, right_focal_x=1035.0, right_focal_y=1035.0,
        right_principal_x=655.0, right_principal_y=512.0, baseline_b=0.004)
    z = rng.uniform(0.02, 0.2, size=10_000)
    x_mm = rng.uniform(-30.0, 30.0, size=10_000)
    y_mm = rng.uniform(-25.0, 25.0, size=10_000)
    points_mm = np.stack([x_mm, y_mm, z * 1000.0], axis=1)
    pixels = project_left(points_mm, calib)
    recovered = backproject(pixels, z, calib)
    assert np.max(np.abs(recovered - points_mm)) < 1e-9
    assert time.perf_counter() - started < 5.0


# ---------------------------------------------------------------------------
# morphology

def test_opening_is_idempotent_and_anti_extensive():
    started = time.perf_counter()
    rng = np.random.default_rng(5)
    for _ in range(500):
        h = int(rng.integers(8, 48))
        w = int(rng.integers(8, 48))
        density = float(rng.uniform(0.2, 0.8))
        mask = rng.random((h, w)) < density
        opened = morphological_open(mask)
        assert not np.any(opened & ~mask)              # anti-extensive
        assert np.array_equal(morphological_open(opened), opened)  # idempotent

    isolated = np.zeros((9, 9), dtype=bool)
    isolated[4, 4] = True
    assert not morphological_open(isolated).any()      # lone pixel removed
    assert time.perf_counter() - started < 30.0


# ---------------------------------------------------------------------------
# generator -> ground-truth closure

def test_ground_truth_recovers_generator_manifest(closure_root, tmp_path):
    started = time.perf_counter()
    gt_dir = tmp_path / "gt"
    assert cli.main(["make-gt", str(closure_root), "--out", str(gt_dir)]) == 0

    manifest = json.loads((closure_root / "manifest.json").read_text())
    dataset = load_dataset(closure_root)
    assert len(dataset.sequences) == 10
    by_key = {(e["session_id"], e["sequence_id"]): e
              for e in manifest["sequences"]}

    for seq in dataset.sequences:
        entry = by_key[(seq.session_id, seq.sequence_id)]
        gt = load_ground_truth(
            gt_dir / f"{seq.session_id}_{seq.sequence_id}.json")
        for which, records in (("start", gt.start_records),
                               ("end", gt.end_records)):
            expected = sorted((p[which] for p in entry["points"]),
                              key=lambda e: (e["left_px"][1], e["left_px"][0]))
            assert len(records) == len(expected)
            for record, point in zip(records, expected):
                px_err = math.hypot(record.left_px[0] - point["left_px"][0],
                                    record.left_px[1] - point["left_px"][1])
                assert px_err < 0.5
                assert record.position_mm is not None
                mm_err = math.dist(record.position_mm, point["position_mm"])
                assert mm_err < 0.01
    assert time.perf_counter() - started < 120.0


# ---------------------------------------------------------------------------
# streaming contract

def test_every_fixture_sequence_streams_in_order(static_root, translation10_root,
                                                 translation70_root, closure_root,
                                                 texture20_root, stereo3d_root):
    from trackbench.dataset import open_frame_stream

    roots = (static_root, translation10_root, translation70_root,
             closure_root, texture20_root, stereo3d_root)
    audited = 0
    for root in roots:
        for seq in load_dataset(root).sequences:
            expected = []
            stream = open_frame_stream(seq, "left")
            for index in range(stream.frame_count):
                expected.append((index, float(np.sum(next(stream)))))
            spy = SpyTracker()
            result = run_sequence_eval(seq, spy)
            assert result.status == "ok"
            assert spy.seen == expected    # exact order 0..n-1, no lookahead
            audited += 1
    assert audited == 18


def test_contract_violation_exits_with_status_three(static_root,
                                                    register_test_tracker,
                                                    capsys):
    register_test_tracker("wrong-length", WrongLengthTracker)
    code = cli.main(["eval2d", str(static_root), "--tracker", "wrong-length"])
    capsys.readouterr()
    assert code == 3


# ---------------------------------------------------------------------------
# exact control-tracker scores on engineered fixtures

def test_control_scores_are_exact_round_numbers(static_dataset,
                                                translation10_dataset,
                                                translation70_dataset):
    static = run_dataset_eval(static_dataset, ControlTracker)
    assert static.accuracy.delta_avg == 1.0
    assert format_percent(static.accuracy.delta_avg) == "100.00"

    seventy = run_dataset_eval(translation70_dataset, ControlTracker)
    assert seventy.accuracy.delta_avg == 0.0
    assert format_percent(seventy.accuracy.delta_avg) == "0.00"

    ten = run_dataset_eval(translation10_dataset, ControlTracker)
    assert ten.accuracy.delta_avg == 0.6
    assert format_percent(ten.accuracy.delta_avg) == "60.00"
    # the 10 px error misses below-10 thresholds and clears the rest exactly
    per = ten.accuracy.per_threshold
    assert per[4.0] == 0.0 and per[8.0] == 0.0
    assert per[16.0] == 1.0 and per[32.0] == 1.0 and per[64.0] == 1.0


# ---------------------------------------------------------------------------
# latency statistics

def test_latency_statistics_on_hand_computable_sample():
    samples = np.array([10.0] * 98 + [100.0, 200.0])
    rng = np.random.default_rng(3)
    rng.shuffle(samples)  # order must not matter
    stats = latency_stats(samples)
    assert stats.n_frames == 100
    assert stats.mean == 12.8
    assert stats.p95 == 10.0
    assert stats.p99 == 100.0
    assert stats.score == (12.8 + 10.0 + 100.0) / 3.0
    assert abs(stats.score - 40.9333) < 5e-5


# ---------------------------------------------------------------------------
# template tracker on the textured translation fixture

def test_template_tracker_follows_textured_translation(texture20_root):
    started = time.perf_counter()
    dataset = load_dataset(texture20_root)
    errors = []
    for seq in dataset.sequences:
        starts = start_points_for(seq)
        result = run_sequence_eval(seq, TemplateTracker())
        assert result.status == "ok"
        step = np.asarray(TEXTURE20_CONFIG.motion_px, dtype=float)
        expected = starts + step * (seq.frame_count - 1)
        errors.extend(np.linalg.norm(result.final_estimates - expected, axis=1))
    errors = np.array(errors)
    assert errors.size == 10
    assert np.count_nonzero(errors < 2.0) / errors.size >= 0.9
    assert time.perf_counter() - started < 60.0


# ---------------------------------------------------------------------------
# optional: real benchmark download, when present

REAL_ROOT = os.environ.get("TRACKBENCH_STIR_ROOT")


@pytest.mark.skipif(not REAL_ROOT, reason="set TRACKBENCH_STIR_ROOT to the "
                    "benchmark download to enable")
def test_real_dataset_statistics():
    dataset = load_dataset(REAL_ROOT)
    summary = dataset.summary()
    assert summary.total_sequences == 60
    assert summary.total_points == 496
    assert summary.sessions == ["02", "03", "04", "05", "06", "07", "08", "09", "11"]
    assert summary.in_vivo_sessions == 5
    assert summary.ex_vivo_sessions == 4
    assert abs(summary.mean_clip_seconds - 8.9) <= 0.2
    assert all(seq.image_size == (1280, 1024) for seq in dataset.sequences)
