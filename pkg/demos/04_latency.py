"""
Latency profiling
=================

Efficiency is scored from wall time per frame: (mean + p95 + p99) / 3, in
milliseconds, where the percentiles use the nearest-rank rule (sorted value
at 1-based index ceil(q * n)).  Lower is better, and the score only counts
when the same run reaches delta_avg >= 0.5 -- otherwise a tracker could
"win" by doing nothing quickly.

First the arithmetic on a sample small enough to check by hand, then a real
timed run.
"""

import tempfile
from pathlib import Path

from trackbench.harness import run_dataset_eval
from trackbench.dataset import load_dataset
from trackbench.metrics import (efficiency_eligible, latency_stats,
                                percentile_nearest_rank)
from trackbench.synth import SynthConfig, generate_dataset
from trackbench.trackers import build_tracker_factory

# 98 frames at 10 ms plus one at 100 and one at 200.  The mean is
# (98*10 + 300) / 100 = 12.8.  ceil(0.95 * 100) = 95 -> the 95th sorted
# value is still 10; ceil(0.99 * 100) = 99 -> 100.  Score = 122.8 / 3.
sample = [10.0] * 98 + [100.0, 200.0]
stats = latency_stats(sample)
print(f"mean = {stats.mean:.1f} ms")
print(f"p95  = {percentile_nearest_rank(sample, 0.95):.1f} ms "
      f"(same as stats.p95 = {stats.p95:.1f})")
print(f"p99  = {stats.p99:.1f} ms")
print(f"score = ({stats.mean} + {stats.p95} + {stats.p99}) / 3 "
      f"= {stats.score:.4f} ms")
assert abs(stats.score - 122.8 / 3) < 1e-12

# Now time the template tracker for real.  With measure_latency on, the
# harness serializes all timed work onto one dedicated thread so that
# parallel sequence scoring can never pollute the clock.
out = Path(tempfile.mkdtemp(prefix="trackbench_demo_")) / "synth"
config = SynthConfig(
    num_sequences=2,
    frames_per_sequence=12,
    image_size=(320, 448),
    blob_count=5,
    motion="translation",
    motion_px=(2.0, 0.0),
    placement="column",
    placement_margin=64,
    grid_aligned=True,
    seed=19,
)
generate_dataset(config, out)
dataset = load_dataset(out)

report = run_dataset_eval(dataset, build_tracker_factory("template"),
                          measure_latency=True)
lat = report.latency
print(f"\ntemplate tracker, {lat.n_frames} timed steps:")
print(f"  mean {lat.mean:.3f} ms   p95 {lat.p95:.3f} ms   "
      f"p99 {lat.p99:.3f} ms")
print(f"  score {lat.score:.3f} ms")
init_ms = [r.init_latency_ms for r in report.sequence_results]
print(f"  init times (excluded from the score): "
      f"{', '.join(f'{v:.3f}' for v in init_ms)} ms")

eligible = efficiency_eligible(report.accuracy.delta_avg)
print(f"  delta_avg {report.accuracy.delta_avg:.2f} >= 0.5, "
      f"so the score counts: {eligible}")
