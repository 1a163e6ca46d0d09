"""trackbench: streaming evaluation for stereo surgical point tracking.

The package covers the full measurement stack of a tattooed-tissue-point
benchmark: dataset loading, infrared segmentation into point labels, stereo
lifting of those labels to millimetre 3-D positions, threshold-sweep accuracy
scores, a latency-aware streaming harness, classical baseline trackers, and a
synthetic-data generator with analytic ground truth for end-to-end checks.
"""

__version__ = "0.1.0"

from .dataset import (  # noqa: F401
    CameraCalibration,
    Dataset,
    DatasetError,
    CalibrationError,
    FrameStreamError,
    Sequence,
    load_dataset,
)
from .metrics import ThresholdSchedule, delta_avg, delta_at_threshold, latency_stats  # noqa: F401
from .harness import PointTracker, ControlTracker, run_dataset_eval  # noqa: F401
