"""Shared synthetic fixture datasets, generated once per test session.

All fixture trees live under pytest's session temp directory and are treated
as read-only by tests; anything that needs to mutate a dataset makes its own
copy.  Geometry of the fixtures (why the control-tracker scores come out to
exact round numbers):

* every blob's nearest ground-truth end point is its *own* end point, because
  the column layouts space blobs 80 px apart while the motion is at most
  70 px, and
* motion is integral and the scenes are grid-aligned, so mask centroids and
  all disparities are exact.
"""

from __future__ import annotations

import pytest

from trackbench.dataset import load_dataset
from trackbench.synth import SynthConfig, generate_dataset

# static scene, 2 sequences: control tracking is perfect (delta_avg = 1.0)
STATIC_CONFIG = SynthConfig(
    num_sequences=2,
    frames_per_sequence=5,
    image_size=(320, 256),
    blob_count=5,
    blob_depths_m=(0.05, 0.0625, 0.08),
    grid_aligned=True,
    seed=11,
)

# 2 px/frame over 6 frames: every point ends exactly 10 px from its start,
# so the zero-motion control scores exactly at thresholds 16, 32 and 64
TRANSLATION10_CONFIG = SynthConfig(
    num_sequences=1,
    frames_per_sequence=6,
    image_size=(320, 448),
    blob_count=5,
    motion="translation",
    motion_px=(2.0, 0.0),
    placement="column",
    grid_aligned=True,
    seed=23,
)

# 10 px/frame over 8 frames: 70 px total, beyond the largest 2-D threshold
TRANSLATION70_CONFIG = SynthConfig(
    num_sequences=1,
    frames_per_sequence=8,
    image_size=(320, 448),
    blob_count=5,
    motion="translation",
    motion_px=(10.0, 0.0),
    placement="column",
    grid_aligned=True,
    seed=29,
)

# ground-truth closure set: 10 short sequences over five distinct depths
CLOSURE_CONFIG = SynthConfig(
    num_sequences=10,
    frames_per_sequence=2,
    image_size=(320, 256),
    blob_count=5,
    blob_depths_m=(0.04, 0.05, 0.0625, 0.08, 0.1),
    grid_aligned=True,
    seed=37,
)

# textured translation for template tracking: 2 px/frame for 20 frames.
# The 64 px margin keeps every point's half-scale search window (template
# half-side 14 + search radius 16 = 30 px) inside the frame for all frames.
TEXTURE20_CONFIG = SynthConfig(
    num_sequences=2,
    frames_per_sequence=20,
    image_size=(320, 448),
    blob_count=5,
    motion="translation",
    motion_px=(2.0, 0.0),
    placement="column",
    placement_margin=64,
    grid_aligned=True,
    seed=41,
)


# flat-background static stereo scene: with no plane texture inside the NCC
# patches, the video-frame stereo lift is exact even though the blob depths
# differ, so 3-D control scores are exact too
STEREO3D_CONFIG = SynthConfig(
    num_sequences=2,
    frames_per_sequence=3,
    image_size=(320, 256),
    blob_count=5,
    blob_depths_m=(0.05, 0.0625, 0.08),
    background_amplitude=0.0,
    grid_aligned=True,
    seed=61,
)


def _generate(tmp_path_factory, name: str, config: SynthConfig):
    root = tmp_path_factory.mktemp(name)
    generate_dataset(config, root)
    return root


@pytest.fixture(scope="session")
def static_root(tmp_path_factory):
    return _generate(tmp_path_factory, "synth_static", STATIC_CONFIG)


@pytest.fixture(scope="session")
def translation10_root(tmp_path_factory):
    return _generate(tmp_path_factory, "synth_tr10", TRANSLATION10_CONFIG)


@pytest.fixture(scope="session")
def translation70_root(tmp_path_factory):
    return _generate(tmp_path_factory, "synth_tr70", TRANSLATION70_CONFIG)


@pytest.fixture(scope="session")
def closure_root(tmp_path_factory):
    return _generate(tmp_path_factory, "synth_closure", CLOSURE_CONFIG)


@pytest.fixture(scope="session")
def texture20_root(tmp_path_factory):
    return _generate(tmp_path_factory, "synth_texture20", TEXTURE20_CONFIG)


@pytest.fixture(scope="session")
def stereo3d_root(tmp_path_factory):
    return _generate(tmp_path_factory, "synth_stereo3d", STEREO3D_CONFIG)


@pytest.fixture(scope="session")
def stereo3d_dataset(stereo3d_root):
    return load_dataset(stereo3d_root)


@pytest.fixture(scope="session")
def static_dataset(static_root):
    return load_dataset(static_root)


@pytest.fixture(scope="session")
def translation10_dataset(translation10_root):
    return load_dataset(translation10_root)


@pytest.fixture(scope="session")
def translation70_dataset(translation70_root):
    return load_dataset(translation70_root)


@pytest.fixture
def register_test_tracker():
    """Register tracker doubles in the CLI registry, cleaned up afterwards."""
    from trackbench import trackers

    added = []

    def _register(name, factory):
        trackers.register_tracker(name, factory)
        added.append(name)

    yield _register
    for name in added:
        trackers._REGISTRY.pop(name, None)
