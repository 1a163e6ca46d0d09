"""Synthetic benchmark generator with analytically known ground truth.

Writes datasets in the exact on-disk layout the loader expects, alongside a
``manifest.json`` recording every true quantity: per-point 2-D positions in
both eyes for every frame, adjusted/raw disparities, depths, and millimetre
3-D positions, all derived from one pinhole model shared with the geometry
module.

Scene model
-----------
Tracked points are bright Gaussian blobs.  Each blob sits at a constant depth
and moves fronto-parallel, so its left-eye pixel track fully determines the
right-eye track via a constant per-blob disparity.  Infrared images show only
the blobs on black; white-light frames show the blobs as texture bumps over a
cosine-product background plane at its own constant depth.  The plane is
tissue, so it translates with the same pixel motion as the blobs; it is
evaluated analytically per frame and per eye (shifted by the plane's own
disparity, not by copying left pixels), which keeps sub-pixel motion exact.

Motion models ("''static''", "''translation''", "''sinusoidal''"): translation
advances every blob by ``motion_px`` per frame; sinusoidal swings blobs along
``motion_px`` as a half-sine, returning to the start by the final frame.

``grid_aligned`` mode rounds every per-frame position to integer pixels and
snaps depths so adjusted disparities are integers too.  Thresholded blob
pixel sets are then symmetric about their centres, which makes recovered
centroids — and everything downstream — exact rather than merely close.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    CameraCalibration,
    format_video_filename,
    save_calibration,
    write_image,
    write_mask,
)
from .geometry import backproject
from .imaging import morphological_open, threshold_ir

MANIFEST_SCHEMA_VERSION = 1
MOTION_MODELS = ("static", "translation", "sinusoidal")
# non-integer texture periods so no integer translation maps the background
# exactly onto itself (that would create NCC ties inside search windows)
TEXTURE_PERIOD_X = 23.7
TEXTURE_PERIOD_Y = 17.3


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    num_sequences: int = 1
    frames_per_sequence: int = 10
    image_size: tuple[int, int] = (1280, 1024)  # (width, height)
    blob_count: int = 5
    blob_sigma: float = 2.0            # Gaussian radius parameter, px
    motion: str = "static"
    motion_px: tuple[float, float] = (0.0, 0.0)  # per-frame step / swing amplitude
    seed: int = 0
    noise_level: float = 0.0           # white-light additive Gaussian noise, DN
    # stereo scene
    baseline_m: float = 0.004
    focal_px: float = 500.0
    left_principal: tuple[float, float] | None = None   # default: image centre
    right_principal: tuple[float, float] | None = None
    blob_depths_m: tuple[float, ...] = (0.05,)          # cycled over blobs
    plane_depth_m: float = 0.05
    # layout
    placement: str = "diagonal"        # diagonal | column
    blob_positions: tuple[tuple[float, float], ...] | None = None
    row_step: int | None = None
    col_step: int = 40
    min_separation: float = 24.0
    placement_margin: int | None = None  # default: blob support + patch headroom
    # rendering
    ir_peak: float = 230.0
    bump_amplitude: float = 120.0
    background_amplitude: float = 60.0
    background_base: float = 20.0
    grid_aligned: bool = False
    allow_boundary_exit: bool = False
    spurious_start_speck: bool = False  # sub-min-area speck, must vanish in masks
    # naming
    session_id: str = "90"
    start_ms: int = 0
    frame_period_ms: int = 33

    def __post_init__(self):
        if self.num_sequences < 1:
            raise SynthConfigError("num_sequences must be >= 1")
        if self.frames_per_sequence < 2:
            raise SynthConfigError("frames_per_sequence must be >= 2")
        if self.blob_count < 0:
            raise SynthConfigError("blob_count must be >= 0")
        if self.blob_sigma < 1.0:
            raise SynthConfigError("blob_sigma must be >= 1 px to survive opening")
        if self.motion not in MOTION_MODELS:
            raise SynthConfigError(
                f"motion must be one of {MOTION_MODELS}, got {self.motion!r}")
        if any(z <= 0 for z in self.blob_depths_m) or self.plane_depth_m <= 0:
            raise SynthConfigError("depths must be positive")
        if self.placement not in ("diagonal", "column"):
            raise SynthConfigError("placement must be 'diagonal' or 'column'")
        if self.image_size[0] < 64 or self.image_size[1] < 64:
            raise SynthConfigError("image_size must be at least 64x64")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise SynthConfigError(f"unknown config field(s): {sorted(unknown)}")
        coerced = dict(data)
        for key in ("image_size", "motion_px", "blob_depths_m",
                    "left_principal", "right_principal"):
            if coerced.get(key) is not None:
                coerced[key] = tuple(coerced[key])
        if coerced.get("blob_positions") is not None:
            coerced["blob_positions"] = tuple(tuple(p) for p in coerced["blob_positions"])
        return cls(**coerced)


@dataclass
class SynthManifest:
    """Loaded/buildable view of ``manifest.json``."""

    data: dict

    @property
    def sequences(self) -> list[dict]:
        return self.data["sequences"]

    def sequence(self, session_id: str, sequence_id: str) -> dict:
        for entry in self.sequences:
            if entry["session_id"] == session_id and entry["sequence_id"] == sequence_id:
                return entry
        raise KeyError(f"{session_id}/{sequence_id} not in manifest")

    def to_dict(self) -> dict:
        return self.data


def load_manifest(root: Path | str) -> SynthManifest:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json under {root}")
    return SynthManifest(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# geometry of the synthetic scene

def _calibration_for(config: SynthConfig) -> CameraCalibration:
    w, h = config.image_size
    lp = config.left_principal or (w / 2.0, h / 2.0)
    rp = config.right_principal or (w / 2.0, h / 2.0)
    return CameraCalibration(
        left_focal_x=config.focal_px, left_focal_y=config.focal_px,
        left_principal_x=lp[0], left_principal_y=lp[1],
        right_focal_x=config.focal_px, right_focal_y=config.focal_px,
        right_principal_x=rp[0], right_principal_y=rp[1],
        baseline_b=config.baseline_m,
    )


def _blob_depths(config: SynthConfig, calib: CameraCalibration) -> list[float]:
    depths = [config.blob_depths_m[k % len(config.blob_depths_m)]
              for k in range(config.blob_count)]
    if config.grid_aligned:
        bf = calib.baseline_b * calib.left_focal_x
        snapped = []
        for z in depths:
            d = max(round(bf / z), 1)
            snapped.append(bf / d)
        depths = snapped
    return depths


def _motion_offsets(config: SynthConfig) -> np.ndarray:
    """(frames, 2) displacement of every blob from its start position."""
    t = np.arange(config.frames_per_sequence, dtype=float)
    d = np.asarray(config.motion_px, dtype=float)
    if config.motion == "static":
        offsets = np.zeros((config.frames_per_sequence, 2))
    elif config.motion == "translation":
        offsets = t[:, None] * d[None, :]
    else:  # sinusoidal: half-sine swing, back at start on the last frame
        phase = np.sin(np.pi * t / (config.frames_per_sequence - 1))
        offsets = phase[:, None] * d[None, :]
    if config.grid_aligned:
        offsets = np.round(offsets)
    return offsets


def _raw_disparity(adjusted: float, calib: CameraCalibration) -> float:
    return adjusted + (calib.left_principal_x - calib.right_principal_x)


def _support(config: SynthConfig) -> int:
    return int(math.ceil(4.0 * config.blob_sigma))


def _auto_positions(config: SynthConfig, offsets: np.ndarray,
                    max_raw_disp: float) -> np.ndarray:
    w, h = config.image_size
    margin = config.placement_margin
    if margin is None:
        margin = _support(config) + 12
    off_min = offsets.min(axis=0)
    off_max = offsets.max(axis=0)
    x_lo = margin + max(max_raw_disp, 0.0) - min(off_min[0], 0.0)
    x_hi = w - margin - max(off_max[0], 0.0)
    y_lo = margin - min(off_min[1], 0.0)
    y_hi = h - margin - max(off_max[1], 0.0)
    if x_hi <= x_lo or y_hi <= y_lo:
        raise SynthConfigError(
            f"image {w}x{h} too small for blob support + motion extent")
    row_step = config.row_step
    if row_step is None:
        row_step = 80 if config.placement == "column" else 16
    positions = []
    for k in range(config.blob_count):
        y = y_lo + k * row_step
        if config.placement == "column":
            x = x_lo
        else:
            x = x_lo + (k * config.col_step) % max(x_hi - x_lo, 1.0)
        positions.append((float(round(x)), float(round(y))))
    return np.array(positions, dtype=float).reshape(-1, 2)


def _validate_layout(config: SynthConfig, starts: np.ndarray, offsets: np.ndarray,
                     raw_disps: np.ndarray) -> None:
    w, h = config.image_size
    margin = _support(config)
    # pairwise separation is motion-invariant: all blobs share the offsets
    for i in range(len(starts)):
        for j in range(i + 1, len(starts)):
            gap = float(np.hypot(*(starts[i] - starts[j])))
            if gap < config.min_separation:
                raise SynthConfigError(
                    f"blobs {i} and {j} are {gap:.1f} px apart; "
                    f"minimum separation is {config.min_separation}")
    if config.allow_boundary_exit:
        return
    for k, start in enumerate(starts):
        track = start[None, :] + offsets
        right_x = track[:, 0] - raw_disps[k]
        if (track[:, 0].min() < margin or track[:, 0].max() >= w - margin
                or track[:, 1].min() < margin or track[:, 1].max() >= h - margin
                or right_x.min() < margin or right_x.max() >= w - margin):
            raise SynthConfigError(
                f"blob {k} leaves the usable frame under the configured motion "
                f"(set allow_boundary_exit to test boundary loss)")


# ---------------------------------------------------------------------------
# rendering

def _add_gaussian(canvas: np.ndarray, center_xy, sigma: float, amplitude: float) -> None:
    """Accumulate one radial Gaussian into a float canvas (in place)."""
    h, w = canvas.shape
    support = int(math.ceil(4.0 * sigma))
    cx, cy = float(center_xy[0]), float(center_xy[1])
    x0 = max(int(math.floor(cx)) - support, 0)
    x1 = min(int(math.ceil(cx)) + support + 1, w)
    y0 = max(int(math.floor(cy)) - support, 0)
    y1 = min(int(math.ceil(cy)) + support + 1, h)
    if x0 >= x1 or y0 >= y1:
        return
    xs = np.arange(x0, x1, dtype=float) - cx
    ys = np.arange(y0, y1, dtype=float) - cy
    r2 = ys[:, None] ** 2 + xs[None, :] ** 2
    canvas[y0:y1, x0:x1] += amplitude * np.exp(-r2 / (2.0 * sigma * sigma))


def _render_ir(config: SynthConfig, centers: np.ndarray, *, speck_at=None) -> np.ndarray:
    w, h = config.image_size
    canvas = np.zeros((h, w), dtype=float)
    for c in centers:
        _add_gaussian(canvas, c, config.blob_sigma, config.ir_peak)
    if speck_at is not None:
        # an isolated bright pixel: above threshold but erased by opening
        canvas[int(speck_at[1]), int(speck_at[0])] = config.ir_peak
    return np.clip(np.round(canvas), 0, 255).astype(np.uint8)


def _background(config: SynthConfig, phases: tuple[float, float],
                offset_xy: np.ndarray, disparity_shift: float) -> np.ndarray:
    """Cosine-product tissue plane, translated by the frame's motion offset.

    The plane carries the same pixel motion as the blobs; the right eye adds
    the plane's own (constant-depth) disparity as a horizontal shift.  Both
    shifts are applied analytically, so sub-pixel translation is exact.
    """
    w, h = config.image_size
    xs = (np.arange(w, dtype=float) - offset_xy[0] + disparity_shift
          + phases[0]) / TEXTURE_PERIOD_X
    ys = (np.arange(h, dtype=float) - offset_xy[1] + phases[1]) / TEXTURE_PERIOD_Y
    tx = 0.5 + 0.5 * np.cos(2.0 * np.pi * xs)
    ty = 0.5 + 0.5 * np.cos(2.0 * np.pi * ys)
    return config.background_base + config.background_amplitude * np.outer(ty, tx)


def _render_white(config: SynthConfig, background: np.ndarray, centers: np.ndarray,
                  noise: np.ndarray | None) -> np.ndarray:
    canvas = background.copy()
    for c in centers:
        _add_gaussian(canvas, c, config.blob_sigma, config.bump_amplitude)
    if noise is not None:
        canvas += noise
    return np.clip(np.round(canvas), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# generation

def generate_synthetic_sequence(config: SynthConfig, out_dir: Path | str,
                                sequence_index: int = 0) -> dict:
    """Write one sequence directory; returns its manifest entry."""
    out_dir = Path(out_dir)
    calib = _calibration_for(config)
    offsets = _motion_offsets(config)
    depths = _blob_depths(config, calib)
    bf = calib.baseline_b * calib.left_focal_x
    adj_disps = np.array([bf / z for z in depths], dtype=float)
    raw_disps = np.array([_raw_disparity(d, calib) for d in adj_disps], dtype=float)

    if config.blob_positions is not None:
        if len(config.blob_positions) != config.blob_count:
            raise SynthConfigError("blob_positions length must equal blob_count")
        starts = np.array(config.blob_positions, dtype=float).reshape(-1, 2)
        if config.grid_aligned:
            starts = np.round(starts)
    else:
        starts = _auto_positions(config, offsets,
                                 float(raw_disps.max()) if len(raw_disps) else 0.0)
    _validate_layout(config, starts, offsets, raw_disps)

    rng = np.random.default_rng([config.seed, sequence_index])
    phases = (float(rng.uniform(0.0, TEXTURE_PERIOD_X)),
              float(rng.uniform(0.0, TEXTURE_PERIOD_Y)))

    frames = config.frames_per_sequence
    # (frames, blobs, 2) true tracks in each eye
    left_track = starts[None, :, :] + offsets[:, None, :]
    right_track = left_track.copy()
    if len(raw_disps):
        right_track[:, :, 0] -= raw_disps[None, :]

    end_ms = config.start_ms + (frames - 1) * config.frame_period_ms
    clip_name = format_video_filename(config.start_ms, end_ms)

    for eye in ("left", "right"):
        (out_dir / eye / "segmentation").mkdir(parents=True, exist_ok=True)
        (out_dir / eye / "frames" / clip_name).mkdir(parents=True, exist_ok=True)

    save_calibration(out_dir / "calib.json", calib)

    w, h = config.image_size
    speck = (w - _support(config) - 3, h - _support(config) - 3) \
        if config.spurious_start_speck else None
    for eye, track in (("left", left_track), ("right", right_track)):
        ir_start = _render_ir(config, track[0], speck_at=speck)
        ir_end = _render_ir(config, track[-1])
        write_image(out_dir / eye / "starticg.png", ir_start)
        write_image(out_dir / eye / "endicg.png", ir_end)
        write_mask(out_dir / eye / "segmentation" / "startim.png",
                   morphological_open(threshold_ir(ir_start)))
        write_mask(out_dir / eye / "segmentation" / "endim.png",
                   morphological_open(threshold_ir(ir_end)))

        plane_shift = 0.0 if eye == "left" \
            else _raw_disparity(bf / config.plane_depth_m, calib)
        for t in range(frames):
            background = _background(config, phases, offsets[t], plane_shift)
            noise = None
            if config.noise_level > 0:
                noise = rng.normal(0.0, config.noise_level, size=(h, w))
            frame = _render_white(config, background, track[t], noise)
            write_image(out_dir / eye / "frames" / clip_name / f"{t:06d}.png", frame)

    points = []
    for k in range(config.blob_count):
        z = depths[k]
        entry = {
            "index": k,
            "depth_m": z,
            "adjusted_disparity_px": float(adj_disps[k]),
            "raw_disparity_px": float(raw_disps[k]),
            "start": _instant_entry(left_track[0, k], right_track[0, k], z, calib),
            "end": _instant_entry(left_track[-1, k], right_track[-1, k], z, calib),
            "per_frame_left_px": left_track[:, k, :].tolist(),
            "per_frame_right_px": right_track[:, k, :].tolist(),
        }
        points.append(entry)

    return {
        "session_id": config.session_id,
        "sequence_id": out_dir.name,
        "image_size": [w, h],
        "frame_count": frames,
        "start_ms": config.start_ms,
        "end_ms": end_ms,
        "motion": config.motion,
        "motion_px": list(config.motion_px),
        "grid_aligned": config.grid_aligned,
        "plane_depth_m": config.plane_depth_m,
        "points": points,
    }


def _instant_entry(left_xy: np.ndarray, right_xy: np.ndarray, z: float,
                   calib: CameraCalibration) -> dict:
    position = backproject(np.asarray(left_xy, dtype=float), z, calib)
    return {
        "left_px": [float(left_xy[0]), float(left_xy[1])],
        "right_px": [float(right_xy[0]), float(right_xy[1])],
        "position_mm": [float(v) for v in position],
    }


def generate_dataset(config: SynthConfig, out_root: Path | str) -> SynthManifest:
    """Write ``num_sequences`` sequences plus the top-level manifest."""
    out_root = Path(out_root)
    session_dir = out_root / config.session_id
    session_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(config.num_sequences):
        seq_dir = session_dir / f"seq{i:04d}"
        entries.append(generate_synthetic_sequence(config, seq_dir, sequence_index=i))
    manifest = SynthManifest({
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "seed": config.seed,
        "config": _jsonable(config.to_dict()),
        "sequences": entries,
    })
    (out_root / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value
