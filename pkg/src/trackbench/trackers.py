"""Classical baseline trackers.

Three streaming baselines plus a 2D->3D adapter:

* ``TemplateTracker`` — per-point adaptive template matching: a 29x29 patch
  held at half resolution, exhaustively NCC-matched in a window around the
  previous position each frame, template refreshed by exponential blending,
  positions reported at full resolution (x2).
* ``ChainTracker`` — frame-to-frame chaining: per-point displacement from an
  iterative coarse-to-fine least-squares fit on image gradients (a classical
  pyramidal sparse-flow step), accumulated over time.
* ``Lift3DTracker`` — wraps any 2D tracker and lifts each estimate to
  millimetre 3D via an epipolar NCC search in the right frame plus the
  disparity depth equation.
* ``Control3DTracker`` — zero-motion in 3D: lifts the start points once at
  frame 0 and repeats them forever.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import DegenerateDisparityError, EpipolarConfig, backproject, depth_from_disparity
from .harness import ControlTracker, PointTracker
from .imaging import DegeneratePatchError, extract_patch, ncc_surface, rescale


# ---------------------------------------------------------------------------
# template tracker

@dataclass(frozen=True)
class TemplateConfig:
    template_side: int = 29      # half-scale pixels
    search_radius: int = 16      # half-scale pixels
    blend_rate: float = 0.05     # template <- (1-rate)*template + rate*patch
    scale: float = 0.5           # images are tracked at this scale, reported /scale

    def __post_init__(self):
        if self.template_side % 2 != 1:
            raise ValueError("template_side must be odd")
        if self.search_radius < 1:
            raise ValueError("search_radius must be >= 1")
        if not 0.0 <= self.blend_rate <= 1.0:
            raise ValueError("blend_rate must be in [0, 1]")


class TemplateTracker(PointTracker):
    """Adaptive NCC template matching, one template per point.

    Positions live in half-scale coordinates internally; reported estimates
    are multiplied back to full resolution.  The match is the integer argmax
    of the NCC surface over the search window — no subpixel refinement — so a
    static scene reproduces the start points bit-exactly.  Points whose
    search window (or template) leaves the frame are frozen and flagged lost.
    """

    name = "template"

    def __init__(self, config: TemplateConfig = TemplateConfig()):
        self.config = config
        self.estimates: np.ndarray | None = None

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        cfg = self.config
        start_points = np.asarray(start_points, dtype=float).reshape(-1, 2)
        frame = rescale(first_left_frame, cfg.scale)
        self._positions = start_points * cfg.scale  # half-scale, float
        self._templates: list[np.ndarray | None] = []
        self._lost = np.zeros(len(start_points), dtype=bool)
        self._confidence = np.ones(len(start_points), dtype=float)
        for i, pos in enumerate(self._positions):
            patch = extract_patch(frame, pos, cfg.template_side)
            self._templates.append(None if patch is None else patch.astype(float))
            self._lost[i] = patch is None
        self.estimates = self._report()

    def step(self, left_frame, right_frame=None):
        cfg = self.config
        frame = rescale(left_frame, cfg.scale)
        half = cfg.template_side // 2
        for i, template in enumerate(self._templates):
            if template is None or self._lost[i]:
                continue
            cx = int(round(self._positions[i][0]))
            cy = int(round(self._positions[i][1]))
            x0 = cx - cfg.search_radius - half
            y0 = cy - cfg.search_radius - half
            x1 = cx + cfg.search_radius + half + 1
            y1 = cy + cfg.search_radius + half + 1
            if x0 < 0 or y0 < 0 or x1 > frame.shape[1] or y1 > frame.shape[0]:
                self._lost[i] = True  # window left the frame: freeze
                continue
            window = frame[y0:y1, x0:x1]
            try:
                surface = ncc_surface(window, template)
            except DegeneratePatchError:
                self._lost[i] = True
                continue
            flat = int(np.argmax(surface))
            dy, dx = divmod(flat, surface.shape[1])
            score = surface[dy, dx]
            if not np.isfinite(score):
                self._lost[i] = True
                continue
            # surface index (dy, dx) corresponds to the window whose centre is
            # (y0 + dy + half, x0 + dx + half)
            self._positions[i] = (float(x0 + dx + half), float(y0 + dy + half))
            self._confidence[i] = float(score)
            matched = extract_patch(frame, self._positions[i], cfg.template_side)
            if matched is not None:
                self._templates[i] = ((1.0 - cfg.blend_rate) * template
                                      + cfg.blend_rate * matched.astype(float))
        self.estimates = self._report()
        return self.estimates

    def _report(self) -> np.ndarray:
        return self._positions / self.config.scale

    @property
    def lost(self) -> np.ndarray:
        return self._lost.copy()


# ---------------------------------------------------------------------------
# frame-to-frame chaining tracker

@dataclass(frozen=True)
class ChainConfig:
    levels: int = 3              # pyramid levels (level 0 = working scale)
    iterations: int = 10         # refinement iterations per level
    window_side: int = 15        # least-squares window, odd
    scale: float = 0.5           # working scale relative to full resolution
    min_eigen: float = 1e-6      # singularity guard on the gradient matrix

    def __post_init__(self):
        if self.window_side % 2 != 1:
            raise ValueError("window_side must be odd")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")


def _pyramid(image: np.ndarray, levels: int) -> list[np.ndarray]:
    """Coarse-to-fine stack; halving is 2x2 box-averaged to avoid aliasing.

    The shared half-pixel placement offset of box averaging cancels between
    the two pyramids of a frame pair, so displacements are unaffected.
    """
    out = [np.asarray(image, dtype=float)]
    for _ in range(1, levels):
        padded = _even_pad(out[-1])
        out.append(0.25 * (padded[0::2, 0::2] + padded[1::2, 0::2]
                           + padded[0::2, 1::2] + padded[1::2, 1::2]))
    return out


def _even_pad(image: np.ndarray) -> np.ndarray:
    """Pad odd dimensions by edge replication so halving stays integral."""
    pad_y = image.shape[0] % 2
    pad_x = image.shape[1] % 2
    if pad_y or pad_x:
        image = np.pad(image, ((0, pad_y), (0, pad_x)), mode="edge")
    return image


def _sample_window(image: np.ndarray, center_xy: np.ndarray, side: int) -> np.ndarray:
    """Bilinear window sample at a subpixel centre (edge-clamped)."""
    half = side // 2
    offs = np.arange(-half, half + 1, dtype=float)
    ys = center_xy[1] + offs
    xs = center_xy[0] + offs
    grid = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(image, grid, order=1, mode="nearest")


def _flow_step(prev: np.ndarray, curr: np.ndarray, point_xy: np.ndarray,
               guess: np.ndarray, cfg: ChainConfig) -> tuple[np.ndarray, bool]:
    """Iterative least-squares displacement of one point between two images.

    Solves G d = b with G the structure tensor of the previous-frame window
    and b the gradient-weighted temporal difference, iterating the warp.
    Returns (displacement, ok); ok is False when the system is singular.
    """
    template = _sample_window(prev, point_xy, cfg.window_side)
    gy, gx = np.gradient(template)
    g_xx = np.sum(gx * gx)
    g_xy = np.sum(gx * gy)
    g_yy = np.sum(gy * gy)
    G = np.array([[g_xx, g_xy], [g_xy, g_yy]])
    det = g_xx * g_yy - g_xy * g_xy
    trace = g_xx + g_yy
    # smaller eigenvalue of the 2x2 structure tensor
    min_eig = trace / 2.0 - np.sqrt(max(trace * trace / 4.0 - det, 0.0))
    if min_eig <= cfg.min_eigen:
        return np.zeros(2), False

    d = guess.astype(float).copy()
    for _ in range(cfg.iterations):
        moved = _sample_window(curr, point_xy + d, cfg.window_side)
        diff = template - moved
        b = np.array([np.sum(diff * gx), np.sum(diff * gy)])
        try:
            delta = np.linalg.solve(G, b)
        except np.linalg.LinAlgError:
            return d, False
        d += delta
        if np.hypot(d[0] - guess[0], d[1] - guess[1]) > cfg.window_side:
            # left the linearization region: unreliable, reject this level
            return guess, False
        if np.hypot(delta[0], delta[1]) < 1e-4:
            break
    return d, True


class ChainTracker(PointTracker):
    """Coarse-to-fine frame-to-frame flow, chained over the sequence.

    Displacements are estimated between consecutive frames only (no long-term
    memory), coarse levels seeding finer ones.  Singular gradient structure
    yields zero displacement for that step and a low-texture flag.
    """

    name = "chain"

    def __init__(self, config: ChainConfig = ChainConfig()):
        self.config = config
        self.estimates: np.ndarray | None = None

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        cfg = self.config
        start_points = np.asarray(start_points, dtype=float).reshape(-1, 2)
        self._positions = start_points * cfg.scale
        self._prev_pyramid = _pyramid(rescale(first_left_frame, cfg.scale), cfg.levels)
        self._low_texture = np.zeros(len(start_points), dtype=bool)
        self.estimates = self._report()

    def step(self, left_frame, right_frame=None):
        cfg = self.config
        pyramid = _pyramid(rescale(left_frame, cfg.scale), cfg.levels)
        self._low_texture[:] = False
        for i, pos in enumerate(self._positions):
            d = np.zeros(2)
            ok_any = False
            for level in range(cfg.levels - 1, -1, -1):
                scale = 2.0 ** level
                d_level, ok = _flow_step(self._prev_pyramid[level], pyramid[level],
                                         pos / scale, d / scale, cfg)
                if ok:
                    d = d_level * scale
                    ok_any = True
                # a singular level keeps the seed from the coarser one
            if not ok_any:
                self._low_texture[i] = True
                continue  # zero displacement this step
            new_pos = pos + d
            h, w = pyramid[0].shape
            if not (0 <= new_pos[0] < w and 0 <= new_pos[1] < h):
                self._low_texture[i] = True
                continue  # would leave the frame: freeze
            self._positions[i] = new_pos
        self._prev_pyramid = pyramid
        self.estimates = self._report()
        return self.estimates

    def _report(self) -> np.ndarray:
        return self._positions / self.config.scale

    @property
    def low_texture(self) -> np.ndarray:
        return self._low_texture.copy()


# ---------------------------------------------------------------------------
# 2D -> 3D lifting

def lift_to_3d(left_estimates: np.ndarray, left_frame: np.ndarray,
               right_frame: np.ndarray, calibration,
               config: EpipolarConfig = EpipolarConfig(),
               search_halfwidth: int = 200
               ) -> tuple[np.ndarray, np.ndarray]:
    """Lift 2-D left-eye estimates to millimetre 3-D positions.

    For each point, the matching right-eye column is found by NCC of the
    point's patch against every candidate centre inside the epipolar band
    (rows within ``band_px``, columns up to ``search_halfwidth`` to the left).
    Depth comes from the adjusted-disparity equation, backprojection from the
    left pinhole model.  Returns ``(positions_mm, ok)``; entries with no
    acceptable match (or a degenerate disparity) get NaN and ok=False so the
    caller can apply its carry-over policy.
    """
    left_estimates = np.asarray(left_estimates, dtype=float).reshape(-1, 2)
    n = left_estimates.shape[0]
    positions = np.full((n, 3), np.nan)
    ok = np.zeros(n, dtype=bool)
    band = int(np.ceil(config.band_px))
    half = config.patch_side // 2
    h, w = right_frame.shape

    for i, (x, y) in enumerate(left_estimates):
        patch = extract_patch(left_frame, (x, y), config.patch_side)
        if patch is None:
            continue
        cy = int(round(y))
        cx = int(round(x))
        y0 = max(cy - band, half)
        y1 = min(cy + band, h - 1 - half)
        x1 = min(cx, w - 1 - half)  # positive disparity: right x <= left x
        x0 = max(cx - search_halfwidth, half)
        if y1 < y0 or x1 < x0:
            continue
        strip = np.asarray(right_frame, dtype=float)[y0 - half:y1 + half + 1,
                                                     x0 - half:x1 + half + 1]
        try:
            surface = ncc_surface(strip, patch)
        except DegeneratePatchError:
            continue
        flat = int(np.argmax(surface))
        dy, dx = divmod(flat, surface.shape[1])
        score = surface[dy, dx]
        if not np.isfinite(score) or score < config.ncc_min:
            continue
        match_x = float(x0 + dx)
        try:
            z = depth_from_disparity(x, match_x, calibration)
        except DegenerateDisparityError:
            continue
        positions[i] = backproject(np.array([x, y]), z, calibration)
        ok[i] = True
    return positions, ok


class Lift3DTracker(PointTracker):
    """3-D adapter: runs a 2-D tracker and lifts each frame's estimates.

    Points without a stereo match carry their last valid 3-D position
    forward; before any valid lift, the start-point backprojection at
    ``default_depth_m`` is used so estimates are always finite.
    """

    name = "lift3d"

    def __init__(self, inner: PointTracker, config: EpipolarConfig = EpipolarConfig(),
                 default_depth_m: float = 0.05):
        self.inner = inner
        self.config = config
        self.default_depth_m = default_depth_m
        self.name = f"{inner.name}+lift3d"
        self.estimates: np.ndarray | None = None

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        if first_right_frame is None:
            raise ValueError("3D tracking requires right-eye frames")
        if calibration is None:
            raise ValueError("3D tracking requires calibration")
        self._calibration = calibration
        self.inner.init(start_points, first_left_frame, first_right_frame, calibration)
        start_points = np.asarray(start_points, dtype=float).reshape(-1, 2)
        fallback = backproject(start_points,
                               np.full(len(start_points), self.default_depth_m),
                               calibration)
        self._last_valid = np.atleast_2d(fallback)
        self.lift_failed = np.zeros(len(start_points), dtype=bool)
        self._lift(start_points, first_left_frame, first_right_frame)
        self.estimates = self._last_valid.copy()

    def step(self, left_frame, right_frame=None):
        if right_frame is None:
            raise ValueError("3D tracking requires right-eye frames")
        estimates_2d = self.inner.step(left_frame)
        self._lift(estimates_2d, left_frame, right_frame)
        self.estimates = self._last_valid.copy()
        return self.estimates

    def _lift(self, estimates_2d, left_frame, right_frame) -> None:
        positions, ok = lift_to_3d(estimates_2d, left_frame, right_frame,
                                   self._calibration, self.config)
        self._last_valid[ok] = positions[ok]
        self.lift_failed = ~ok


class Control3DTracker(PointTracker):
    """Zero-motion 3-D baseline: start points lifted once, then held forever."""

    name = "control3d"

    def __init__(self, config: EpipolarConfig = EpipolarConfig(),
                 default_depth_m: float = 0.05):
        self.config = config
        self.default_depth_m = default_depth_m
        self.estimates: np.ndarray | None = None

    def init(self, start_points, first_left_frame, first_right_frame=None,
             calibration=None):
        if first_right_frame is None:
            raise ValueError("3D tracking requires right-eye frames")
        if calibration is None:
            raise ValueError("3D tracking requires calibration")
        start_points = np.asarray(start_points, dtype=float).reshape(-1, 2)
        positions, ok = lift_to_3d(start_points, first_left_frame,
                                   first_right_frame, calibration, self.config)
        fallback = np.atleast_2d(backproject(
            start_points, np.full(len(start_points), self.default_depth_m),
            calibration))
        positions[~ok] = fallback[~ok]
        self.lift_failed = ~ok
        self.estimates = positions

    def step(self, left_frame, right_frame=None):
        return self.estimates.copy()


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, type[PointTracker] | object] = {}


def register_tracker(name: str, factory) -> None:
    """Add a tracker to the CLI-facing registry (tests use this for doubles)."""
    _REGISTRY[name] = factory


def available_trackers() -> list[str]:
    return sorted(_REGISTRY)


def build_tracker_factory(name: str, mode: str = "2d", params: dict | None = None):
    """Zero-argument factory for a named tracker, wrapped for 3-D when asked.

    ``params`` override the tracker's config dataclass fields (for 'template'
    and 'chain'); unknown names or parameters raise ValueError.
    """
    params = dict(params or {})
    if name not in _REGISTRY:
        raise ValueError(f"unknown tracker {name!r}; available: "
                         f"{', '.join(available_trackers())}")

    def build_2d() -> PointTracker:
        if name == "template":
            return TemplateTracker(_apply_params(TemplateConfig(), params))
        if name == "chain":
            return ChainTracker(_apply_params(ChainConfig(), params))
        if params:
            raise ValueError(f"tracker {name!r} takes no parameters")
        factory = _REGISTRY[name]
        return factory()

    if mode == "2d":
        factory = build_2d
    elif mode == "3d":
        if name == "control":
            def factory() -> PointTracker:
                if params:
                    raise ValueError("tracker 'control' takes no parameters")
                return Control3DTracker()
        else:
            def factory() -> PointTracker:
                return Lift3DTracker(build_2d())
    else:
        raise ValueError(f"mode must be '2d' or '3d', got {mode!r}")

    factory.tracker_name = name
    # fail fast on bad parameters instead of inside the evaluation loop
    factory()
    return factory


def _apply_params(config, params: dict):
    known = set(config.__dataclass_fields__)
    unknown = set(params) - known
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)}; "
                         f"valid: {sorted(known)}")
    typed = {}
    for key, value in params.items():
        field_type = type(getattr(config, key))
        typed[key] = field_type(value)
    return replace(config, **typed)


register_tracker("control", ControlTracker)
register_tracker("template", TemplateTracker)
register_tracker("chain", ChainTracker)
