"""Image-plane primitives: IR thresholding, morphology, components, NCC, rescale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_IR_THRESHOLD = 25
DEFAULT_MIN_AREA = 10
_SQUARE_3X3 = np.ones((3, 3), dtype=bool)


class DegeneratePatchError(ValueError):
    """A correlation patch has zero variance, so NCC is undefined."""


# ---------------------------------------------------------------------------
# segmentation

def threshold_ir(image: np.ndarray, tau: float = DEFAULT_IR_THRESHOLD) -> np.ndarray:
    """Binary mask of pixels strictly brighter than ``tau``.

    Multi-channel input is collapsed with a per-pixel channel maximum first.
    """
    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    elif arr.ndim != 2:
        raise ValueError(f"expected 2-D or 3-D image, got shape {arr.shape}")
    return arr > tau


def erode(mask: np.ndarray, structure: np.ndarray = _SQUARE_3X3) -> np.ndarray:
    # zero padding outside the image, so border blobs shrink from the edge too
    return ndimage.binary_erosion(np.asarray(mask, dtype=bool), structure=structure,
                                  border_value=0)


def dilate(mask: np.ndarray, structure: np.ndarray = _SQUARE_3X3) -> np.ndarray:
    return ndimage.binary_dilation(np.asarray(mask, dtype=bool), structure=structure,
                                   border_value=0)


def morphological_open(mask: np.ndarray, structure: np.ndarray = _SQUARE_3X3) -> np.ndarray:
    """Erosion followed by dilation; removes specks smaller than the structure."""
    return dilate(erode(mask, structure), structure)


@dataclass(frozen=True)
class Segment:
    """One connected component of a binary mask."""

    label: int
    area: int
    centroid: tuple[float, float]  # (x, y), unweighted mean of member pixels
    bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1), exclusive upper bounds

    @property
    def centroid_xy(self) -> np.ndarray:
        return np.array(self.centroid, dtype=float)


def extract_segments(mask: np.ndarray, min_area: int = DEFAULT_MIN_AREA) -> list[Segment]:
    """8-connected components of area >= min_area, ordered by (y, x) centroid.

    Centroids are plain means of member pixel coordinates (no intensity
    weighting), in (x, y) order.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    segments = []
    if n:
        slices = ndimage.find_objects(labels)
        for idx, sl in enumerate(slices, start=1):
            ys, xs = np.nonzero(labels[sl] == idx)
            area = len(ys)
            if area < min_area:
                continue
            y0, x0 = sl[0].start, sl[1].start
            segments.append(Segment(
                label=idx,
                area=area,
                centroid=(float(np.mean(xs + x0)), float(np.mean(ys + y0))),
                bbox=(x0, y0, sl[1].stop, sl[0].stop),
            ))
    segments.sort(key=lambda s: (s.centroid[1], s.centroid[0]))
    return segments


def segment_mask(image: np.ndarray, *, tau: float = DEFAULT_IR_THRESHOLD,
                 open_first: bool = True) -> np.ndarray:
    """Full IR pipeline up to the binary mask: threshold then opening."""
    mask = threshold_ir(image, tau)
    return morphological_open(mask) if open_first else mask


def segment_points(image: np.ndarray, *, tau: float = DEFAULT_IR_THRESHOLD,
                   min_area: int = DEFAULT_MIN_AREA,
                   open_first: bool = True) -> np.ndarray:
    """IR image -> (N, 2) array of point-label centroids in (x, y) pixels."""
    segs = extract_segments(segment_mask(image, tau=tau, open_first=open_first),
                            min_area=min_area)
    if not segs:
        return np.empty((0, 2), dtype=float)
    return np.array([s.centroid for s in segs], dtype=float)


# ---------------------------------------------------------------------------
# normalized cross-correlation

def ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean normalized cross-correlation of two equal-shape patches.

    Returns a value in [-1, 1]; raises DegeneratePatchError when either patch
    has zero variance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        raise DegeneratePatchError("zero-variance patch in NCC")
    return float(np.clip(np.sum(da * db) / denom, -1.0, 1.0))


def ncc_surface(image: np.ndarray, template: np.ndarray) -> np.ndarray:
    """NCC of ``template`` against every template-sized window of ``image``.

    Output shape is (H - h + 1, W - w + 1); windows with zero variance get
    -inf so they never win an argmax.
    """
    image = np.asarray(image, dtype=float)
    template = np.asarray(template, dtype=float)
    h, w = template.shape
    if image.shape[0] < h or image.shape[1] < w:
        raise ValueError(f"image {image.shape} smaller than template {template.shape}")
    dt = template - template.mean()
    t_norm = np.sqrt(np.sum(dt * dt))
    if t_norm == 0.0:
        raise DegeneratePatchError("zero-variance template in NCC search")

    windows = np.lib.stride_tricks.sliding_window_view(image, (h, w))
    n = h * w
    sums = np.einsum("ijkl->ij", windows)
    sumsq = np.einsum("ijkl,ijkl->ij", windows, windows)
    cross = np.einsum("ijkl,kl->ij", windows, dt)
    # window variance term: sum((x - mean)^2) = sumsq - sum^2 / n
    var_term = sumsq - sums * sums / n
    np.clip(var_term, 0.0, None, out=var_term)
    denom = np.sqrt(var_term) * t_norm
    with np.errstate(invalid="ignore", divide="ignore"):
        surface = cross / denom
    np.clip(surface, -1.0, 1.0, out=surface)
    surface[denom == 0.0] = -np.inf  # after the clip, so the sentinel survives
    return surface


def extract_patch(image: np.ndarray, center_xy: np.ndarray | tuple, side: int) -> np.ndarray | None:
    """Odd-sided square patch centred on the rounded point, or None off-image."""
    if side % 2 != 1:
        raise ValueError(f"patch side must be odd, got {side}")
    image = np.asarray(image)
    half = side // 2
    cx = int(round(float(center_xy[0])))
    cy = int(round(float(center_xy[1])))
    if cx - half < 0 or cy - half < 0 or cx + half >= image.shape[1] or cy + half >= image.shape[0]:
        return None
    return image[cy - half:cy + half + 1, cx - half:cx + half + 1]


# ---------------------------------------------------------------------------
# rescaling

def rescale(image: np.ndarray, factor: float) -> np.ndarray:
    """Bilinear rescale with origin-aligned pixel centres (float64 output).

    Output pixel o samples the input at o / factor, so image coordinates map
    exactly as p_scaled = p * factor and a 0.5 / 2.0 round trip is
    offset-free.  Output dimensions must come out integral.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {image.shape}")
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    out_h = image.shape[0] * factor
    out_w = image.shape[1] * factor
    if abs(out_h - round(out_h)) > 1e-9 or abs(out_w - round(out_w)) > 1e-9:
        raise ValueError(
            f"factor {factor} does not give integral output size for {image.shape}")
    out_h, out_w = int(round(out_h)), int(round(out_w))
    ys = np.arange(out_h) / factor
    xs = np.arange(out_w) / factor
    grid = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(image, grid, order=1, mode="nearest")
