"""On-disk benchmark layout: sessions -> sequences -> stereo assets.

Canonical layout of one sequence directory::

    <root>/<session>/<sequence>/
        calib.json
        left/starticg.png               infrared image at sequence start
        left/endicg.png                 infrared image at sequence end
        left/segmentation/startim.png   binary {0,255} ink segmentation
        left/segmentation/endim.png
        left/frames/<start>_<end>_ms/   numbered .png frames (000000.png, ...)
        right/...                       mirrors left/

``left/frames`` may instead hold a single ``<start>_<end>_ms.mp4``; use
:func:`ingest_container_video` to pre-extract it (requires opencv), or the
loader will stream it directly when opencv is importable.  A synthetic root
additionally carries ``manifest.json`` written by :mod:`trackbench.synth`.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IN_VIVO_SESSIONS = {"03", "04", "07", "08", "11"}
EX_VIVO_SESSIONS = {"02", "05", "06", "09"}
NOMINAL_SIZE = (1280, 1024)  # (width, height)
DEFAULT_FPS = 30.0

_VIDEO_NAME_RE = re.compile(r"^(\d+)(?:_(\d+))?_ms(?:\.([A-Za-z0-9]+))?$")


class DatasetError(Exception):
    """Raised for unreadable, malformed, or inconsistent dataset assets."""


class CalibrationError(DatasetError):
    pass


class FrameStreamError(DatasetError):
    def __init__(self, message: str, frame_index: int):
        super().__init__(f"{message} (frame {frame_index})")
        self.frame_index = frame_index


# ---------------------------------------------------------------------------
# image I/O

def read_image(path: Path | str) -> np.ndarray:
    """Read an image as 2-D uint8 (color files are collapsed to luminance)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_image(path: Path | str, image: np.ndarray) -> None:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_mask(path: Path | str) -> np.ndarray:
    """Read a strictly binary {0,255} mask as a bool array."""
    arr = read_image(path)
    values = np.unique(arr)
    if not set(values.tolist()) <= {0, 255}:
        raise DatasetError(f"mask is not binary {{0,255}}: {path}")
    return arr > 0


def write_mask(path: Path | str, mask: np.ndarray) -> None:
    write_image(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


# ---------------------------------------------------------------------------
# calibration

@dataclass
class CameraCalibration:
    """Pinhole intrinsics for both eyes plus the stereo baseline.

    Focal lengths and principal points are in pixels, the baseline and the
    translation vector in metres, the rotation in axis-angle radians.
    """

    left_focal_x: float
    left_focal_y: float
    left_principal_x: float
    left_principal_y: float
    right_focal_x: float
    right_focal_y: float
    right_principal_x: float
    right_principal_y: float
    baseline_b: float
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray | None = None

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3)
        if self.translation is None:
            self.translation = np.array([-self.baseline_b, 0.0, 0.0])
        else:
            self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        for name in ("left_focal_x", "left_focal_y", "right_focal_x", "right_focal_y"):
            if not getattr(self, name) > 0:
                raise CalibrationError(f"non-positive focal length: {name}")
        if not self.baseline_b > 0:
            raise CalibrationError("non-positive baseline")
        for px, py in ((self.left_principal_x, self.left_principal_y),
                       (self.right_principal_x, self.right_principal_y)):
            if not (0 < px < NOMINAL_SIZE[0] and 0 < py < NOMINAL_SIZE[1]):
                raise CalibrationError(
                    f"principal point ({px}, {py}) outside nominal "
                    f"{NOMINAL_SIZE[0]}x{NOMINAL_SIZE[1]} frame")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "left": {"focal": [self.left_focal_x, self.left_focal_y],
                     "principal": [self.left_principal_x, self.left_principal_y]},
            "right": {"focal": [self.right_focal_x, self.right_focal_y],
                      "principal": [self.right_principal_x, self.right_principal_y]},
            "baseline_m": self.baseline_b,
            "rotation_axis_angle": [float(v) for v in self.rotation],
            "translation_m": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, data: dict, source: str = "<dict>") -> "CameraCalibration":
        try:
            left, right = data["left"], data["right"]
            baseline = data.get("baseline_m")
            translation = data.get("translation_m")
            if baseline is None:
                if translation is None:
                    raise KeyError("baseline_m")
                baseline = abs(float(translation[0]))
            return cls(
                left_focal_x=float(left["focal"][0]),
                left_focal_y=float(left["focal"][1]),
                left_principal_x=float(left["principal"][0]),
                left_principal_y=float(left["principal"][1]),
                right_focal_x=float(right["focal"][0]),
                right_focal_y=float(right["focal"][1]),
                right_principal_x=float(right["principal"][0]),
                right_principal_y=float(right["principal"][1]),
                baseline_b=float(baseline),
                rotation=np.asarray(data.get("rotation_axis_angle", [0.0, 0.0, 0.0]), dtype=float),
                translation=None if translation is None else np.asarray(translation, dtype=float),
            )
        except KeyError as exc:
            raise CalibrationError(f"calibration {source}: missing field {exc}") from exc
        except (TypeError, ValueError, IndexError) as exc:
            raise CalibrationError(f"calibration {source}: malformed value ({exc})") from exc


def load_calibration(path: Path | str) -> CameraCalibration:
    path = Path(path)
    if not path.is_file():
        raise CalibrationError(f"calibration file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"calibration {path}: invalid JSON ({exc})") from exc
    return CameraCalibration.from_dict(data, source=str(path))


def save_calibration(path: Path | str, calib: CameraCalibration) -> None:
    Path(path).write_text(json.dumps(calib.to_dict(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# video filename convention

def parse_video_filename(name: str) -> tuple[int, int | None]:
    """Parse ``<start>_<end>_ms[.ext]`` (or the single-timestamp form).

    Returns ``(start_ms, end_ms)``; ``end_ms`` is None for single-timestamp
    names and must be derived from the stream duration downstream.
    """
    m = _VIDEO_NAME_RE.match(name)
    if m is None:
        raise DatasetError(f"cannot parse capture times from video name: {name!r}")
    start = int(m.group(1))
    end = int(m.group(2)) if m.group(2) is not None else None
    return start, end


def format_video_filename(start_ms: int, end_ms: int, ext: str | None = None) -> str:
    """Canonical two-timestamp writer; inverse of :func:`parse_video_filename`."""
    stem = f"{start_ms}_{end_ms}_ms"
    return f"{stem}.{ext}" if ext else stem


# ---------------------------------------------------------------------------
# frame streams

class FrameStream:
    """Single-consumer, strictly-ordered frame source.

    Frames are yielded exactly once via iteration or :meth:`next`;
    there is no random access, so consumers can never look ahead.
    """

    frame_count: int = 0
    _cursor: int = 0

    @property
    def cursor(self) -> int:
        """Frames yielded so far; monotone, so audits can prove no lookahead."""
        return self._cursor

    def __iter__(self):
        return self

    def __next__(self) -> np.ndarray:
        raise NotImplementedError

    def next(self) -> np.ndarray:
        return self.__next__()


class DirectoryFrameStream(FrameStream):
    def __init__(self, paths: list[Path], expected_size: tuple[int, int] | None = None):
        self._paths = paths
        self._expected = expected_size
        self._cursor = 0
        self.frame_count = len(paths)

    def __next__(self) -> np.ndarray:
        if self._cursor >= self.frame_count:
            raise StopIteration
        idx = self._cursor
        try:
            frame = read_image(self._paths[idx])
        except Exception as exc:
            raise FrameStreamError(f"failed to decode {self._paths[idx]}: {exc}", idx) from exc
        if self._expected is not None and frame.shape != (self._expected[1], self._expected[0]):
            raise FrameStreamError(
                f"frame size {frame.shape[1]}x{frame.shape[0]} != expected "
                f"{self._expected[0]}x{self._expected[1]}", idx)
        self._cursor += 1
        return frame


class VideoFrameStream(FrameStream):
    """Streams a container video via opencv (optional dependency)."""

    def __init__(self, path: Path):
        cv2 = _require_cv2()
        self._cap = cv2.VideoCapture(str(path))
        if not self._cap.isOpened():
            raise DatasetError(f"cannot open video: {path}")
        self._cv2 = cv2
        self._path = path
        self._cursor = 0
        self.frame_count = int(self._cap.get(cv2.CAP_PROP_FRAME_COUNT))
        self.fps = float(self._cap.get(cv2.CAP_PROP_FPS)) or DEFAULT_FPS

    def __next__(self) -> np.ndarray:
        if self._cursor >= self.frame_count:
            self._cap.release()
            raise StopIteration
        ok, frame = self._cap.read()
        if not ok:
            raise FrameStreamError(f"decode failure in {self._path}", self._cursor)
        self._cursor += 1
        if frame.ndim == 3:
            frame = self._cv2.cvtColor(frame, self._cv2.COLOR_BGR2GRAY)
        return frame


def _require_cv2():
    try:
        import cv2
    except ImportError as exc:  # pragma: no cover
        raise DatasetError(
            "container video support requires opencv; install the 'video' extra "
            "or pre-extract frames with ingest_container_video()") from exc
    return cv2


def ingest_container_video(video_path: Path | str, out_dir: Path | str | None = None) -> Path:
    """Pre-extract an mp4 into the canonical numbered-png frame directory.

    The directory is named after the video stem (capture timestamps kept),
    next to the video unless ``out_dir`` is given.  Returns the directory.
    """
    video_path = Path(video_path)
    cv2 = _require_cv2()
    out = Path(out_dir) if out_dir is not None else video_path.with_suffix("")
    out.mkdir(parents=True, exist_ok=True)
    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise DatasetError(f"cannot open video: {video_path}")
    index = 0
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        if frame.ndim == 3:
            frame = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)
        write_image(out / f"{index:06d}.png", frame)
        index += 1
    cap.release()
    if index == 0:
        raise DatasetError(f"no frames decoded from {video_path}")
    return out


# ---------------------------------------------------------------------------
# sequences

def session_kind(session_id: str) -> str:
    if session_id in IN_VIVO_SESSIONS:
        return "in-vivo"
    if session_id in EX_VIVO_SESSIONS:
        return "ex-vivo"
    return "unknown"


@dataclass
class Sequence:
    """One benchmark clip: stereo frame source, IR images, masks, calibration."""

    session_id: str
    sequence_id: str
    kind: str
    root: Path
    calibration: CameraCalibration
    start_ms: int
    end_ms: int
    frame_count: int
    image_size: tuple[int, int]  # (width, height)
    n_points: int
    end_ms_derived: bool = False
    nonstandard_size: bool = False

    @property
    def key(self) -> str:
        return f"{self.session_id}/{self.sequence_id}"

    @property
    def duration_s(self) -> float:
        return (self.end_ms - self.start_ms) / 1000.0

    def ir_path(self, eye: str, which: str) -> Path:
        _check_eye(eye)
        name = "starticg.png" if which == "start" else "endicg.png"
        return self.root / eye / name

    def mask_path(self, eye: str, which: str) -> Path:
        _check_eye(eye)
        name = "startim.png" if which == "start" else "endim.png"
        return self.root / eye / "segmentation" / name

    def load_ir(self, eye: str, which: str) -> np.ndarray:
        return read_image(self.ir_path(eye, which))

    def load_mask(self, eye: str, which: str) -> np.ndarray | None:
        """Binary mask, or None when the eye has no shipped segmentation."""
        path = self.mask_path(eye, which)
        if not path.is_file():
            return None
        return read_mask(path)

    def frames_entry(self, eye: str) -> Path:
        _check_eye(eye)
        return _find_frames_entry(self.root / eye / "frames")


def _check_eye(eye: str) -> None:
    if eye not in ("left", "right"):
        raise ValueError(f"eye must be 'left' or 'right', got {eye!r}")


def _find_frames_entry(frames_dir: Path) -> Path:
    if not frames_dir.is_dir():
        raise DatasetError(f"missing frames directory: {frames_dir}")
    entries = sorted(p for p in frames_dir.iterdir() if _VIDEO_NAME_RE.match(p.name))
    if not entries:
        raise DatasetError(f"no '<ms>_ms' frame entry under {frames_dir}")
    # prefer an extracted directory over a sibling container video
    dirs = [p for p in entries if p.is_dir()]
    return dirs[0] if dirs else entries[0]


def _list_frame_files(entry: Path) -> list[Path]:
    files = [p for p in entry.iterdir() if p.suffix.lower() == ".png"]
    try:
        files.sort(key=lambda p: int(p.stem))
    except ValueError:
        files.sort()
    return files


def _count_frames(entry: Path) -> int:
    if entry.is_dir():
        return len(_list_frame_files(entry))
    return VideoFrameStream(entry).frame_count


def open_frame_stream(sequence: Sequence, eye: str) -> FrameStream:
    """Open a fresh single-consumer stream for one eye.

    Re-checks the left/right frame-count invariant at open time.
    """
    left_entry = sequence.frames_entry("left")
    right_entry = sequence.frames_entry("right")
    n_left, n_right = _count_frames(left_entry), _count_frames(right_entry)
    if n_left != n_right:
        raise DatasetError(
            f"{sequence.key}: left/right frame counts differ ({n_left} vs {n_right})")
    entry = left_entry if eye == "left" else right_entry
    if entry.is_dir():
        return DirectoryFrameStream(_list_frame_files(entry), expected_size=sequence.image_size)
    return VideoFrameStream(entry)


def load_sequence(seq_dir: Path, session_id: str, sequence_id: str, *,
                  min_area: int = 10,
                  expected_size: tuple[int, int] | None = None,
                  allow_nonstandard_size: bool = False) -> Sequence:
    """Load and validate one sequence directory (raises DatasetError)."""
    from . import imaging  # local import to keep module import-light

    calib = load_calibration(seq_dir / "calib.json")

    mandatory = [
        seq_dir / "left" / "starticg.png",
        seq_dir / "left" / "endicg.png",
        seq_dir / "left" / "segmentation" / "startim.png",
        seq_dir / "left" / "segmentation" / "endim.png",
        seq_dir / "right" / "starticg.png",
        seq_dir / "right" / "endicg.png",
    ]
    for path in mandatory:
        if not path.is_file():
            raise DatasetError(f"missing mandatory file: {path}")

    left_entry = _find_frames_entry(seq_dir / "left" / "frames")
    right_entry = _find_frames_entry(seq_dir / "right" / "frames")
    if left_entry.is_file() or right_entry.is_file():
        try:
            _require_cv2()
        except DatasetError as exc:
            raise DatasetError(f"{seq_dir}: {exc}") from exc
    n_left, n_right = _count_frames(left_entry), _count_frames(right_entry)
    if n_left != n_right:
        raise DatasetError(
            f"{seq_dir}: left/right frame counts differ ({n_left} vs {n_right})")
    if n_left == 0:
        raise DatasetError(f"{seq_dir}: empty frame stream")

    with Image.open(seq_dir / "left" / "starticg.png") as im:
        image_size = im.size  # (width, height)
    nonstandard = image_size != NOMINAL_SIZE
    if nonstandard and not allow_nonstandard_size:
        raise DatasetError(
            f"{seq_dir}: frame size {image_size[0]}x{image_size[1]} is not "
            f"{NOMINAL_SIZE[0]}x{NOMINAL_SIZE[1]} and no manifest declares it")
    if expected_size is not None and image_size != tuple(expected_size):
        raise DatasetError(
            f"{seq_dir}: frame size {image_size} does not match declared {expected_size}")

    start_ms, end_ms = parse_video_filename(left_entry.name)
    end_derived = False
    if end_ms is None:
        fps = VideoFrameStream(left_entry).fps if left_entry.is_file() else DEFAULT_FPS
        end_ms = start_ms + int(round(n_left / fps * 1000.0))
        end_derived = True
    if not end_ms > start_ms:
        raise DatasetError(f"{seq_dir}: end_ms ({end_ms}) must exceed start_ms ({start_ms})")

    start_mask = read_mask(seq_dir / "left" / "segmentation" / "startim.png")
    n_points = len(imaging.extract_segments(start_mask, min_area=min_area))

    return Sequence(
        session_id=session_id,
        sequence_id=sequence_id,
        kind=session_kind(session_id),
        root=seq_dir,
        calibration=calib,
        start_ms=start_ms,
        end_ms=end_ms,
        frame_count=n_left,
        image_size=image_size,
        n_points=n_points,
        end_ms_derived=end_derived,
        nonstandard_size=nonstandard,
    )


# ---------------------------------------------------------------------------
# dataset

@dataclass
class DatasetSummary:
    total_sequences: int
    total_points: int
    mean_clip_seconds: float
    sessions: list[str]
    in_vivo_sessions: int
    ex_vivo_sessions: int
    unknown_sessions: int

    def to_dict(self) -> dict:
        return {
            "total_sequences": self.total_sequences,
            "total_points": self.total_points,
            "mean_clip_seconds": self.mean_clip_seconds,
            "sessions": self.sessions,
            "in_vivo_sessions": self.in_vivo_sessions,
            "ex_vivo_sessions": self.ex_vivo_sessions,
            "unknown_sessions": self.unknown_sessions,
        }


@dataclass
class Dataset:
    root: Path
    sequences: list[Sequence]
    skipped: list[tuple[str, str]]  # (relative path, reason)
    manifest: dict | None = None

    @property
    def is_synthetic(self) -> bool:
        return self.manifest is not None

    def summary(self) -> DatasetSummary:
        sessions = sorted({s.session_id for s in self.sequences})
        durations = [s.duration_s for s in self.sequences]
        return DatasetSummary(
            total_sequences=len(self.sequences),
            total_points=sum(s.n_points for s in self.sequences),
            mean_clip_seconds=float(np.mean(durations)) if durations else math.nan,
            sessions=sessions,
            in_vivo_sessions=sum(1 for s in sessions if session_kind(s) == "in-vivo"),
            ex_vivo_sessions=sum(1 for s in sessions if session_kind(s) == "ex-vivo"),
            unknown_sessions=sum(1 for s in sessions if session_kind(s) == "unknown"),
        )


def load_dataset(root: Path | str, *, min_area: int = 10) -> Dataset:
    """Discover all sequences under a benchmark root.

    Sequences with missing or inconsistent mandatory assets are skipped with
    a recorded reason rather than aborting the run.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root not found: {root}")

    manifest = None
    manifest_path = root / "manifest.json"
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
    declared_sizes = {}
    if manifest:
        for entry in manifest.get("sequences", []):
            key = f"{entry['session_id']}/{entry['sequence_id']}"
            declared_sizes[key] = tuple(entry.get("image_size", NOMINAL_SIZE))

    sequences: list[Sequence] = []
    skipped: list[tuple[str, str]] = []
    for session_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if not re.fullmatch(r"\d{2}", session_dir.name):
            continue
        for seq_dir in sorted(p for p in session_dir.iterdir() if p.is_dir()):
            key = f"{session_dir.name}/{seq_dir.name}"
            try:
                sequences.append(load_sequence(
                    seq_dir, session_dir.name, seq_dir.name,
                    min_area=min_area,
                    expected_size=declared_sizes.get(key),
                    allow_nonstandard_size=manifest is not None,
                ))
            except DatasetError as exc:
                skipped.append((key, str(exc)))
    return Dataset(root=root, sequences=sequences, skipped=skipped, manifest=manifest)
