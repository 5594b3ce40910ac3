"""Loading recordings from disk.

A recording directory holds ``gaze.csv`` and ``frames/NNNNNN.ppm`` (or ``.png``).
Frames are decoded lazily; images are ``uint8`` arrays of shape
``(height, width, 3)``.
"""

from __future__ import annotations

import csv
import io
import math
import re
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    DataError,
    DimensionMismatch,
    MalformedCsv,
    MissingGazeFile,
    NoFrames,
    NonMonotonicTimestamps,
    TruncatedPayload,
    UnsupportedFormat,
)

GAZE_HEADER = ("timestamp_ms", "frame_index", "x_px", "y_px")
_FRAME_NAME = re.compile(r"^(\d{6})\.(ppm|png)$")
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class DataWarning(UserWarning):
    """Recoverable irregularity in input data (duplicates, degenerate factors)."""


@dataclass(frozen=True)
class GazeSample:
    timestamp_ms: int
    frame_index: int
    x_px: float
    y_px: float
    valid: bool = True
    clamped: bool = False


# --------------------------------------------------------------------------
# image codec
# --------------------------------------------------------------------------


def _ppm_header(data: bytes) -> tuple[int, int, int, int]:
    """Parse a P6 header, returning (width, height, maxval, payload offset)."""
    if not data.startswith(b"P6"):
        raise UnsupportedFormat(f"not a binary PPM (magic {data[:2]!r})")
    tokens: list[int] = []
    pos = 2
    n = len(data)
    while len(tokens) < 3:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise TruncatedPayload("incomplete PPM header")
        tokens.append(int(data[start:pos]))
    # exactly one whitespace byte separates header from raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise TruncatedPayload("incomplete PPM header")
    width, height, maxval = tokens
    return width, height, maxval, pos + 1


def decode_image(data: bytes) -> np.ndarray:
    """Decode a P6 (maxval 255) or PNG payload into an RGB ``uint8`` array."""
    if data.startswith(_PNG_SIGNATURE):
        return _decode_png(data)
    if data[:2] in (b"P1", b"P2", b"P3", b"P4", b"P5", b"P7"):
        raise UnsupportedFormat(f"PPM variant {data[:2].decode()} is not supported")
    width, height, maxval, offset = _ppm_header(data)
    if maxval != 255:
        raise UnsupportedFormat(f"maxval {maxval} (only 255 supported)")
    if width < 1 or height < 1:
        raise UnsupportedFormat(f"invalid dimensions {width}x{height}")
    expected = width * height * 3
    raster = data[offset : offset + expected]
    if len(raster) < expected:
        raise TruncatedPayload(
            f"expected {expected} raster bytes for {width}x{height}, got {len(raster)}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def _decode_png(data: bytes) -> np.ndarray:
    from PIL import Image as PILImage

    try:
        with PILImage.open(io.BytesIO(data)) as im:
            im.load()
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except OSError as exc:
        raise TruncatedPayload(str(exc)) from exc


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("expected a uint8 array of shape (height, width, 3)")
    height, width = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (width, height) + np.ascontiguousarray(image).tobytes()


def image_size(path: Path) -> tuple[int, int]:
    """(width, height) of an image file, reading only its header."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(512)
    if head.startswith(_PNG_SIGNATURE):
        from PIL import Image as PILImage

        with PILImage.open(path) as im:
            return im.size
    width, height, _, _ = _ppm_header(head)
    return width, height


# --------------------------------------------------------------------------
# gaze log
# --------------------------------------------------------------------------


def parse_gaze_csv(data: bytes | str) -> list[GazeSample]:
    """Parse a gaze log into samples sorted by timestamp.

    Rows with empty ``x_px``/``y_px`` become ``valid=False`` samples. Rows that
    repeat an earlier timestamp are dropped with a :class:`DataWarning`.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCsv(1, "missing header") from None
    if tuple(h.strip() for h in header) != GAZE_HEADER:
        raise MalformedCsv(1, f"header must be {','.join(GAZE_HEADER)}")

    rows: list[GazeSample] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise MalformedCsv(line_no, f"expected 4 fields, got {len(row)}")
        t_s, f_s, x_s, y_s = (c.strip() for c in row)
        try:
            t = int(t_s)
            frame = int(f_s)
        except ValueError:
            raise MalformedCsv(line_no, "timestamp_ms and frame_index must be integers") from None
        if t < 0 or frame < 0:
            raise MalformedCsv(line_no, "negative timestamp or frame index")
        if not x_s and not y_s:
            rows.append(GazeSample(t, frame, math.nan, math.nan, valid=False))
            continue
        try:
            x, y = float(x_s), float(y_s)
        except ValueError:
            raise MalformedCsv(line_no, "x_px and y_px must be numeric or both empty") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise MalformedCsv(line_no, "non-finite gaze coordinate")
        rows.append(GazeSample(t, frame, x, y))

    rows.sort(key=lambda s: s.timestamp_ms)  # stable: file order among equal stamps
    samples: list[GazeSample] = []
    dropped = 0
    for s in rows:
        if samples and s.timestamp_ms == samples[-1].timestamp_ms:
            dropped += 1
            continue
        samples.append(s)
    if dropped:
        warnings.warn(f"dropped {dropped} gaze rows with duplicate timestamps", DataWarning, stacklevel=2)
    for prev, cur in zip(samples, samples[1:]):
        if cur.frame_index < prev.frame_index:
            raise NonMonotonicTimestamps(
                f"frame_index decreases from {prev.frame_index} to {cur.frame_index} "
                f"at t={cur.timestamp_ms} ms"
            )
    return samples


def clamp_samples(samples: Sequence[GazeSample], width: int, height: int) -> list[GazeSample]:
    """Clamp valid out-of-frame gaze to the nearest border pixel and flag it."""
    out = []
    for s in samples:
        if s.valid:
            x = min(max(s.x_px, 0.0), float(width - 1))
            y = min(max(s.y_px, 0.0), float(height - 1))
            if x != s.x_px or y != s.y_px:
                s = GazeSample(s.timestamp_ms, s.frame_index, x, y, True, clamped=True)
        out.append(s)
    return out


# --------------------------------------------------------------------------
# recordings
# --------------------------------------------------------------------------


class FrameSource:
    """Lazy ``frame_index -> image`` lookup, safe for concurrent reads.

    ``reads`` counts decodes so tests can observe laziness.
    """

    def __init__(self, loader: Callable[[int], np.ndarray], frame_count: int):
        self._loader = loader
        self.frame_count = frame_count
        self._lock = threading.Lock()
        self.reads = 0

    def __len__(self):
        return self.frame_count

    def __getitem__(self, index: int) -> np.ndarray:
        if not 0 <= index < self.frame_count:
            raise IndexError(f"frame {index} out of range [0, {self.frame_count})")
        with self._lock:
            self.reads += 1
        return self._loader(index)

    @classmethod
    def from_files(cls, paths: Sequence[Path]) -> "FrameSource":
        paths = list(paths)
        return cls(lambda i: decode_image(paths[i].read_bytes()), len(paths))

    @classmethod
    def from_arrays(cls, frames: Sequence[np.ndarray]) -> "FrameSource":
        frames = list(frames)
        return cls(lambda i: frames[i], len(frames))


@dataclass(frozen=True)
class Recording:
    id: str
    frame_count: int
    width: int
    height: int
    samples: tuple[GazeSample, ...]
    frame_source: FrameSource = field(repr=False, compare=False)
    path: Path | None = field(default=None, compare=False)

    def frame(self, index: int) -> np.ndarray:
        return self.frame_source[index]


def _frame_paths(frames_dir: Path) -> list[Path]:
    if not frames_dir.is_dir():
        raise NoFrames(f"no frames/ directory in {frames_dir.parent}")
    numbered = {}
    for p in frames_dir.iterdir():
        m = _FRAME_NAME.match(p.name)
        if m:
            idx = int(m.group(1))
            if idx in numbered:
                raise DataError(f"frame {idx} present in more than one format in {frames_dir}")
            numbered[idx] = p
    if not numbered:
        raise NoFrames(f"no numbered frames in {frames_dir}")
    missing = sorted(set(range(max(numbered) + 1)) - set(numbered))
    if missing:
        raise DataError(f"gap in frame numbering in {frames_dir}: missing {missing[:5]}")
    return [numbered[i] for i in range(len(numbered))]


def load_recording(dir_path: str | Path, recording_id: str | None = None) -> Recording:
    """Load one recording directory; only frame headers are read eagerly."""
    root = Path(dir_path)
    gaze_path = root / "gaze.csv"
    if not gaze_path.is_file():
        raise MissingGazeFile(f"missing gaze.csv in {root}")
    paths = _frame_paths(root / "frames")

    width, height = image_size(paths[0])
    for p in paths[1:]:
        size = image_size(p)
        if size != (width, height):
            raise DimensionMismatch(
                f"{p.name} is {size[0]}x{size[1]}, frame 0 is {width}x{height}"
            )

    samples = parse_gaze_csv(gaze_path.read_bytes())
    for s in samples:
        if s.frame_index >= len(paths):
            raise DataError(
                f"gaze sample at t={s.timestamp_ms} references frame {s.frame_index}, "
                f"recording has {len(paths)} frames"
            )
    samples = clamp_samples(samples, width, height)
    return Recording(
        id=recording_id or root.name,
        frame_count=len(paths),
        width=width,
        height=height,
        samples=tuple(samples),
        frame_source=FrameSource.from_files(paths),
        path=root,
    )


def write_recording(
    dir_path: str | Path,
    frames: Sequence[np.ndarray],
    samples: Sequence[GazeSample],
) -> Path:
    """Write frames and gaze log in the on-disk layout read by :func:`load_recording`."""
    root = Path(dir_path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        (root / "frames" / f"{i:06d}.ppm").write_bytes(encode_ppm(frame))
    lines = [",".join(GAZE_HEADER)]
    for s in samples:
        if s.valid:
            lines.append(f"{s.timestamp_ms},{s.frame_index},{s.x_px!r},{s.y_px!r}")
        else:
            lines.append(f"{s.timestamp_ms},{s.frame_index},,")
    (root / "gaze.csv").write_text("\n".join(lines) + "\n")
    return root
