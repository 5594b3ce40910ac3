"""Gaze-centred patches and the patch matrix.

Each fixation's anchor frame is cropped around the fixation centroid,
vectorized as ``[R..., G..., B...]`` (each plane row-major, scaled to [0, 1])
and written as one column. Columns are filled recording by recording.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import (
    CacheFormatError,
    ConfigError,
    EmptyRecording,
    IoFailure,
    LengthMismatch,
)
from .fixation import Fixation
from .ingest import Recording

MATRIX_MAGIC = b"GZNMFMAT"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<8sIQQIIIQ")


@dataclass(frozen=True)
class StencilSpec:
    width_px: int
    height_px: int

    def __post_init__(self):
        for name in ("width_px", "height_px"):
            v = getattr(self, name)
            if int(v) != v or v < 1 or v % 2 == 0:
                raise ConfigError(f"stencil {name} must be an odd positive integer, got {v}")

    @property
    def n_features(self) -> int:
        return 3 * self.width_px * self.height_px

    def downscaled(self, factor: int) -> tuple[int, int]:
        """(width, height) of a patch after box-averaging by ``factor``."""
        return -(-self.width_px // factor), -(-self.height_px // factor)


@dataclass(frozen=True)
class ColumnMeta:
    recording_id: str
    ordinal_in_recording: int
    anchor_frame_index: int
    anchor_time_ms: int
    gaze_x_px: float
    gaze_y_px: float


@dataclass(frozen=True, eq=False)
class PatchMatrix:
    values: np.ndarray
    meta: tuple[ColumnMeta, ...]
    stencil: StencilSpec
    downscale: int = 1
    sources: Mapping[str, str] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def patch_size(self) -> tuple[int, int]:
        """(width, height) of the vectorized patches."""
        return self.stencil.downscaled(self.downscale)

    @property
    def recording_ids(self) -> list[str]:
        return list(dict.fromkeys(m.recording_id for m in self.meta))

    def digest(self) -> str:
        return matrix_digest(self.values)


def round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def crop_patch(image: np.ndarray, gaze: tuple[float, float], stencil: StencilSpec) -> np.ndarray:
    """Stencil-sized crop centred on the rounded gaze pixel, zero-padded outside the frame."""
    height, width = image.shape[:2]
    cx, cy = round_half_up(gaze[0]), round_half_up(gaze[1])
    hw, hh = stencil.width_px // 2, stencil.height_px // 2
    out = np.zeros((stencil.height_px, stencil.width_px, 3), dtype=np.uint8)
    x0, y0 = cx - hw, cy - hh
    sx0, sx1 = max(x0, 0), min(cx + hw + 1, width)
    sy0, sy1 = max(y0, 0), min(cy + hh + 1, height)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = image[sy0:sy1, sx0:sx1]
    return out


def _block_mean(a: np.ndarray, factor: int, axis: int) -> np.ndarray:
    starts = np.arange(0, a.shape[axis], factor)
    sums = np.add.reduceat(a, starts, axis=axis)
    counts = np.diff(np.append(starts, a.shape[axis]))
    shape = [1] * a.ndim
    shape[axis] = len(counts)
    return sums / counts.reshape(shape)


def downscale_patch(patch: np.ndarray, factor: int) -> np.ndarray:
    """Box-average by an integer factor; trailing partial blocks average what they cover."""
    if factor == 1:
        return patch
    a = patch.astype(np.float64)
    return _block_mean(_block_mean(a, factor, 0), factor, 1)


def vectorize_patch(patch: np.ndarray) -> np.ndarray:
    """Channel-stacked vector ``[R plane, G plane, B plane]`` scaled into [0, 1]."""
    patch = np.asarray(patch)
    return np.transpose(patch, (2, 0, 1)).astype(np.float64).ravel() / 255.0


def devectorize(vector: np.ndarray, stencil: StencilSpec | tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`vectorize_patch`: ×255, round half up, clip into ``uint8``."""
    width, height = (stencil.width_px, stencil.height_px) if isinstance(stencil, StencilSpec) else stencil
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.size != 3 * width * height:
        raise LengthMismatch(f"vector of length {v.size} does not fit a {width}x{height} RGB patch")
    planes = np.floor(v.reshape(3, height, width) * 255.0 + 0.5)
    return np.clip(planes, 0, 255).astype(np.uint8).transpose(1, 2, 0).copy()


def extract_column(recording: Recording, fixation: Fixation, stencil: StencilSpec, downscale: int = 1) -> np.ndarray:
    frame = recording.frame(fixation.anchor_frame_index)
    patch = crop_patch(frame, fixation.anchor_gaze, stencil)
    return vectorize_patch(downscale_patch(patch, downscale))


def build_patch_matrix(
    recordings: Sequence[Recording],
    fixations: Sequence[Sequence[Fixation]],
    stencil: StencilSpec,
    downscale: int = 1,
    threads: int = 1,
) -> PatchMatrix:
    """Assemble the patch matrix, one column per fixation, recordings in given order."""
    if len(recordings) != len(fixations):
        raise ValueError("need one fixation list per recording")
    if int(downscale) != downscale or downscale < 1:
        raise ConfigError(f"downscale must be a positive integer, got {downscale}")
    jobs = []
    meta = []
    for rec, fix in zip(recordings, fixations):
        if not fix:
            raise EmptyRecording(rec.id)
        for ordinal, f in enumerate(fix):
            jobs.append((rec, f))
            meta.append(
                ColumnMeta(rec.id, ordinal, f.anchor_frame_index, f.anchor_time_ms,
                           f.centroid_x_px, f.centroid_y_px)
            )
    pw, ph = stencil.downscaled(downscale)
    values = np.empty((3 * pw * ph, len(jobs)), dtype=np.float64, order="F")

    def fill(j):
        rec, f = jobs[j]
        values[:, j] = extract_column(rec, f, stencil, downscale)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(len(jobs))))
    else:
        for j in range(len(jobs)):
            fill(j)
    sources = {rec.id: str(rec.path) for rec in recordings if rec.path is not None}
    return PatchMatrix(values, tuple(meta), stencil, downscale, sources)


# --------------------------------------------------------------------------
# cache file
# --------------------------------------------------------------------------


def matrix_digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.asarray(values, dtype="<f8").tobytes(order="F")).hexdigest()


def atomic_write(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    if not path.parent.is_dir():
        raise IoFailure(path.parent, "output directory does not exist")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoFailure(path, str(exc)) from exc


def save_patch_matrix(path: str | Path, pm: PatchMatrix) -> None:
    meta_blob = json.dumps(
        {
            "columns": [asdict(m) for m in pm.meta],
            "sources": dict(pm.sources),
            "params": dict(pm.params),
        },
        separators=(",", ":"),
    ).encode("utf-8")
    header = _MATRIX_HEADER.pack(
        MATRIX_MAGIC, MATRIX_VERSION, pm.rows, pm.cols,
        pm.stencil.width_px, pm.stencil.height_px, pm.downscale, len(meta_blob),
    )
    data = np.asarray(pm.values, dtype="<f8").tobytes(order="F")
    atomic_write(path, header + meta_blob + data)


def load_patch_matrix(path: str | Path) -> PatchMatrix:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(path, str(exc)) from exc
    if len(blob) < _MATRIX_HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, rows, cols, sw, sh, down, meta_len = _MATRIX_HEADER.unpack_from(blob)
    if magic != MATRIX_MAGIC:
        raise CacheFormatError(f"{path}: not a patch matrix cache")
    if version != MATRIX_VERSION:
        raise CacheFormatError(f"{path}: cache version {version}, expected {MATRIX_VERSION}")
    offset = _MATRIX_HEADER.size
    doc = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
    offset += meta_len
    if len(blob) - offset != rows * cols * 8:
        raise CacheFormatError(f"{path}: payload size does not match {rows}x{cols}")
    values = np.frombuffer(blob, dtype="<f8", offset=offset).reshape((rows, cols), order="F")
    meta = tuple(ColumnMeta(**m) for m in doc["columns"])
    if len(meta) != cols:
        raise CacheFormatError(f"{path}: {len(meta)} column records for {cols} columns")
    stencil = StencilSpec(sw, sh)
    return PatchMatrix(
        values.astype(np.float64, order="F"), meta, stencil, down, doc["sources"], doc.get("params", {})
    )
