"""Synthetic gallery scenes with known AOI ground truth.

Each AOI is a solid-colour rectangular "painting" hung at a fixed spot on a
black wall. Frames show only the painting being visited. Gaze rests on the
painting centre with a little seeded jitter, and one lost-gaze sample every
``blink_period`` frames splits each dwell into several fixations.

Paintings default to three different shapes (wide band, tall band, full
square). That gives every template a pixel/channel entry no other template
uses, so the patch matrix has exactly one nonnegative factorization of rank
``aoi_count``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .components import ComponentAnalysis
from .exceptions import ConfigError, KMismatch, LengthMismatch
from .ingest import FrameSource, GazeSample, Recording, decode_image, encode_ppm, write_recording
from .patchgrid import StencilSpec, crop_patch, vectorize_patch

PALETTE = [
    (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0),
    (255, 0, 255), (0, 255, 255), (255, 128, 0), (128, 0, 255),
]
DEFAULT_STENCIL = StencilSpec(31, 31)
_SHAPES = ["wide", "wide", "full", "tall", "small", "tall", "full", "wide"]


def _odd(n: int) -> int:
    return max(1, n if n % 2 else n - 1)


def painting_size(shape: str, stencil: StencilSpec) -> tuple[int, int]:
    w, h = stencil.width_px, stencil.height_px
    return {
        "wide": (w + 8, _odd(h // 2)),
        "tall": (_odd(w // 2), h + 8),
        "full": (w + 8, h + 8),
        "small": (_odd(w // 3), _odd(h // 3)),
    }[shape]


@dataclass(frozen=True)
class SceneSpec:
    aoi_count: int
    schedules: tuple[tuple[tuple[int, int], ...], ...]  # per recording: (aoi_index, dwell_frames)
    aoi_colors: tuple[tuple[int, int, int], ...] = ()
    aoi_sizes: tuple[tuple[int, int], ...] = ()  # painting (width, height) in pixels
    frame_size: tuple[int, int] = (0, 0)
    noise_amplitude: float = 0.0
    seed: int = 0
    jitter_px: float = 0.45
    frame_interval_ms: int = 30
    blink_period: int = 10

    def __post_init__(self):
        n = self.aoi_count
        if n < 1:
            raise ConfigError("aoi_count must be >= 1")
        if not self.aoi_colors:
            if n > len(PALETTE):
                raise ConfigError(f"default palette has {len(PALETTE)} colours; pass aoi_colors")
            object.__setattr__(self, "aoi_colors", tuple(PALETTE[:n]))
        if not self.aoi_sizes:
            object.__setattr__(
                self, "aoi_sizes", tuple(painting_size(_SHAPES[a % len(_SHAPES)], DEFAULT_STENCIL) for a in range(n))
            )
        if self.frame_size == (0, 0):
            object.__setattr__(self, "frame_size", (64 * (n + 1), 96))
        if len(self.aoi_colors) != n or len(self.aoi_sizes) != n:
            raise ConfigError("need one colour and one size per AOI")
        for a, b in itertools.combinations(self.aoi_colors, 2):
            if max(abs(x - y) for x, y in zip(a, b)) == 0:
                raise ConfigError(f"AOI colours must be pairwise distinct, got {a} twice")
        if not 0 <= self.noise_amplitude < 1:
            raise ConfigError("noise_amplitude must lie in [0, 1)")
        if not 0 <= self.jitter_px <= 2:
            raise ConfigError("jitter_px must lie in [0, 2]")
        if not self.schedules:
            raise ConfigError("need at least one recording schedule")
        for sched in self.schedules:
            if not sched:
                raise ConfigError("empty visit schedule")
            for aoi, dwell in sched:
                if not 0 <= aoi < n or dwell < 1:
                    raise ConfigError(f"invalid visit ({aoi}, {dwell})")

    def aoi_center(self, aoi: int) -> tuple[int, int]:
        width, height = self.frame_size
        return round(width * (aoi + 1) / (self.aoi_count + 1)), height // 2


@dataclass(frozen=True, eq=False)
class GroundTruth:
    frame_aoi: dict[str, tuple[int, ...]]  # recording id -> AOI visited in each frame
    templates: tuple[np.ndarray, ...]  # stencil-sized crop of each painting
    stencil: StencilSpec
    dwell_intervals: dict[str, tuple[tuple[int, int, int], ...]] = field(default_factory=dict)


def gallery_spec(
    n_recordings: int = 3,
    aoi_count: int = 4,
    stencil: StencilSpec = DEFAULT_STENCIL,
    dwell_frames: int = 30,
    noise_amplitude: float = 0.0,
    seed: int = 0,
    frame_size: tuple[int, int] | None = None,
) -> SceneSpec:
    """Scene where every recording visits every AOI once, in varying order.

    Orders follow the walking patterns of a gallery visit: left to right,
    right to left, then seeded random walks.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    orders = []
    for r in range(n_recordings):
        if r % 3 == 0:
            orders.append(list(range(aoi_count)))
        elif r % 3 == 1:
            orders.append(list(reversed(range(aoi_count))))
        else:
            orders.append([int(a) for a in rng.permutation(aoi_count)])
    sizes = tuple(painting_size(_SHAPES[a % len(_SHAPES)], stencil) for a in range(aoi_count))
    return SceneSpec(
        aoi_count=aoi_count,
        schedules=tuple(tuple((a, dwell_frames) for a in order) for order in orders),
        aoi_sizes=sizes,
        frame_size=frame_size or (64 * (aoi_count + 1), 96),
        noise_amplitude=noise_amplitude,
        seed=seed,
    )


def _draw_painting(frame: np.ndarray, center: tuple[int, int], size: tuple[int, int], color) -> None:
    height, width = frame.shape[:2]
    pw, ph = size
    x0, y0 = center[0] - pw // 2, center[1] - ph // 2
    xs0, xs1 = max(x0, 0), min(x0 + pw, width)
    ys0, ys1 = max(y0, 0), min(y0 + ph, height)
    if xs0 < xs1 and ys0 < ys1:
        frame[ys0:ys1, xs0:xs1] = color


def _clean_frame(spec: SceneSpec, aoi: int) -> np.ndarray:
    width, height = spec.frame_size
    frame = np.zeros((height, width, 3), dtype=np.uint8)
    _draw_painting(frame, spec.aoi_center(aoi), spec.aoi_sizes[aoi], spec.aoi_colors[aoi])
    return frame


def aoi_templates(spec: SceneSpec, stencil: StencilSpec) -> tuple[np.ndarray, ...]:
    return tuple(
        crop_patch(_clean_frame(spec, a), spec.aoi_center(a), stencil) for a in range(spec.aoi_count)
    )


def generate_scene(spec: SceneSpec, stencil: StencilSpec = DEFAULT_STENCIL) -> tuple[list[Recording], GroundTruth]:
    """Render every recording of ``spec`` in memory; deterministic in ``spec.seed``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    clean = [_clean_frame(spec, a) for a in range(spec.aoi_count)]
    amp = spec.noise_amplitude * 255.0
    recordings, frame_aoi, intervals = [], {}, {}
    for r, schedule in enumerate(spec.schedules):
        rid = f"rec{r + 1:02d}"
        frames, samples, visited, spans = [], [], [], []
        for aoi, dwell in schedule:
            spans.append((aoi, len(frames), len(frames) + dwell - 1))
            cx, cy = spec.aoi_center(aoi)
            for d in range(dwell):
                i = len(frames)
                frame = clean[aoi]
                if amp > 0:
                    noise = rng.uniform(-amp, amp, size=frame.shape)
                    frame = np.clip(np.floor(frame + noise + 0.5), 0, 255).astype(np.uint8)
                frames.append(frame)
                visited.append(aoi)
                t = i * spec.frame_interval_ms
                if d % spec.blink_period == spec.blink_period - 1:
                    samples.append(GazeSample(t, i, math.nan, math.nan, valid=False))
                    continue
                radius = spec.jitter_px * math.sqrt(rng.random())
                angle = 2 * math.pi * rng.random()
                samples.append(GazeSample(t, i, cx + radius * math.cos(angle), cy + radius * math.sin(angle)))
        width, height = spec.frame_size
        recordings.append(
            Recording(rid, len(frames), width, height, tuple(samples), FrameSource.from_arrays(frames))
        )
        frame_aoi[rid] = tuple(visited)
        intervals[rid] = tuple(spans)
    return recordings, GroundTruth(frame_aoi, aoi_templates(spec, stencil), stencil, intervals)


def write_scene(out_dir: str | Path, recordings: Sequence[Recording], truth: GroundTruth) -> list[Path]:
    """Write recordings in the ingest layout plus ``ground_truth.json`` and templates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in recordings:
        frames = [rec.frame(i) for i in range(rec.frame_count)]
        paths.append(write_recording(out / rec.id, frames, rec.samples))
    for a, tmpl in enumerate(truth.templates):
        (out / f"template_{a:02d}.ppm").write_bytes(encode_ppm(tmpl))
    doc = {
        "stencil": [truth.stencil.width_px, truth.stencil.height_px],
        "templates": [f"template_{a:02d}.ppm" for a in range(len(truth.templates))],
        "frame_aoi": {rid: list(v) for rid, v in truth.frame_aoi.items()},
        "dwell_intervals": {rid: [list(s) for s in v] for rid, v in truth.dwell_intervals.items()},
    }
    (out / "ground_truth.json").write_text(json.dumps(doc, indent=2) + "\n")
    return paths


def load_ground_truth(path: str | Path) -> GroundTruth:
    path = Path(path)
    doc = json.loads(path.read_text())
    templates = tuple(decode_image((path.parent / name).read_bytes()) for name in doc["templates"])
    return GroundTruth(
        {rid: tuple(v) for rid, v in doc["frame_aoi"].items()},
        templates,
        StencilSpec(*doc["stencil"]),
        {rid: tuple(tuple(s) for s in v) for rid, v in doc["dwell_intervals"].items()},
    )


# --------------------------------------------------------------------------
# recovery scoring
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryScore:
    # (aoi index, component index_original, cosine similarity), ordered by AOI
    pairs: tuple[tuple[int, int, float], ...]
    peak_hits: int
    peak_total: int

    @property
    def min_similarity(self) -> float:
        return min(s for _, _, s in self.pairs)

    @property
    def peak_hit_fraction(self) -> float:
        return self.peak_hits / self.peak_total if self.peak_total else 0.0


def similarity_matrix(analysis: ComponentAnalysis, truth: GroundTruth) -> np.ndarray:
    """Cosine similarity, rows = components (as ordered in ``analysis``), cols = AOIs."""
    T = np.stack([vectorize_patch(t) for t in truth.templates], axis=1)
    W = np.stack([c.spatial for c in analysis.components], axis=1)
    if T.shape[0] != W.shape[0]:
        raise LengthMismatch(f"templates have {T.shape[0]} entries, components {W.shape[0]}")
    Tn = np.linalg.norm(T, axis=0)
    Wn = np.linalg.norm(W, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        C = (W.T @ T) / np.outer(Wn, Tn)
    return np.nan_to_num(C)


def evaluate_recovery(analysis: ComponentAnalysis, truth: GroundTruth) -> RecoveryScore:
    """Match components to AOI templates and check where their indicator peaks land."""
    n_aoi = len(truth.templates)
    if analysis.k != n_aoi:
        raise KMismatch(f"{analysis.k} components for {n_aoi} AOIs")
    C = similarity_matrix(analysis, truth)
    comp_idx, aoi_idx = linear_sum_assignment(C, maximize=True)
    pairs, hits, total = [], 0, 0
    for ci, a in sorted(zip(comp_idx, aoi_idx), key=lambda p: p[1]):
        comp = analysis.components[ci]
        pairs.append((int(a), comp.index_original, float(C[ci, a])))
        for rid in analysis.recording_order:
            if not comp.indicators[rid].active:
                continue
            _, frame = analysis.representative_frame(comp, rid)
            total += 1
            hits += truth.frame_aoi[rid][frame] == a
    return RecoveryScore(tuple(pairs), hits, total)
