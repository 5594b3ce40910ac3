"""Dispersion-threshold (I-DT) fixation detection.

Each fixation contributes one anchor frame to the patch matrix, which is how
the frame count of a recording is thinned out before factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .exceptions import ConfigError
from .ingest import GazeSample

DEFAULT_DISPERSION_PX = 25.0
DEFAULT_MIN_DURATION_MS = 200


@dataclass(frozen=True)
class FixationParams:
    dispersion_px: float = DEFAULT_DISPERSION_PX
    min_duration_ms: int = DEFAULT_MIN_DURATION_MS

    def __post_init__(self):
        if not self.dispersion_px > 0:
            raise ConfigError(f"dispersion_px must be > 0, got {self.dispersion_px}")
        if int(self.min_duration_ms) != self.min_duration_ms or self.min_duration_ms <= 0:
            raise ConfigError(f"min_duration_ms must be a positive integer, got {self.min_duration_ms}")


@dataclass(frozen=True)
class Fixation:
    start_ms: int
    end_ms: int
    centroid_x_px: float
    centroid_y_px: float
    sample_count: int
    anchor_frame_index: int
    anchor_time_ms: int

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    @property
    def anchor_gaze(self) -> tuple[float, float]:
        return (self.centroid_x_px, self.centroid_y_px)


def _nearest_midpoint(members: Sequence[GazeSample], start_ms: int, end_ms: int) -> GazeSample:
    # compare 2*t against start+end to stay in integers; earlier sample wins ties
    twice_mid = start_ms + end_ms
    return min(members, key=lambda s: (abs(2 * s.timestamp_ms - twice_mid), s.timestamp_ms))


def _make_fixation(members: Sequence[GazeSample]) -> Fixation:
    start, end = members[0].timestamp_ms, members[-1].timestamp_ms
    n = len(members)
    cx = sum(s.x_px for s in members) / n
    cy = sum(s.y_px for s in members) / n
    anchor = _nearest_midpoint(members, start, end)
    return Fixation(start, end, cx, cy, n, anchor.frame_index, anchor.timestamp_ms)


def detect_fixations(samples: Sequence[GazeSample], params: FixationParams) -> list[Fixation]:
    """Greedy I-DT over time-ordered samples.

    A window qualifies once it spans ``min_duration_ms`` with bounding-box width
    and height both within ``dispersion_px``; it is then extended sample by
    sample while the box stays within bounds. Invalid samples end any window.
    """
    thr = params.dispersion_px
    min_dur = params.min_duration_ms
    n = len(samples)
    fixations: list[Fixation] = []
    i = 0
    while i < n:
        if not samples[i].valid:
            i += 1
            continue
        t0 = samples[i].timestamp_ms
        j = i
        while j + 1 < n and samples[j + 1].valid and samples[j].timestamp_ms - t0 < min_dur:
            j += 1
        if samples[j].timestamp_ms - t0 < min_dur:
            # blocked by an invalid sample or the end: no window starting in [i, j] can qualify
            i = j + 1
            continue

        xs = [s.x_px for s in samples[i : j + 1]]
        ys = [s.y_px for s in samples[i : j + 1]]
        x_lo, x_hi, y_lo, y_hi = min(xs), max(xs), min(ys), max(ys)
        if x_hi - x_lo > thr or y_hi - y_lo > thr:
            i += 1
            continue

        while j + 1 < n and samples[j + 1].valid:
            s = samples[j + 1]
            nx_lo, nx_hi = min(x_lo, s.x_px), max(x_hi, s.x_px)
            ny_lo, ny_hi = min(y_lo, s.y_px), max(y_hi, s.y_px)
            if nx_hi - nx_lo > thr or ny_hi - ny_lo > thr:
                break
            x_lo, x_hi, y_lo, y_hi = nx_lo, nx_hi, ny_lo, ny_hi
            j += 1

        fixations.append(_make_fixation(samples[i : j + 1]))
        i = j + 1
    return fixations


def fixation_anchor(fixation: Fixation, samples: Sequence[GazeSample]) -> tuple[int, tuple[float, float]]:
    """Anchor frame (member sample nearest the temporal midpoint) and centroid gaze."""
    members = [
        s for s in samples if s.valid and fixation.start_ms <= s.timestamp_ms <= fixation.end_ms
    ]
    if not members:
        raise ValueError("fixation has no member samples in the given sequence")
    anchor = _nearest_midpoint(members, fixation.start_ms, fixation.end_ms)
    return anchor.frame_index, fixation.anchor_gaze


def write_fixations_csv(path: str | Path, fixations: Sequence[Fixation]) -> None:
    lines = ["start_ms,end_ms,centroid_x,centroid_y,anchor_frame"]
    lines += [
        f"{f.start_ms},{f.end_ms},{f.centroid_x_px!r},{f.centroid_y_px!r},{f.anchor_frame_index}"
        for f in fixations
    ]
    Path(path).write_text("\n".join(lines) + "\n")
