"""Interpreting a factorization as ranked spatiotemporal components."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .exceptions import AllZeroTemporal, InactiveRecording, LengthMismatch, MetaLengthMismatch
from .ingest import DataWarning
from .nmf import Factorization
from .patchgrid import ColumnMeta, StencilSpec, devectorize

DEFAULT_BOUNDARY_MARGIN = 1


@dataclass(frozen=True, eq=False)
class IndicatorSeries:
    values: np.ndarray
    raw_max: float
    peak_ordinal: int
    peak_at_boundary: bool

    @property
    def active(self) -> bool:
        return self.raw_max > 0


@dataclass(frozen=True, eq=False)
class Component:
    index_original: int
    spatial: np.ndarray
    impact: float
    indicators: Mapping[str, IndicatorSeries] = field(default_factory=dict)


def normalize_factorization(F: Factorization) -> Factorization:
    """Rescale ``W`` columns to unit length, moving the scale into ``H`` rows."""
    norms = np.linalg.norm(F.W, axis=0)
    W = F.W.copy()
    H = F.H.copy()
    zero = norms == 0
    if zero.any():
        warnings.warn(
            f"spatial components {np.flatnonzero(zero).tolist()} are zero; their temporal rows are zeroed",
            DataWarning,
            stacklevel=2,
        )
    nz = ~zero
    W[:, nz] /= norms[nz]
    H[nz] *= norms[nz, None]
    H[zero] = 0.0
    return replace(F, W=W, H=H)


def _row_norms(H: np.ndarray) -> np.ndarray:
    # factor out each row's maximum so subnormal entries do not underflow
    H = np.atleast_2d(np.abs(np.asarray(H, dtype=np.float64)))
    scale = H.max(axis=1) if H.shape[1] else np.zeros(H.shape[0])
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.linalg.norm(H / safe[:, None], axis=1)


def impacts(H: np.ndarray) -> np.ndarray:
    """Relative impact share ``‖h_j‖₂ / Σ_i ‖h_i‖₂`` for every row of ``H``."""
    norms = _row_norms(H)
    total = norms.sum()
    if total == 0:
        raise AllZeroTemporal("every temporal component is zero")
    return norms / total


def impact(h_j: np.ndarray, all_h: np.ndarray) -> float:
    total = float(_row_norms(all_h).sum())
    if total == 0:
        raise AllZeroTemporal("every temporal component is zero")
    return float(_row_norms(h_j)[0]) / total


def sort_components(components: Sequence[Component]) -> list[Component]:
    """Descending impact; equal impacts keep the smaller original index first."""
    return sorted(components, key=lambda c: (-c.impact, c.index_original))


def split_temporal(h_j: np.ndarray, meta: Sequence[ColumnMeta]) -> dict[str, np.ndarray]:
    """Per-recording slices of a temporal component, in ordinal order."""
    h_j = np.asarray(h_j, dtype=np.float64)
    if h_j.shape != (len(meta),):
        raise MetaLengthMismatch(f"temporal vector of length {h_j.size} for {len(meta)} columns")
    columns: dict[str, list[tuple[int, int]]] = {}
    for j, m in enumerate(meta):
        columns.setdefault(m.recording_id, []).append((m.ordinal_in_recording, j))
    return {rid: h_j[[j for _, j in sorted(cols)]] for rid, cols in columns.items()}


def find_peak(series: IndicatorSeries | np.ndarray, boundary_margin: int = DEFAULT_BOUNDARY_MARGIN) -> tuple[int, bool]:
    values = series.values if isinstance(series, IndicatorSeries) else np.asarray(series)
    peak = int(np.argmax(values))  # first maximum
    n = len(values)
    return peak, peak < boundary_margin or peak >= n - boundary_margin


def normalize_indicator(raw: np.ndarray, boundary_margin: int = DEFAULT_BOUNDARY_MARGIN) -> IndicatorSeries:
    raw = np.asarray(raw, dtype=np.float64)
    raw_max = float(raw.max()) if raw.size else 0.0
    if raw_max > 0:
        values = raw / raw_max
        peak, at_boundary = find_peak(values, boundary_margin)
    else:
        values = np.zeros_like(raw)
        peak, at_boundary = 0, False
    return IndicatorSeries(values, raw_max, peak, at_boundary)


def spatial_image(w_j: np.ndarray, stencil: StencilSpec | tuple[int, int]) -> np.ndarray:
    """Render a spatial component, max entry mapped to 255; a zero vector is black."""
    w_j = np.asarray(w_j, dtype=np.float64)
    peak = w_j.max() if w_j.size else 0.0
    scaled = w_j / peak if peak > 0 else np.zeros_like(w_j)
    return devectorize(scaled, stencil)


@dataclass(frozen=True, eq=False)
class ComponentAnalysis:
    """Sorted components plus the column provenance needed to resolve peaks."""

    components: tuple[Component, ...]
    meta: tuple[ColumnMeta, ...]
    recording_order: tuple[str, ...]
    patch_size: tuple[int, int]
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN

    @property
    def k(self) -> int:
        return len(self.components)

    def representative_frame(self, component: Component, recording_id: str) -> tuple[str, int]:
        return representative_frame(self.meta, recording_id, component)

    def spatial_image(self, component: Component) -> np.ndarray:
        return spatial_image(component.spatial, self.patch_size)


def representative_frame(
    meta: Sequence[ColumnMeta],
    recording_id: str,
    component: Component,
    peak_ordinal: int | None = None,
) -> tuple[str, int]:
    """``(recording_id, anchor_frame_index)`` of the column behind the indicator peak."""
    series = component.indicators[recording_id]
    if not series.active:
        raise InactiveRecording(
            f"component {component.index_original} is inactive in recording {recording_id!r}"
        )
    ordinal = series.peak_ordinal if peak_ordinal is None else peak_ordinal
    for m in meta:
        if m.recording_id == recording_id and m.ordinal_in_recording == ordinal:
            return recording_id, m.anchor_frame_index
    raise LengthMismatch(f"recording {recording_id!r} has no column with ordinal {ordinal}")


def analyze(
    F: Factorization,
    meta: Sequence[ColumnMeta],
    patch_size: tuple[int, int],
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN,
) -> ComponentAnalysis:
    """Normalize, score, split and sort all components of ``F``."""
    if F.H.shape[1] != len(meta):
        raise MetaLengthMismatch(f"H has {F.H.shape[1]} columns, meta has {len(meta)} entries")
    F = normalize_factorization(F)
    shares = impacts(F.H)
    components = []
    for j in range(F.k):
        parts = split_temporal(F.H[j], meta)
        indicators = {rid: normalize_indicator(raw, boundary_margin) for rid, raw in parts.items()}
        components.append(Component(j, F.W[:, j].copy(), float(shares[j]), indicators))
    order = tuple(dict.fromkeys(m.recording_id for m in meta))
    return ComponentAnalysis(
        tuple(sort_components(components)), tuple(meta), order, tuple(patch_size), boundary_margin
    )
