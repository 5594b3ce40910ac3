"""Report rendering: spatial images, indicator plots, montages, summary.

Layout under ``out_dir``::

    report/component_01/{spatial.ppm, indicators.svg, montage.ppm}
    ...
    report/summary.json

Plots and montages are rendered from the summary document itself, so
re-rendering a parsed ``summary.json`` reproduces them byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .components import Component, ComponentAnalysis
from .exceptions import IoFailure
from .ingest import encode_ppm
from .patchgrid import atomic_write

SUMMARY_FORMAT = "gazenmf-summary"
SUMMARY_VERSION = 1

PALETTE = (
    "#1f78b4", "#e31a1c", "#33a02c", "#ff7f00", "#6a3d9a", "#b15928",
    "#a6cee3", "#fb9a99", "#b2df8a", "#fdbf6f", "#cab2d6", "#ffff99",
)

# indicator plot geometry, in SVG user units
PLOT_WIDTH = 360
CHART_LEFT = 64
CHART_WIDTH = 280
CHART_HEIGHT = 40
CHART_GAP = 8
HEADER_HEIGHT = 28
MONTAGE_BORDER = 4
MONTAGE_GAP = 2

FrameLookup = Callable[[str, int], np.ndarray]


def recording_color(position: int) -> str:
    return PALETTE[position % len(PALETTE)]


def _hex_rgb(color: str) -> tuple[int, int, int]:
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))


def _f(v: float) -> str:
    return f"{v:.3f}"


# --------------------------------------------------------------------------
# indicator plots
# --------------------------------------------------------------------------


def peak_bar_positions(peak_ordinal: int, at_boundary: bool, length: int, margin: int = 1) -> list[float]:
    """Bar positions in ordinal units: both flanks, or the inner flank near a boundary."""
    if not at_boundary:
        return [peak_ordinal - 0.5, peak_ordinal + 0.5]
    return [peak_ordinal + 0.5] if peak_ordinal < margin else [peak_ordinal - 0.5]


def indicator_svg(entry: Mapping[str, Any], recordings: Sequence[Mapping[str, Any]]) -> str:
    """SVG for one summary component entry; charts stacked in ``recordings`` order."""
    per_rec = {r["id"]: r for r in entry["recordings"]}
    height = HEADER_HEIGHT + len(recordings) * (CHART_HEIGHT + CHART_GAP)
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{PLOT_WIDTH}" '
        f'height="{height}" viewBox="0 0 {PLOT_WIDTH} {height}">',
        f'<rect x="0" y="0" width="{PLOT_WIDTH}" height="{height}" fill="#ffffff"/>',
        f'<text x="4" y="16" font-family="sans-serif" font-size="11">component {entry["rank"]}</text>',
        f'<rect class="impact" x="{CHART_LEFT}" y="8" width="{_f(entry["impact"] * CHART_WIDTH)}" '
        f'height="10" fill="#555555"/>',
    ]
    for pos, rec in enumerate(recordings):
        series = per_rec[rec["id"]]
        y0 = HEADER_HEIGHT + pos * (CHART_HEIGHT + CHART_GAP)
        color = rec["color"]
        values = series["values"]
        n = len(values)
        step = CHART_WIDTH / n

        def x_of(ordinal: float, step: float = step) -> float:
            return CHART_LEFT + (ordinal + 0.5) * step

        out.append(f'<g class="chart" id="chart-{escape(rec["id"])}">')
        out.append(
            f'<text x="4" y="{_f(y0 + CHART_HEIGHT / 2 + 4)}" font-family="sans-serif" '
            f'font-size="10">{escape(rec["id"])}</text>'
        )
        out.append(
            f'<rect class="frame" x="{CHART_LEFT}" y="{_f(y0)}" width="{CHART_WIDTH}" '
            f'height="{CHART_HEIGHT}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        points = " ".join(f"{_f(x_of(i))},{_f(y0 + (1.0 - v) * CHART_HEIGHT)}" for i, v in enumerate(values))
        out.append(f'<polyline class="indicator" points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if series["active"]:
            for o in peak_bar_positions(series["peak_ordinal"], series["peak_at_boundary"], n,
                                        entry.get("boundary_margin", 1)):
                x = _f(x_of(o))
                out.append(
                    f'<line class="peak-bar" x1="{x}" y1="{_f(y0)}" x2="{x}" '
                    f'y2="{_f(y0 + CHART_HEIGHT)}" stroke="#808080" stroke-width="1"/>'
                )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_indicator_plot(component: Component, analysis: ComponentAnalysis, rank: int = 1) -> str:
    recordings = [{"id": rid, "color": recording_color(i)} for i, rid in enumerate(analysis.recording_order)]
    return indicator_svg(_component_entry(component, analysis, rank, {}), recordings)


# --------------------------------------------------------------------------
# montages
# --------------------------------------------------------------------------


def render_montage(frames: Sequence[tuple[np.ndarray, str]]) -> np.ndarray:
    """Grid of bordered frames, left to right and top to bottom.

    ``frames`` holds ``(image, border colour)`` pairs in recording order. The
    grid has ``ceil(sqrt(n))`` columns.
    """
    b, g = MONTAGE_BORDER, MONTAGE_GAP
    if not frames:
        return np.zeros((2 * b, 2 * b, 3), dtype=np.uint8)
    n = len(frames)
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    cell_h = max(f.shape[0] for f, _ in frames) + 2 * b
    cell_w = max(f.shape[1] for f, _ in frames) + 2 * b
    canvas = np.zeros((rows * cell_h + (rows - 1) * g, cols * cell_w + (cols - 1) * g, 3), dtype=np.uint8)
    for i, (frame, color) in enumerate(frames):
        r, c = divmod(i, cols)
        y, x = r * (cell_h + g), c * (cell_w + g)
        fh, fw = frame.shape[:2]
        canvas[y : y + fh + 2 * b, x : x + fw + 2 * b] = _hex_rgb(color)
        canvas[y + b : y + b + fh, x + b : x + b + fw] = frame
    return canvas


def montage_grid(n_active: int) -> tuple[int, int]:
    """(columns, rows) of the montage grid."""
    if n_active == 0:
        return 0, 0
    cols = math.ceil(math.sqrt(n_active))
    return cols, math.ceil(n_active / cols)


def montage_from_entry(
    entry: Mapping[str, Any], recordings: Sequence[Mapping[str, Any]], frames: FrameLookup
) -> np.ndarray:
    per_rec = {r["id"]: r for r in entry["recordings"]}
    tiles = []
    for rec in recordings:
        s = per_rec[rec["id"]]
        if s["active"]:
            tiles.append((frames(rec["id"], s["anchor_frame"]), rec["color"]))
    return render_montage(tiles)


# --------------------------------------------------------------------------
# summary
# --------------------------------------------------------------------------


def _component_entry(component: Component, analysis: ComponentAnalysis, rank: int, files: Mapping[str, str]) -> dict:
    recs = []
    for rid in analysis.recording_order:
        s = component.indicators[rid]
        anchor = analysis.representative_frame(component, rid)[1] if s.active else None
        recs.append({
            "id": rid,
            "active": bool(s.active),
            "raw_max": float(s.raw_max),
            "peak_ordinal": int(s.peak_ordinal),
            "peak_at_boundary": bool(s.peak_at_boundary),
            "anchor_frame": anchor,
            "values": [float(v) for v in s.values],
        })
    return {
        "rank": rank,
        "index_original": component.index_original,
        "impact": float(component.impact),
        "boundary_margin": analysis.boundary_margin,
        "files": dict(files),
        "recordings": recs,
    }


def write_summary(
    analysis: ComponentAnalysis,
    params: Mapping[str, Any],
    files: Sequence[Mapping[str, str]] | None = None,
) -> dict:
    """Machine-readable summary with a fixed key order."""
    counts: dict[str, int] = {}
    for m in analysis.meta:
        counts[m.recording_id] = counts.get(m.recording_id, 0) + 1
    files = files or [{} for _ in analysis.components]
    return {
        "format": SUMMARY_FORMAT,
        "version": SUMMARY_VERSION,
        "parameters": dict(params),
        "patch_size": list(analysis.patch_size),
        "recordings": [
            {"id": rid, "color": recording_color(i), "fixations": counts[rid]}
            for i, rid in enumerate(analysis.recording_order)
        ],
        "components": [
            _component_entry(c, analysis, rank, f)
            for rank, (c, f) in enumerate(zip(analysis.components, files), start=1)
        ],
    }


def dump_summary(summary: Mapping[str, Any]) -> bytes:
    return (json.dumps(summary, indent=2, ensure_ascii=False, allow_nan=False) + "\n").encode("utf-8")


def render_from_summary(summary: Mapping[str, Any], frames: FrameLookup) -> dict[str, bytes]:
    """Indicator plots and montages for every component, keyed by report-relative path."""
    out = {}
    for entry in summary["components"]:
        out[entry["files"]["indicators"]] = indicator_svg(entry, summary["recordings"]).encode("utf-8")
        out[entry["files"]["montage"]] = encode_ppm(montage_from_entry(entry, summary["recordings"], frames))
    return out


@dataclass(frozen=True)
class ReportBundle:
    out_dir: Path
    summary_path: Path
    component_dirs: tuple[Path, ...]
    summary: dict


def render_report(
    analysis: ComponentAnalysis, params: Mapping[str, Any], frames: FrameLookup, out_dir: str | Path
) -> ReportBundle:
    """Write the full report under ``out_dir/report``."""
    out_dir = Path(out_dir)
    if not out_dir.parent.is_dir():
        raise IoFailure(out_dir.parent, "parent of output directory does not exist")
    root = out_dir / "report"
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(root, str(exc)) from exc
    files, dirs = [], []
    for rank in range(1, analysis.k + 1):
        name = f"component_{rank:02d}"
        (root / name).mkdir(exist_ok=True)
        dirs.append(root / name)
        files.append({
            "spatial": f"{name}/spatial.ppm",
            "indicators": f"{name}/indicators.svg",
            "montage": f"{name}/montage.ppm",
        })
    summary = write_summary(analysis, params, files)
    for comp, f in zip(analysis.components, files):
        atomic_write(root / f["spatial"], encode_ppm(analysis.spatial_image(comp)))
    for rel, payload in render_from_summary(summary, frames).items():
        atomic_write(root / rel, payload)
    summary_path = root / "summary.json"
    atomic_write(summary_path, dump_summary(summary))
    return ReportBundle(out_dir, summary_path, tuple(dirs), summary)
