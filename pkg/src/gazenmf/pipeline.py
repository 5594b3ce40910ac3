"""Pipeline stages: preprocess, factorize, report."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

from .components import ComponentAnalysis, analyze
from .exceptions import CacheMismatch, DataError, GazeNMFError
from .fixation import FixationParams, detect_fixations, write_fixations_csv
from .ingest import Recording, load_recording
from .nmf import Factorization, FactorizationOptions, factorize
from .patchgrid import PatchMatrix, StencilSpec, build_patch_matrix
from .report import ReportBundle, render_report

log = logging.getLogger(__name__)


def preprocess(
    recordings: Sequence[Recording],
    stencil: StencilSpec,
    fixation_params: FixationParams,
    downscale: int = 1,
    threads: int = 1,
    fixations_dir: Path | None = None,
) -> PatchMatrix:
    fixations = []
    for rec in recordings:
        fix = detect_fixations(rec.samples, fixation_params)
        log.info("recording %s: %d frames -> %d fixations", rec.id, rec.frame_count, len(fix))
        if fixations_dir is not None:
            write_fixations_csv(fixations_dir / f"{rec.id}.csv", fix)
        fixations.append(fix)
    pm = build_patch_matrix(recordings, fixations, stencil, downscale, threads)
    params = {
        "min_fixation_ms": fixation_params.min_duration_ms,
        "dispersion_px": fixation_params.dispersion_px,
    }
    return PatchMatrix(pm.values, pm.meta, pm.stencil, pm.downscale, pm.sources, params)


def load_recordings(paths: Sequence[str | Path]) -> list[Recording]:
    recordings = []
    for p in paths:
        try:
            recordings.append(load_recording(p))
        except GazeNMFError as exc:
            exc.args = (f"{p}: {exc}",)
            raise
    ids = [r.id for r in recordings]
    if len(set(ids)) != len(ids):
        raise DataError(f"recording ids are not unique: {ids}")
    return recordings


def factorize_matrix(pm: PatchMatrix, opts: FactorizationOptions, threads: int | None = None) -> Factorization:
    F = factorize(pm.values, opts, threads=threads)
    tail = ", ".join(f"{v:.6g}" for v in F.objective_trace[-3:])
    log.info(
        "k=%d %s: seed %d, %d iterations, objective tail [%s]",
        F.k, F.algorithm.value, F.seed_used, F.iterations_run, tail,
    )
    return F


def check_consistent(pm: PatchMatrix, F: Factorization, matrix_sha256: str = "") -> None:
    if F.W.shape[0] != pm.rows or F.H.shape[1] != pm.cols:
        raise CacheMismatch(
            f"factorization is {F.W.shape[0]}x{F.H.shape[1]}, matrix is {pm.rows}x{pm.cols}"
        )
    if matrix_sha256 and matrix_sha256 != pm.digest():
        raise CacheMismatch("factorization was computed from a different matrix")


def report_params(pm: PatchMatrix, F: Factorization) -> dict:
    return {
        "stencil": [pm.stencil.width_px, pm.stencil.height_px],
        "downscale": pm.downscale,
        "min_fixation_ms": pm.params.get("min_fixation_ms"),
        "dispersion_px": pm.params.get("dispersion_px"),
        "k": F.k,
        "seed": F.seed_used,
        "algorithm": F.algorithm.value,
        "iterations": F.iterations_run,
        "final_objective": F.final_objective,
        "rows": pm.rows,
        "cols": pm.cols,
    }


def build_report(
    pm: PatchMatrix,
    F: Factorization,
    out_dir: str | Path,
    recordings: Sequence[Recording] | None = None,
    boundary_margin: int = 1,
) -> tuple[ComponentAnalysis, ReportBundle]:
    """Analyze ``F`` and write the report; frames come from ``recordings`` or the matrix sources."""
    check_consistent(pm, F)
    if recordings is None:
        recordings = [load_recording(path, rid) for rid, path in pm.sources.items()]
    by_id = {r.id: r for r in recordings}
    missing = set(pm.recording_ids) - set(by_id)
    if missing:
        raise CacheMismatch(f"no frames available for recordings {sorted(missing)}")
    analysis = analyze(F, pm.meta, pm.patch_size, boundary_margin)
    bundle = render_report(analysis, report_params(pm, F), lambda rid, i: by_id[rid].frame(i), out_dir)
    return analysis, bundle
