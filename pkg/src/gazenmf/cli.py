"""Command line entry point: ``gazenmf {preprocess,factorize,report,run,synth}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .exceptions import GazeNMFError, IoFailure
from .nmf import load_factorization, save_factorization
from .patchgrid import StencilSpec, load_patch_matrix, save_patch_matrix
from .pipeline import build_report, check_consistent, factorize_matrix, load_recordings, preprocess

log = logging.getLogger("gazenmf")

MATRIX_FILE = "matrix.cache"
FACTOR_FILE = "factorization.cache"


def _preprocess_flags(p):
    p.add_argument("--stencil", nargs=2, type=int, metavar=("W", "H"))
    p.add_argument("--min-fixation-ms", dest="min_fixation_ms", type=int)
    p.add_argument("--dispersion-px", dest="dispersion_px", type=float)
    p.add_argument("--downscale", type=int)


def _solver_flags(p):
    p.add_argument("--k", type=int)
    p.add_argument("--algorithm", choices=["mu", "hals"])
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--seed", type=int)


def _common_flags(p):
    p.add_argument("--config", type=Path, help="flat TOML file; flags override its values")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazenmf", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="detect fixations, crop patches, write the matrix cache")
    p.add_argument("recordings", nargs="*", help="recording directories")
    _common_flags(p)
    _preprocess_flags(p)
    p.add_argument("--export-fixations", action="store_true", help="also write fixations/<id>.csv")

    p = sub.add_parser("factorize", help="factorize a matrix cache")
    p.add_argument("matrix", type=Path)
    _common_flags(p)
    _solver_flags(p)

    p = sub.add_parser("report", help="render the report from matrix and factorization caches")
    p.add_argument("matrix", type=Path)
    p.add_argument("factorization", type=Path)
    _common_flags(p)
    p.add_argument("--boundary-margin", dest="boundary_margin", type=int)

    p = sub.add_parser("run", help="preprocess, factorize and report in one go")
    p.add_argument("recordings", nargs="*", help="recording directories")
    _common_flags(p)
    _preprocess_flags(p)
    _solver_flags(p)
    p.add_argument("--boundary-margin", dest="boundary_margin", type=int)
    p.add_argument("--dump-config", dest="dump_config", type=Path, help="write the effective config here")

    p = sub.add_parser("synth", help="generate a synthetic gallery scene with ground truth")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--recordings", type=int, default=3)
    p.add_argument("--aois", type=int, default=4)
    p.add_argument("--dwell-frames", dest="dwell_frames", type=int, default=30)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stencil", nargs=2, type=int, metavar=("W", "H"), default=(31, 31))
    p.add_argument("--k", type=int, help="k written to the scene's config (default: number of AOIs)")
    return parser


def resolve_config(args) -> cfgmod.PipelineConfig:
    cfg = cfgmod.load_config(args.config) if getattr(args, "config", None) else cfgmod.PipelineConfig()
    overrides = {
        key: getattr(args, key, None)
        for key in ("stencil", "min_fixation_ms", "dispersion_px", "downscale", "k", "algorithm",
                    "max_iters", "replicates", "rel_tol", "seed", "out_dir", "threads", "boundary_margin")
    }
    if getattr(args, "recordings", None):
        overrides["recordings"] = list(args.recordings)
    return cfg.updated(overrides)


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    if not out.parent.is_dir():
        raise IoFailure(out.parent, "parent of output directory does not exist")
    out.mkdir(exist_ok=True)
    return out


def cmd_preprocess(cfg, export_fixations=False) -> Path:
    cfg.validate()
    out = _out_dir(cfg)
    recordings = load_recordings(cfg.recordings)
    fix_dir = None
    if export_fixations:
        fix_dir = out / "fixations"
        fix_dir.mkdir(exist_ok=True)
    pm = preprocess(recordings, cfg.stencil_spec(), cfg.fixation_params(), cfg.downscale, cfg.threads, fix_dir)
    path = out / MATRIX_FILE
    save_patch_matrix(path, pm)
    log.info("wrote %s (%d x %d)", path, pm.rows, pm.cols)
    return path


def cmd_factorize(cfg, matrix_path: Path) -> Path:
    cfg.validate(need_recordings=False)
    pm = load_patch_matrix(matrix_path)
    F = factorize_matrix(pm, cfg.factorization_options(), threads=cfg.threads)
    out = _out_dir(cfg)
    path = out / FACTOR_FILE
    save_factorization(path, F, pm.digest())
    log.info("wrote %s", path)
    return path


def cmd_report(cfg, matrix_path: Path, factor_path: Path):
    pm = load_patch_matrix(matrix_path)
    F, digest = load_factorization(factor_path)
    check_consistent(pm, F, digest)
    out = _out_dir(cfg)
    _, bundle = build_report(pm, F, out, boundary_margin=cfg.boundary_margin)
    log.info("wrote report with %d components to %s", len(bundle.component_dirs), bundle.summary_path.parent)
    return bundle


def cmd_run(cfg, dump_config: Path | None = None):
    cfg.validate()
    if dump_config is not None:
        dump_config.write_text(cfgmod.dump_config(cfg))
    matrix_path = cmd_preprocess(cfg)
    factor_path = cmd_factorize(cfg, matrix_path)
    return cmd_report(cfg, matrix_path, factor_path)


def cmd_synth(args) -> Path:
    from .synth import gallery_spec, generate_scene, write_scene

    stencil = StencilSpec(*args.stencil)
    spec = gallery_spec(args.recordings, args.aois, stencil, args.dwell_frames, args.noise, args.seed)
    recordings, truth = generate_scene(spec, stencil)
    out = Path(args.out_dir)
    if not out.parent.is_dir():
        raise IoFailure(out.parent, "parent of output directory does not exist")
    paths = write_scene(out, recordings, truth)
    cfg = cfgmod.PipelineConfig(
        recordings=[p.name for p in paths], stencil=tuple(args.stencil), k=args.k or args.aois,
        seed=args.seed, out_dir=str(out.resolve() / "run"),
    )
    (out / "scene.toml").write_text(cfgmod.dump_config(cfg))
    log.info("wrote %d recordings and ground truth to %s", len(paths), out)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "synth":
            cmd_synth(args)
            return 0
        cfg = resolve_config(args)
        if args.command == "preprocess":
            cmd_preprocess(cfg, args.export_fixations)
        elif args.command == "factorize":
            cmd_factorize(cfg, args.matrix)
        elif args.command == "report":
            cmd_report(cfg, args.matrix, args.factorization)
        elif args.command == "run":
            cmd_run(cfg, args.dump_config)
    except GazeNMFError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
