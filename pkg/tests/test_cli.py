import json
import struct
import subprocess
import sys

import pytest

from gazenmf.cli import main
from gazenmf.components import analyze
from gazenmf.config import PipelineConfig, dump_config, from_mapping, load_config
from gazenmf.exceptions import ConfigError
from gazenmf.nmf import load_factorization
from gazenmf.patchgrid import load_patch_matrix
from gazenmf.synth import evaluate_recovery, load_ground_truth

FAST = ["--stencil", "31", "31", "--k", "4", "--max-iters", "150", "--replicates", "2", "--rel-tol", "1e-8", "-q"]


def _q(args):
    # -q is a top-level flag
    rest = [a for a in args if a != "-q"]
    return ["-q", *rest] if "-q" in args else rest


def run(*args):
    return main(_q(list(args)))


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "scene"
    assert main(["-q", "synth", "--out", str(out), "--recordings", "3", "--aois", "4"]) == 0
    return out


def _recs(scene):
    return [str(scene / f"rec{i:02d}") for i in (1, 2, 3)]


def test_synth_writes_scene(scene):
    assert (scene / "ground_truth.json").is_file()
    assert (scene / "rec01" / "gaze.csv").is_file()
    cfg = load_config(scene / "scene.toml")
    assert cfg.k == 4 and cfg.stencil == (31, 31)
    assert cfg.recordings == _recs(scene)


def test_run_recovers_scene(scene, tmp_path):
    out = tmp_path / "out"
    assert run("run", *_recs(scene), "--out", str(out), *FAST) == 0
    summary = json.loads((out / "report" / "summary.json").read_text())
    assert len(summary["components"]) == 4
    assert summary["parameters"]["stencil"] == [31, 31]
    pm = load_patch_matrix(out / "matrix.cache")
    F, _ = load_factorization(out / "factorization.cache")
    score = evaluate_recovery(analyze(F, pm.meta, pm.patch_size), load_ground_truth(scene / "ground_truth.json"))
    assert score.min_similarity >= 0.95 and score.peak_hit_fraction >= 0.9


def test_stages_match_run(scene, tmp_path):
    staged, whole = tmp_path / "staged", tmp_path / "whole"
    assert run("preprocess", *_recs(scene), "--out", str(staged), *FAST[:3], "--export-fixations") == 0
    assert run("factorize", str(staged / "matrix.cache"), "--out", str(staged), *FAST[3:]) == 0
    assert run("report", str(staged / "matrix.cache"), str(staged / "factorization.cache"), "--out", str(staged)) == 0
    assert run("run", *_recs(scene), "--out", str(whole), *FAST) == 0
    assert _tree(staged / "report") == _tree(whole / "report")
    lines = (staged / "fixations" / "rec01.csv").read_text().splitlines()
    assert lines[0] == "start_ms,end_ms,centroid_x,centroid_y,anchor_frame" and len(lines) == 13


def test_threads_do_not_change_outputs(scene, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("run", *_recs(scene), "--out", str(a), "--threads", "1", *FAST) == 0
    assert run("run", *_recs(scene), "--out", str(b), "--threads", "4", *FAST) == 0
    assert _tree(a / "report") == _tree(b / "report")


def test_dump_config_round_trip(scene, tmp_path):
    dumped = tmp_path / "cfg.toml"
    first, second = tmp_path / "first", tmp_path / "second"
    assert run("run", *_recs(scene), "--out", str(first), "--dump-config", str(dumped), *FAST) == 0
    cfg = load_config(dumped)
    assert cfg.k == 4 and cfg.out_dir == str(first)
    assert run("run", "--config", str(dumped), "--out", str(second), "-q") == 0
    assert _tree(first / "report") == _tree(second / "report")


def test_empty_recordings_is_config_error(tmp_path):
    assert run("preprocess", "--out", str(tmp_path / "o")) == 2


def test_even_stencil_is_config_error(scene, tmp_path):
    assert run("preprocess", *_recs(scene), "--stencil", "250", "250", "--out", str(tmp_path / "o")) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('recordings = ["x"]\nstencil_size = 5\n')
    assert run("run", "--config", str(cfg)) == 2


def test_zero_rank_is_numerical_error(scene, tmp_path):
    out = tmp_path / "o"
    assert run("preprocess", *_recs(scene), "--out", str(out), *FAST[:3], "-q") == 0
    assert run("factorize", str(out / "matrix.cache"), "--k", "0", "--out", str(out)) == 4
    assert run("factorize", str(out / "matrix.cache"), "--k", "500", "--out", str(out)) == 4


def test_report_detects_foreign_factorization(scene, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("preprocess", *_recs(scene), "--out", str(a), *FAST[:3], "-q") == 0
    assert run("preprocess", *_recs(scene)[:2], "--out", str(b), *FAST[:3], "-q") == 0
    assert run("factorize", str(b / "matrix.cache"), "--out", str(b), *FAST[3:]) == 0
    assert run("report", str(a / "matrix.cache"), str(b / "factorization.cache"), "--out", str(a)) == 3


def test_report_detects_same_shape_different_matrix(scene, tmp_path):
    b = tmp_path / "b"
    assert run("preprocess", *_recs(scene), "--out", str(b), *FAST[:3], "-q") == 0
    assert run("factorize", str(b / "matrix.cache"), "--out", str(b), *FAST[3:]) == 0
    blob = bytearray((b / "matrix.cache").read_bytes())
    blob[-8:] = struct.pack("<d", 0.123)  # change one entry, keeping the shape
    (b / "matrix.cache").write_bytes(bytes(blob))
    assert run("report", str(b / "matrix.cache"), str(b / "factorization.cache"), "--out", str(b)) == 3


def test_missing_out_parent_is_io_failure(scene, tmp_path, caplog):
    out = tmp_path / "no" / "such" / "dir"
    assert run("run", *_recs(scene), "--out", str(out), *FAST) == 3
    assert "IoFailure" in caplog.text and str(out.parent) in caplog.text


def test_missing_recording_is_data_error(tmp_path, caplog):
    assert run("preprocess", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")) == 3
    assert "nowhere" in caplog.text


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(dump_config(PipelineConfig(recordings=["r1"], k=6, seed=3)))
    from gazenmf.cli import build_parser, resolve_config

    args = build_parser().parse_args(["run", "--config", str(cfg), "--k", "9"])
    merged = resolve_config(args)
    assert (merged.k, merged.seed) == (9, 3)
    assert merged.recordings == [str(tmp_path / "r1")]


def test_every_flag_has_a_config_key():
    from gazenmf.cli import build_parser

    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices["run"]
    dests = {a.dest for a in sub._actions} - {"help", "config", "dump_config", "recordings"}
    assert dests <= set(PipelineConfig.__dataclass_fields__)


def test_config_validation():
    with pytest.raises(ConfigError):
        from_mapping({"k": 2.5})
    with pytest.raises(ConfigError):
        from_mapping({"recordings": "a"})
    with pytest.raises(ConfigError):
        PipelineConfig(recordings=["a"], algorithm="svd").validate()
    assert from_mapping({"stencil": 7}).stencil == (7, 7)


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gazenmf", "preprocess", "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert proc.stdout == "" and "ConfigError" in proc.stderr
