import itertools
import math

import numpy as np
import pytest

from gazenmf.components import analyze
from gazenmf.exceptions import ConfigError, KMismatch
from gazenmf.fixation import FixationParams, detect_fixations
from gazenmf.ingest import load_recording
from gazenmf.nmf import Algorithm, Factorization, FactorizationOptions, factorize
from gazenmf.patchgrid import StencilSpec, build_patch_matrix, vectorize_patch
from gazenmf.synth import (
    SceneSpec,
    evaluate_recovery,
    gallery_spec,
    generate_scene,
    load_ground_truth,
    similarity_matrix,
)

FIX = FixationParams(25, 200)


def _matrix(recordings, stencil):
    return build_patch_matrix(recordings, [detect_fixations(r.samples, FIX) for r in recordings], stencil)


def _fact(W, H):
    return Factorization(W, H, (0.0,), 0.0, 1, 0, Algorithm.MU)


def test_templates_are_linearly_independent(small_scene):
    _, _, _, truth = small_scene
    T = np.stack([vectorize_patch(t) for t in truth.templates], axis=1)
    s = np.linalg.svd(T, compute_uv=False)
    assert s[-1] > 1e-6 * s[0]
    assert len(truth.templates) == 4


def test_every_template_has_a_private_entry(small_scene):
    # a pixel/channel lit only in template a pins that template in any nonnegative factorization
    _, _, _, truth = small_scene
    T = np.stack([vectorize_patch(t) for t in truth.templates], axis=1)
    lit = T > 0
    for a in range(T.shape[1]):
        private = lit[:, a] & ~np.delete(lit, a, axis=1).any(axis=1)
        assert private.any()


def test_zero_noise_matrix_is_exact_rank(small_scene):
    _, stencil, recordings, truth = small_scene
    pm = _matrix(recordings, stencil)
    s = np.linalg.svd(pm.values, compute_uv=False)
    assert s[3] > 1e-6 * s[0]
    assert s[4] <= 1e-10 * s[0]


def test_scene_is_deterministic():
    spec = gallery_spec(2, 3, noise_amplitude=0.05, seed=7)
    a, ta = generate_scene(spec)
    b, tb = generate_scene(spec)
    for ra, rb in zip(a, b):
        assert ra.samples == rb.samples
        for i in range(ra.frame_count):
            assert np.array_equal(ra.frame(i), rb.frame(i))
    assert ta.frame_aoi == tb.frame_aoi


def test_seed_changes_noise():
    a, _ = generate_scene(gallery_spec(1, 2, noise_amplitude=0.05, seed=1))
    b, _ = generate_scene(gallery_spec(1, 2, noise_amplitude=0.05, seed=2))
    assert not np.array_equal(a[0].frame(0), b[0].frame(0))


def test_gaze_jitter_bounded(small_scene):
    spec, _, recordings, truth = small_scene
    for rec in recordings:
        for s in rec.samples:
            if not s.valid:
                continue
            cx, cy = spec.aoi_center(truth.frame_aoi[rec.id][s.frame_index])
            assert math.hypot(s.x_px - cx, s.y_px - cy) <= spec.jitter_px <= 2


def test_dwell_intervals_and_fixations(small_scene):
    _, _, recordings, truth = small_scene
    for rec in recordings:
        spans = truth.dwell_intervals[rec.id]
        assert [a for a, _, _ in spans] == sorted(set(truth.frame_aoi[rec.id]), key=truth.frame_aoi[rec.id].index)
        fixes = detect_fixations(rec.samples, FIX)
        # blinks split each 30 frame dwell into three fixations
        assert len(fixes) == 3 * len(spans)
        for f in fixes:
            assert any(lo <= f.anchor_frame_index <= hi for _, lo, hi in spans)


def test_recording_orders():
    spec = gallery_spec(3, 4, seed=0)
    orders = [[a for a, _ in sched] for sched in spec.schedules]
    assert orders[0] == [0, 1, 2, 3] and orders[1] == [3, 2, 1, 0]
    assert sorted(orders[2]) == [0, 1, 2, 3]


def test_spec_validation():
    with pytest.raises(ConfigError):
        SceneSpec(aoi_count=2, schedules=(((0, 5),),), aoi_colors=((1, 2, 3), (1, 2, 3)))
    with pytest.raises(ConfigError):
        SceneSpec(aoi_count=2, schedules=(((2, 5),),))
    with pytest.raises(ConfigError):
        SceneSpec(aoi_count=2, schedules=(((0, 5),),), jitter_px=3)


def test_ground_truth_round_trip(scene_on_disk, small_scene):
    out, paths = scene_on_disk
    _, _, recordings, truth = small_scene
    back = load_ground_truth(out / "ground_truth.json")
    assert back.frame_aoi == truth.frame_aoi
    assert back.dwell_intervals == truth.dwell_intervals
    assert all(np.array_equal(a, b) for a, b in zip(back.templates, truth.templates))
    rec = load_recording(paths[0])
    assert rec.samples == recordings[0].samples
    assert np.array_equal(rec.frame(5), recordings[0].frame(5))


def test_recovery_with_planted_templates(small_scene):
    _, stencil, recordings, truth = small_scene
    pm = _matrix(recordings, stencil)
    T = np.stack([vectorize_patch(t) for t in truth.templates], axis=1)
    H = np.linalg.lstsq(T, pm.values, rcond=None)[0].clip(min=0)
    score = evaluate_recovery(analyze(_fact(T, H), pm.meta, pm.patch_size), truth)
    assert score.min_similarity == pytest.approx(1.0)
    assert score.peak_hit_fraction == 1.0
    assert sorted(a for a, _, _ in score.pairs) == [0, 1, 2, 3]


def test_recovery_from_factorization(small_scene):
    _, stencil, recordings, truth = small_scene
    pm = _matrix(recordings, stencil)
    F = factorize(pm.values, FactorizationOptions(k=4, max_iters=300, replicates=3, rel_tol=1e-10))
    score = evaluate_recovery(analyze(F, pm.meta, pm.patch_size), truth)
    assert score.min_similarity >= 0.99
    assert score.peak_hit_fraction >= 0.9


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(3)
    _, truth = generate_scene(gallery_spec(1, 4))
    T = np.stack([vectorize_patch(t) for t in truth.templates], axis=1)
    for _ in range(10):
        W = np.abs(T @ rng.random((4, 4)) + 0.3 * rng.random(T.shape[0])[:, None])
        analysis = analyze(_fact(W, np.ones((4, 1))), _meta_single(), truth.stencil.downscaled(1))
        C = similarity_matrix(analysis, truth)
        best = max(sum(C[p[a], a] for a in range(4)) for p in itertools.permutations(range(4)))
        score = evaluate_recovery(analysis, truth)
        assert sum(s for _, _, s in score.pairs) == pytest.approx(best, rel=1e-12)


def _meta_single():
    from gazenmf.patchgrid import ColumnMeta

    return (ColumnMeta("rec01", 0, 0, 0, 0.0, 0.0),)


def test_recovery_invariant_to_component_order(small_scene):
    _, stencil, recordings, truth = small_scene
    pm = _matrix(recordings, stencil)
    F = factorize(pm.values, FactorizationOptions(k=4, max_iters=100, replicates=1))
    perm = [2, 0, 3, 1]
    G = _fact(F.W[:, perm], F.H[perm])
    a = evaluate_recovery(analyze(F, pm.meta, pm.patch_size), truth)
    b = evaluate_recovery(analyze(G, pm.meta, pm.patch_size), truth)
    assert [s for _, _, s in a.pairs] == pytest.approx([s for _, _, s in b.pairs], rel=1e-12)
    assert [perm[j] for _, j, _ in b.pairs] == [j for _, j, _ in a.pairs]
    assert (a.peak_hits, a.peak_total) == (b.peak_hits, b.peak_total)


def test_k_mismatch(small_scene):
    _, stencil, recordings, truth = small_scene
    pm = _matrix(recordings, stencil)
    F = factorize(pm.values, FactorizationOptions(k=3, max_iters=20, replicates=1))
    with pytest.raises(KMismatch):
        evaluate_recovery(analyze(F, pm.meta, pm.patch_size), truth)


def test_templates_match_stencil():
    stencil = StencilSpec(21, 15)
    _, truth = generate_scene(gallery_spec(1, 3, stencil=stencil), stencil)
    assert all(t.shape == (15, 21, 3) for t in truth.templates)
