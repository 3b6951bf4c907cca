"""End-to-end acceptance checks, one test per criterion.

Each test records its outcome in ``conftest.ACCEPTANCE`` so the terminal
summary prints a single PASS/FAIL line per criterion. The training checks are
slow (roughly 10 minutes for the full two-stage run and 20 for the ablations on
one CPU core).
"""

import copy
import json
import time

import numpy as np
import pytest

import conftest
from farpose import annot, cli, geom, hand, synth
from farpose.reachnet import (
    TrainConfig, autoregressive_rollout, build_model, evaluate, make_batch, mvu_fuse,
    prepare_scene, rollout_loss, step_predictions, train_two_stage,
)
from farpose.tensornet.gradcheck import check_gradients
from gradcases import layer_cases, op_cases
from test_reachnet import mvu_oracle, rotate_world, tiny_cfg

TRAIN_SEEDS = tuple(range(8))
HELD_OUT_SEEDS = (100, 101)
ABLATION_ITERS = 300
LOSS_TAIL = 100


def record(n, ok, detail):
    conftest.ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def train_scenes():
    return [synth.generate_scene(synth.SceneConfig(seed=s)) for s in TRAIN_SEEDS]


@pytest.fixture(scope="module")
def held_out():
    return [synth.generate_scene(synth.SceneConfig(seed=s)) for s in HELD_OUT_SEEDS]


@pytest.fixture(scope="module")
def trained(train_scenes):
    t0 = time.perf_counter()
    cfg = TrainConfig()
    result = train_two_stage(train_scenes, cfg)
    return cfg, result, time.perf_counter() - t0


# ---------------------------------------------------------------------------


def test_c01_rotation_round_trip():
    t0 = time.perf_counter()
    R = geom.random_rotation(np.random.default_rng(1), 100_000)
    err = np.abs(geom.matrix_from_rot6d(geom.rot6d_from_matrix(R)) - R).max()
    dt = time.perf_counter() - t0
    record(1, err < 1e-9 and dt < 10, f"max error {err:.2e}, {dt:.2f} s")


def test_c02_procrustes_recovery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst, rms = 0.0, []
    sigma = 0.01
    for _ in range(1000):
        src = rng.uniform(-3, 3, size=(50, 3))
        true = geom.SimilarityTransform(float(rng.uniform(0.2, 5)), geom.random_rotation(rng),
                                        rng.normal(size=3))
        dst = true.apply(src)
        est = geom.umeyama(src, dst)
        worst = max(worst, abs(est.s - true.s), np.abs(est.R - true.R).max(), np.abs(est.t - true.t).max())
        noisy = dst + rng.normal(0, sigma, dst.shape)
        res = noisy - geom.umeyama(src, noisy).apply(src)
        rms.append(np.sqrt(np.mean(res**2)))  # per-coordinate RMS
    ratio = float(np.mean(rms)) / sigma
    dt = time.perf_counter() - t0
    record(2, worst < 1e-9 and abs(ratio - 1) < 0.3 and dt < 30,
           f"noiseless max error {worst:.2e}, noisy RMS/sigma {ratio:.3f}, {dt:.1f} s")


def test_c03_mvu_correctness():
    rng = np.random.default_rng(3)
    worst = 0.0
    perm_exact = True
    fixed_worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        O, RF = geom.random_rotation(rng, n), geom.random_rotation(rng, n)
        c = rng.uniform(0.01, 1, n)
        out = mvu_fuse(O, c, RF)
        worst = max(worst, np.abs(out - mvu_oracle(O, c, RF)).max())
        p = rng.permutation(n)
        perm_exact &= np.array_equal(mvu_fuse(O[p], c[p], RF[p]), out)
        W = geom.random_rotation(rng)
        fixed_worst = max(fixed_worst, np.abs(mvu_fuse(RF @ W, c, RF) - W).max())
    fixed_err = fixed_worst < 1e-14
    record(3, worst < 1e-12 and perm_exact and fixed_err,
           f"oracle max diff {worst:.2e}, permutation bitwise equal {perm_exact}, "
           f"agreement fixed point within {fixed_worst:.1e}")


def test_c04_gauge_invariance(trained, held_out):
    cfg, result, _ = trained
    model = result.model
    rec = copy.deepcopy(held_out[0])
    frames = np.arange(0, 32, cfg.temporal_stride)
    views = np.array([0, 1, 2, 3])

    def run(r):
        b = make_batch([prepare_scene(r, cfg.features)], [(0, frames, views)])
        outs = autoregressive_rollout(model, b)
        return outs, [step_predictions(o, b.cam_R)[0] for o in outs]

    ref, ref_pred = run(rec)
    rng = np.random.default_rng(4)
    out_err = rot_err = 0.0
    for _ in range(20):
        Q = geom.random_rotation(rng)
        outs, preds = run(rotate_world(rec, Q))
        for o, r in zip(outs, ref):
            for name in ("rot6d", "trans", "logit", "beta", "theta"):
                out_err = max(out_err, np.abs(getattr(o, name).data - getattr(r, name).data).max())
        for pp, rp in zip(preds, ref_pred):
            for c in range(2):
                rot_err = max(rot_err, np.abs(pp[c].O_world - Q @ rp[c].O_world).max())
    record(4, out_err < 1e-9 and rot_err < 1e-9,
           f"per-view output change {out_err:.1e}, fused orientation vs applied rotation {rot_err:.1e}")


def test_c05_gradient_checks(short_scene):
    t0 = time.perf_counter()
    op_err = max(check_gradients(fn, [np.array(x) for x in inputs])
                 for _, fn, inputs in op_cases(5) + layer_cases(5))
    cfg = tiny_cfg()
    model = build_model(cfg, seed=5)
    arrays = prepare_scene(short_scene, cfg.features)
    b = make_batch([arrays], [(0, np.array([0, 2]), np.array([0, 1]))])
    model_err = check_gradients(lambda *ps: rollout_loss(autoregressive_rollout(model, b), b, cfg.weights)[0],
                                model.parameters(), floor=1e-6)
    dt = time.perf_counter() - t0
    record(5, op_err < 1e-4 and model_err < 1e-3 and dt < 300,
           f"ops {op_err:.1e}, full reduced model ({model.num_parameters()} params) {model_err:.1e}, {dt:.0f} s")


def test_c06_annotation_identity():
    clean = synth.generate_scene(synth.SceneConfig(seed=0).noiseless())
    res = annot.annotate_scene(clean)
    pos = ang = 0.0
    for r in res.records:
        c = hand.HANDEDNESS.index(r["handedness"])
        pos = max(pos, np.linalg.norm(np.array(r["hand"]["wrist_world"]) - clean.gt["wrist"][r["frame"], c]))
        ang = max(ang, np.radians(geom.geodesic_deg(np.reshape(r["hand"]["O_world"], (3, 3)),
                                                     clean.gt["O"][r["frame"], c])))
    noisy = annot.annotate_scene(synth.generate_scene(synth.SceneConfig(seed=0)))
    pa = noisy.stats["pa_mpjpe_mm"]
    n_clean = res.stats["hand_frames_annotated"]
    record(6, n_clean > 0 and pos < 1e-6 and ang < 1e-6 and pa < 15.0,
           f"noiseless: {n_clean} hand-frames, max {pos:.1e} m / {ang:.1e} rad; "
           f"default noise PA-MPJPE {pa:.2f} mm")


def test_c07_reliable_triangulation():
    cams = synth.make_rig(synth.SceneConfig())
    rng = np.random.default_rng(7)
    excluded, err_out, err_clean = 0, [], []
    trials = 0
    while trials < 1000:
        p = np.array([rng.uniform(1.5, 6.5), rng.uniform(1.5, 6.5), rng.uniform(0.8, 1.6)])
        proj = [geom.project(c, p) for c in cams]
        if not all(v for _, v in proj):
            continue
        trials += 1
        px = np.array([uv for uv, _ in proj]) + rng.normal(0, 2.0, (4, 2))
        bad = int(rng.integers(4))
        phi = rng.uniform(0, 2 * np.pi)
        px_bad = px.copy()
        px_bad[bad] += 100.0 * np.array([np.cos(phi), np.sin(phi)])
        res = annot.reliable_triangulate(px_bad, np.ones(4), cams)
        ref = annot.reliable_triangulate(px, np.ones(4), cams)
        excluded += bad not in res.inliers
        err_out.append(np.linalg.norm(res.point - p))
        err_clean.append(np.linalg.norm(ref.point - p))
    rate = excluded / trials
    ratio = float(np.mean(err_out) / np.mean(err_clean))
    record(7, rate >= 0.99 and ratio <= 2.0,
           f"outlier excluded in {rate:.1%} of {trials}, mean wrist error ratio {ratio:.2f}")


def test_c08_training(trained, held_out):
    cfg, result, dt = trained
    initial = result.initial_loss
    final = float(np.mean([r["total"] for r in result.log[-LOSS_TAIL:]]))
    untrained = build_model(cfg)
    untrained.load_state_dict(result.initial_state)
    pa0 = evaluate(untrained, held_out, cfg)["pa_mpjpe_mm"]["mean"]
    pa1 = evaluate(result.model, held_out, cfg)["pa_mpjpe_mm"]["mean"]
    reduction = 1 - final / initial
    gain = 1 - pa1 / pa0
    record(8, reduction >= 0.5 and gain >= 0.2 and dt < 3600,
           f"loss {initial:.2f} -> {final:.2f} (mean of last {LOSS_TAIL}) = {reduction:.0%} lower; "
           f"held-out PA-MPJPE {pa0:.2f} -> {pa1:.2f} mm = {gain:.0%} lower; {dt / 60:.1f} min")


def test_c09_ablation_directionality(train_scenes, held_out, tmp_path_factory):
    variants = ("full", "no_multiview", "no_body", "no_autoregressive", "no_ray_embedding")
    table = {v: [] for v in variants}
    for seed in (0, 1, 2):
        for v in variants:
            flags = {} if v == "full" else {v: True}
            cfg = TrainConfig(seed=seed, stage_iters=(ABLATION_ITERS, ABLATION_ITERS), val_every=0, **flags)
            model = train_two_stage(train_scenes, cfg).model
            table[v].append(evaluate(model, held_out, cfg)["pa_mpjpe_mm"]["mean"])
    means = {v: float(np.mean(x)) for v, x in table.items()}
    out = tmp_path_factory.mktemp("ablation") / "ablation.json"
    out.write_text(json.dumps({"pa_mpjpe_mm": table, "mean": means}, indent=2))
    worse = {v: means[v] >= means["full"] for v in variants[1:]}
    detail = ", ".join(f"{v} {means[v]:.2f}" for v in variants) + f" mm (report {out})"
    record(9, all(worse.values()), detail)


def test_c10_distance_geometry():
    cfg = synth.SceneConfig()
    cam = synth.make_rig(cfg)[0]
    axis, right = cam.R.T @ np.array([0, 0, 1.0]), cam.R.T @ np.array([1.0, 0, 0])
    w = {}
    for d in (4.0, 8.0):
        a, _ = geom.project(cam, cam.center + d * axis - right * synth.HAND_SEGMENT / 2)
        b, _ = geom.project(cam, cam.center + d * axis + right * synth.HAND_SEGMENT / 2)
        w[d] = float(np.linalg.norm(b - a))
    ratio = w[8.0] / w[4.0]
    record(10, abs(ratio - 0.5) <= 0.5e-3, f"{w[4.0]:.3f} px at 4 m, {w[8.0]:.3f} px at 8 m, ratio {ratio:.6f}")


def test_c11_determinism(tmp_path):
    scene_cfg = tmp_path / "scene.json"
    scene_cfg.write_text(json.dumps({"n_frames": 40}))
    train_cfg = tmp_path / "train.json"
    train_cfg.write_text(json.dumps({"stage_iters": [5, 5], "val_every": 0}))
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert cli.main(["simulate", "--config", str(scene_cfg), "--out", str(d / "scenes" / "s0"),
                         "--seed", "11"]) == 0
        assert cli.main(["train", "--scenes", str(d / "scenes"), "--config", str(train_cfg),
                         "--out", str(d / "train"), "--seed", "3"]) == 0
        assert cli.main(["eval", "--scene", str(d / "scenes" / "s0"), "--checkpoint",
                         str(d / "train" / "checkpoint.fpk"), "--out", str(d / "eval")]) == 0
        outputs.append({f: (d / f).read_bytes() for f in (
            "scenes/s0/scene.json", "scenes/s0/summary.json", "train/checkpoint.fpk", "train/metrics.csv",
            "train/loss_curve.svg", "eval/report.csv", "eval/summary.json", "eval/trajectory.csv",
            "eval/pa_mpjpe.svg", "eval/trajectory.svg")})
    same = [f for f in outputs[0] if outputs[0][f] == outputs[1][f]]
    record(11, len(same) == len(outputs[0]), f"{len(same)}/{len(outputs[0])} output files byte-identical")
