import itertools

import numpy as np
import pytest

from farpose import annot, geom, hand, synth
from farpose.errors import DegenerateInput, TriangulationFailure


def _rig(rng, n=4):
    cams = []
    for k in range(n):
        ang = 2 * np.pi * k / n
        c = np.array([4 + 3.5 * np.cos(ang), 4 + 3.5 * np.sin(ang), 2.4])
        R = geom.look_at(c, [4.0, 4.0, 1.0])
        cams.append(geom.Camera(geom.PINHOLE, 900.0, 900.0, 540.0, 405.0, 1080, 810, R, -R @ c))
    return cams


def test_rotation_between(rng):
    for a, b in [(rng.normal(size=3), rng.normal(size=3)), ([1, 0, 0], [-1, 0, 0]), ([0, 0, 1], [0, 0, 1])]:
        R = annot.rotation_between(a, b)
        assert geom.is_rotation(R)
        np.testing.assert_allclose(R @ (np.array(a) / np.linalg.norm(a)), np.array(b) / np.linalg.norm(b),
                                   atol=1e-12)


def test_virtual_crop_centers_box(rng):
    chest = geom.Camera(geom.FISHEYE, 280.0, 280.0, 512.0, 512.0, 1024, 1024, fov_deg=175)
    crop = annot.virtual_crop((600, 300, 660, 380), chest, 256)
    # the chest ray through the box center lands at the crop center
    d = chest.pixel_ray([630.0, 340.0])
    uv, vis = crop.camera.project_camera_frame(crop.R_C @ d)
    assert vis
    np.testing.assert_allclose(uv, [128.0, 128.0], atol=1e-9)


def test_hand_orientation_to_world_inverts_chain(rng):
    O_w = geom.random_rotation(rng)
    R_ext, R_C = geom.random_rotation(rng), geom.random_rotation(rng)
    O_crop = R_C @ R_ext @ O_w
    np.testing.assert_allclose(annot.hand_orientation_to_world(O_crop, R_C, R_ext), O_w, atol=1e-12)


def test_align_trajectories_recovers_gauge(rng):
    T = 30
    O = geom.random_rotation(rng, T)
    C = rng.normal(size=(T, 3))
    world = geom.Trajectory.from_centers(np.arange(T), O, C, "marker")
    g = geom.SimilarityTransform(0.6, geom.random_rotation(rng), rng.normal(size=3))
    slam = geom.Trajectory.from_centers(np.arange(T), g.R @ O, g.apply(C), "slam")
    marker = geom.Trajectory(world.frames[::3], world.R[::3], world.t[::3], "marker")
    al = annot.align_trajectories(marker, slam)
    np.testing.assert_allclose(al.trajectory.centers, C, atol=1e-10)
    np.testing.assert_allclose(al.trajectory.R, world.R, atol=1e-10)
    assert al.residuals.max() < 1e-10


def test_align_needs_three_frames(rng):
    t = geom.Trajectory(np.arange(2), np.tile(np.eye(3), (2, 1, 1)), rng.normal(size=(2, 3)), "marker")
    with pytest.raises(DegenerateInput):
        annot.align_trajectories(t, t)


def test_reliable_triangulation_rejects_outlier(rng):
    cams = _rig(rng)
    p = np.array([4.2, 3.7, 1.1])
    px = np.array([geom.project(c, p)[0] for c in cams])
    px[2] += [100.0, 0.0]
    res = annot.reliable_triangulate(px, np.ones(4), cams)
    assert 2 not in res.inliers
    np.testing.assert_allclose(res.point, p, atol=1e-9)


def test_reliable_triangulation_failure(rng):
    cams = _rig(rng)
    px = np.array([[10.0, 10.0], [1000.0, 50.0], [500.0, 700.0], [20.0, 600.0]])
    with pytest.raises(TriangulationFailure):
        annot.reliable_triangulate(px, np.ones(4), cams)
    with pytest.raises(TriangulationFailure):
        annot.reliable_triangulate(px, np.array([1.0, 0, 0, 0]), cams, min_confidence=0.5)


def test_triangulation_result_matches_brute_force_oracle(rng):
    # oracle: re-triangulate the returned inlier set; the planted outlier must be gone
    cams = _rig(rng)
    p = np.array([3.6, 4.4, 1.3])
    for trial in range(20):
        px = np.array([geom.project(c, p)[0] for c in cams]) + rng.normal(0, 0.5, size=(4, 2))
        bad = trial % 4
        px[bad] += 150.0 * np.array([np.cos(trial), np.sin(trial)])
        res = annot.reliable_triangulate(px, np.ones(4), cams)
        assert bad not in res.inliers and len(res.inliers) == 3
        rays = [cams[i].world_ray(px[i]) for i in res.inliers]
        q, e = geom.triangulate([r[0] for r in rays], [r[1] for r in rays])
        np.testing.assert_allclose(res.point, q, atol=1e-12)
        assert res.rms == pytest.approx(e) and e < 0.075
        for i, j in itertools.combinations(res.inliers, 2):
            assert geom.triangulate([cams[i].center, cams[j].center],
                                    [cams[i].world_ray(px[i])[1], cams[j].world_ray(px[j])[1]])[1] < 0.05


def test_division_ratio_recovers_planted_ratio(noiseless_scene):
    r = noiseless_scene
    t, c = 6, 1
    side = hand.HANDEDNESS[c]
    shape = hand.HandShape(r.gt["beta"], side)
    local = hand.scale_to_physical(hand.forward_kinematics(shape, hand.HandPose(r.gt["theta"][t, c])),
                                   r.gt["hand_length"],
                                   reference=hand.forward_kinematics(shape, hand.HandPose()))
    elbow = r.gt["body3d"][t, annot.ELBOW_KP[c]]
    wrist = r.gt["wrist"][t, c]
    # planted ratio 0 means the hand sits exactly at the wrist keypoint
    ms = [(r.cameras[n], r.mask(t, n, c)) for n in range(r.n_cameras) if r.mask(t, n, c) is not None]
    assert annot.division_ratio(elbow, wrist, local, r.gt["O"][t, c], ms) == 0.0


def test_noiseless_scene_annotation_is_exact(noiseless_scene):
    r = noiseless_scene
    res = annot.annotate_scene(r)
    assert res.stats["hand_frames_annotated"] > 0
    for rec in res.records:
        c = hand.HANDEDNESS.index(rec["handedness"])
        O = np.reshape(rec["hand"]["O_world"], (3, 3))
        assert geom.geodesic_deg(O, r.gt["O"][rec["frame"], c]) < np.degrees(1e-6)
        np.testing.assert_allclose(rec["hand"]["wrist_world"], r.gt["wrist"][rec["frame"], c], atol=1e-6)


def test_annotation_json_and_stats(short_scene):
    res = annot.annotate_scene(short_scene)
    obj = res.to_json_obj()
    n = sum(len(f["hands"]) for f in obj["frames"])
    assert n == res.stats["hand_frames_annotated"]
    assert len(res.stats["marker_frames_skipped"]) == 2
    assert res.stats["pa_mpjpe_mm"] < res.stats["mpjpe_mm"] + 1e-9


def test_occluded_marker_frames_are_counted():
    r = synth.generate_scene(synth.SceneConfig(n_frames=12, seed=2))
    r.marker_visible[3:6, 0] = False
    res = annot.annotate_scene(r)
    assert res.stats["marker_frames_skipped"][0] >= 3
