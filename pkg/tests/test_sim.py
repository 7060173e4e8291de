import math

import numpy as np
import pytest

from geomimic.exceptions import BehindCamera, InfeasibleGoal, PlantFault
from geomimic.geometry import ConstraintType, line_from_points, ll_error
from geomimic.sim import (
    Camera,
    HammerTemplate,
    ROLE_DISTRACTOR,
    ROLE_EDGE,
    ROLE_STRIKE,
    Scene,
    SerialArmPlant,
    TwistPlant,
    generate_category,
    generate_demo,
    make_scene,
    render_frame,
    rotation_between,
    se3_exp,
    se3_log,
    smoothstep,
    transform_points,
    _progress_violations,
)

TPL = HammerTemplate(distractors=6)


def gt_series(demo, ctype):
    key = demo.ground_truth[ctype]
    out = []
    for frame in demo.frames:
        coords = {f.id: f.coords for f in frame}
        if any(i not in coords for i in key):
            continue
        if ctype is ConstraintType.POINT_TO_POINT:
            a, b = coords[key[0]], coords[key[1]]
            out.append(math.hypot(b.u - a.u, b.v - a.v))
        else:
            l1 = line_from_points(coords[key[0]], coords[key[1]])
            l2 = line_from_points(coords[key[2]], coords[key[3]])
            out.append(abs(ll_error(l1, l2)[0]))
    return np.array(out)


class TestSE3:
    def test_exp_log_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            xi = rng.uniform(-0.5, 0.5, 6)
            np.testing.assert_allclose(se3_log(se3_exp(xi)), xi, atol=1e-9)

    def test_exp_zero_is_identity(self):
        np.testing.assert_allclose(se3_exp(np.zeros(6)), np.eye(4), atol=1e-15)

    def test_rotation_between(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            R = rotation_between(a, b)
            np.testing.assert_allclose(
                R @ (a / np.linalg.norm(a)), b / np.linalg.norm(b), atol=1e-9
            )
        np.testing.assert_allclose(rotation_between([1, 0, 0], [1, 0, 0]), np.eye(3))
        R = rotation_between([1, 0, 0], [-1, 0, 0])
        np.testing.assert_allclose(R @ [1, 0, 0], [-1, 0, 0], atol=1e-9)


class TestCamera:
    def test_optical_axis_hits_principal_point(self):
        cam = Camera()  # identity pose: world == camera frame
        uv = cam.project(np.array([[0.0, 0.0, 2.0]]))
        np.testing.assert_allclose(uv, [[cam.cx, cam.cy]])

    def test_behind_camera_raises(self):
        cam = Camera()
        with pytest.raises(BehindCamera):
            cam.project(np.array([[0.0, 0.0, -1.0]]))

    def test_look_at_sees_target_at_centre(self):
        cam = Camera.look_at(position=(0, -1, 0.5), target=(0, 0, 0.1))
        uv = cam.project(np.array([[0.0, 0.0, 0.1]]))
        np.testing.assert_allclose(uv, [[cam.cx, cam.cy]], atol=1e-9)


class TestGenerateCategory:
    def test_same_seed_identical(self):
        a = generate_category(3, TPL)
        b = generate_category(3, TPL)
        assert a.points.tobytes() == b.points.tobytes()
        assert a.descriptors.tobytes() == b.descriptors.tobytes()
        assert a.roles == b.roles

    def test_functional_descriptors_share_prototypes(self):
        models = [generate_category(s, TPL) for s in (1, 2, 3, 4)]
        for role in (ROLE_STRIKE, ROLE_EDGE):
            vecs = []
            for m in models:
                vecs += [m.descriptors[i] for i in m.indices_of(role)]
            for i in range(len(vecs)):
                for j in range(i + 1, len(vecs)):
                    cos = np.dot(vecs[i], vecs[j]) / (
                        np.linalg.norm(vecs[i]) * np.linalg.norm(vecs[j])
                    )
                    assert cos >= 0.8, f"{role} cosine {cos:.3f}"

    def test_zero_distractors(self):
        model = generate_category(5, HammerTemplate(distractors=0))
        assert all(r != ROLE_DISTRACTOR for r in model.roles)
        assert len(model.points) == 3

    def test_distractor_count_sampled_in_range(self):
        counts = {
            sum(r == ROLE_DISTRACTOR for r in generate_category(s, HammerTemplate()).roles)
            for s in range(12)
        }
        assert all(5 <= c <= 15 for c in counts)
        assert len(counts) > 1


class TestRenderFrame:
    def test_deterministic_per_key(self):
        scene = make_scene(1, TPL, scene_seed=2)
        pose = scene.goal_pose()
        f1 = render_frame(scene, pose, frame_key=4)
        f2 = render_frame(scene, pose, frame_key=4)
        assert [(f.id, f.coords) for f in f1] == [(f.id, f.coords) for f in f2]

    def test_dropout_one_empties_frame(self):
        scene = make_scene(1, TPL, scene_seed=2, dropout=1.0)
        assert render_frame(scene, scene.goal_pose(), 0, noise_scale=1.0) == []

    def test_parallel_objects_project_parallel_when_frontoparallel(self):
        # two vertical 3D segments in a fronto-parallel plane project with
        # zero parallelism error
        cam = Camera.look_at(position=(0, -1.0, 0.1), target=(0, 0, 0.1))
        pts = np.array(
            [[0.0, 0.0, 0.0], [0.0, 0.0, 0.2], [0.1, 0.0, 0.0], [0.1, 0.0, 0.2]]
        )
        uv = cam.project(pts)
        l1 = line_from_points(*[__import__("geomimic.geometry", fromlist=["PixelPoint"]).PixelPoint(*p) for p in uv[:2]])
        l2 = line_from_points(*[__import__("geomimic.geometry", fromlist=["PixelPoint"]).PixelPoint(*p) for p in uv[2:]])
        assert abs(ll_error(l1, l2)[0]) < 1e-12

    def test_goal_frame_satisfies_constraints(self):
        for cs in (1, 2, 3):
            scene = make_scene(cs, TPL, scene_seed=4, pixel_jitter=0.0, dropout=0.0)
            frame = render_frame(scene, scene.goal_pose(yaw=0.3), 0, noise_scale=0.0)
            coords = {f.id: f.coords for f in frame}
            truth = scene.goal_spec()
            s, t = truth.pp_ids
            assert math.hypot(coords[t].u - coords[s].u, coords[t].v - coords[s].v) < 1e-9
            (e1, e2), (n1, n2) = truth.ll_ids
            l1 = line_from_points(coords[e1], coords[e2])
            l2 = line_from_points(coords[n1], coords[n2])
            assert abs(ll_error(l1, l2)[0]) < 0.01

    def test_segments_tagged(self):
        scene = make_scene(1, TPL, scene_seed=2, dropout=0.0)
        frame = render_frame(scene, scene.goal_pose(), 0)
        segments = {f.segment for f in frame}
        assert segments == {"tool", "target"}


class TestGenerateDemo:
    def test_two_frames_only(self):
        scene = make_scene(1, TPL, scene_seed=3)
        demo = generate_demo(scene, n_frames=2, seed=0)
        assert len(demo.frames) == 2

    def test_final_frame_within_tolerance(self):
        for ds in range(3):
            scene = make_scene(2, TPL, scene_seed=3)
            demo = generate_demo(scene, n_frames=60, seed=ds)
            pp = gt_series(demo, ConstraintType.POINT_TO_POINT)
            ll = gt_series(demo, ConstraintType.LINE_TO_LINE)
            assert pp[-1] < 1.0
            assert ll[-1] < 0.01

    def test_default_length_series_strictly_decreasing_after_smoothing(self):
        scene = make_scene(3, TPL, scene_seed=9)
        for ds in range(3):
            demo = generate_demo(scene, n_frames=120, seed=ds)
            assert _progress_violations(demo.frames, demo.ground_truth) == 0
            for ctype in demo.ground_truth:
                series = gt_series(demo, ctype)
                smoothed = np.convolve(series, np.ones(5) / 5, mode="valid")
                assert (np.diff(smoothed) < 0).all()

    def test_deterministic(self):
        scene = make_scene(1, TPL, scene_seed=3)
        d1 = generate_demo(scene, n_frames=30, seed=5)
        d2 = generate_demo(scene, n_frames=30, seed=5)
        for fa, fb in zip(d1.frames, d2.frames):
            assert [(f.id, f.coords) for f in fa] == [(f.id, f.coords) for f in fb]

    def test_infeasible_goal_when_camera_looks_away(self):
        camera = Camera.look_at(position=(0, -0.85, 0.25), target=(0, -10.0, 0.25))
        scene = make_scene(1, TPL, scene_seed=3, camera=camera)
        with pytest.raises(InfeasibleGoal):
            generate_demo(scene, n_frames=10, seed=0)

    def test_ground_truth_keys_recorded(self):
        scene = make_scene(1, TPL, scene_seed=3)
        demo = generate_demo(scene, n_frames=10, seed=0)
        assert set(demo.ground_truth) == {
            ConstraintType.POINT_TO_POINT,
            ConstraintType.LINE_TO_LINE,
        }
        assert len(demo.ground_truth[ConstraintType.LINE_TO_LINE]) == 4


class TestTwistPlant:
    def scene(self, **kw):
        kw.setdefault("pixel_jitter", 0.0)
        kw.setdefault("dropout", 0.0)
        return make_scene(1, TPL, scene_seed=6, **kw)

    def test_act_zero_keeps_pose(self):
        scene = self.scene()
        plant = TwistPlant(scene, scene.goal_pose())
        before = plant.pose.copy()
        plant.act(np.zeros(6))
        np.testing.assert_array_equal(plant.pose, before)

    def test_pure_x_translation_shifts_horizontally(self):
        scene = self.scene()
        plant = TwistPlant(scene, scene.goal_pose(yaw=0.0))
        f0 = {f.id: f.coords for f in plant.observe()}
        plant.act(np.array([0.02, 0, 0, 0, 0, 0]))
        f1 = {f.id: f.coords for f in plant.observe()}
        for i in f0:
            if i < scene.n_tool:
                assert abs(f1[i].u - f0[i].u) > 1.0
                assert abs(f1[i].v - f0[i].v) < 1e-9
            else:
                assert f1[i] == f0[i]  # static target unaffected

    def test_probe_and_return_restores_observation(self):
        scene = make_scene(1, TPL, scene_seed=6)  # full noise
        plant = TwistPlant(scene, scene.goal_pose())
        before = [(f.id, f.coords) for f in plant.observe()]
        state = plant.snapshot()
        plant.act(np.array([0.01, -0.02, 0.005, 0.01, 0, 0.02]))
        plant.observe()
        plant.restore(state)
        after = [(f.id, f.coords) for f in plant.observe()]
        assert before == after

    def test_large_commands_clamped_with_flag(self):
        scene = self.scene()
        plant = TwistPlant(scene, scene.goal_pose())
        plant.act(np.array([10.0, 0, 0, 0, 0, 0]))
        assert plant.clamped
        assert abs(plant.pose[0, 3]) <= plant.workspace_halfwidth + 1e-9

    def test_bad_command_rejected(self):
        scene = self.scene()
        plant = TwistPlant(scene, scene.goal_pose())
        with pytest.raises(PlantFault):
            plant.act(np.array([np.nan, 0, 0, 0, 0, 0]))
        with pytest.raises(PlantFault):
            plant.act(np.zeros(3))


class TestSerialArmPlant:
    def test_interface_and_fk(self):
        scene = make_scene(1, TPL, scene_seed=6, pixel_jitter=0.0, dropout=0.0)
        plant = SerialArmPlant(scene)
        assert plant.n_joints == 4
        pose0 = plant.pose.copy()
        frame = plant.observe()
        assert len(frame) > 0
        plant.act(np.array([0.05, -0.02, 0.03, 0.01]))
        assert not np.allclose(plant.pose, pose0)
        state = plant.snapshot()
        plant.act(np.array([0.05, 0.0, 0.0, 0.0]))
        plant.restore(state)
        np.testing.assert_array_equal(plant.q, state[0])

    def test_base_yaw_swings_tool(self):
        scene = make_scene(1, TPL, scene_seed=6, pixel_jitter=0.0, dropout=0.0)
        plant = SerialArmPlant(scene)
        p0 = plant.pose[:3, 3].copy()
        plant.act(np.array([0.1, 0, 0, 0]))
        p1 = plant.pose[:3, 3]
        assert abs(p1[1] - p0[1]) > 1e-3  # swings in y
        assert abs(np.linalg.norm(p1 - plant.base) - np.linalg.norm(p0 - plant.base)) < 1e-9


class TestSmoothstep:
    def test_endpoints_and_midpoint(self):
        assert smoothstep(0.0) == 0.0
        assert smoothstep(1.0) == 1.0
        assert smoothstep(0.5) == 0.5

    def test_transform_points_roundtrip(self):
        rng = np.random.default_rng(0)
        T = se3_exp(rng.uniform(-0.3, 0.3, 6))
        pts = rng.normal(size=(7, 3))
        back = transform_points(np.linalg.inv(T), transform_points(T, pts))
        np.testing.assert_allclose(back, pts, atol=1e-12)
