import dataclasses
import math

import numpy as np
import pytest

from avam.env import (
    EXECUTION_FAILURE,
    SUCCESS,
    TIMEOUT,
    ActiveVisionEnv,
    CameraAction,
    ContractError,
    EnvConfig,
    GripperAction,
    nearest_roi_bin,
    roi_lattice_center,
    segment_collisions,
    translation_bin,
)
from avam.geometry import Viewpoint, align_points
from avam.reward import RoiStatus
from avam.scene import TASKS, make_layout


def hold_action(env):
    """Camera action keeping the viewpoint, ROI at the gripper; gripper action staying put."""
    v_l = Viewpoint(env.viewpoint.theta, env.viewpoint.phi - env.frame_phi, env.viewpoint.r)
    g_l = align_points(np.asarray(env.gripper.position), env.frame_phi)
    k_f = nearest_roi_bin(g_l, env.cfg, env.scene)
    return CameraAction(env.bins.discretize(v_l), k_f)


def gripper_to(env, p_world, closed):
    off = align_points(np.asarray(p_world), env.frame_phi) - align_points(env.roi_center, env.frame_phi)
    k_t = translation_bin(off, env.cfg)
    assert k_t is not None
    return GripperAction(k_t, 0, closed)


def best_view(env):
    """Viewpoint bin (relative to the current frame) with the lowest goal-ROI entropy."""
    goal = np.asarray(env.layout.goal)
    scores = []
    for k in range(env.cfg.n_viewpoints):
        v, _ = env.decode_camera(CameraAction(k, 0))
        scores.append(env.view_entropy(v, goal))
    return int(np.argmin(scores))


class TestScene:
    @pytest.mark.parametrize("task", TASKS)
    def test_deterministic_and_valid(self, task):
        a, b = make_layout(task, 5), make_layout(task, 5)
        assert a == b
        assert a.scene.in_workspace(a.goal) and not a.scene.inside_solid(a.goal)

    def test_seeds_vary_target(self):
        azimuths = {make_layout("hidden-reach", s).opening_azimuth for s in range(30)}
        targets = {make_layout("hidden-reach", s).scene.target.lo for s in range(30)}
        assert len(azimuths) > 1 and len(targets) > 5

    def test_unknown_task(self):
        with pytest.raises(ValueError):
            ActiveVisionEnv().reset("stack-blocks", 0)

    def test_layout_round_trip(self):
        from avam.scene import TaskLayout
        lay = make_layout("hidden-press", 2)
        assert TaskLayout.from_dict(lay.to_dict()) == lay


class TestReset:
    def test_byte_identical(self):
        a = ActiveVisionEnv().reset("hidden-reach", 4)
        b = ActiveVisionEnv().reset("hidden-reach", 4)
        assert a.grid.to_bytes() == b.grid.to_bytes()

    @pytest.mark.parametrize("seed", range(10))
    def test_target_hidden_initially(self, seed):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", seed)
        assert env.view_entropy(env.v0, env.layout.goal) > 0.5

    def test_initial_viewpoint(self):
        env = ActiveVisionEnv()
        obs = env.reset("hidden-reach", 0)
        assert math.degrees(obs.viewpoint.theta) == pytest.approx(55) and obs.viewpoint.phi == 0.0


class TestCameraStep:
    def test_informative_view_reduces_entropy(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 1)
        k_f = nearest_roi_bin(align_points(np.asarray(env.layout.goal), env.frame_phi), env.cfg, env.scene)
        env.step_camera(CameraAction(best_view(env), k_f))
        rec = env._pending
        assert rec.status == RoiStatus.REACHABLE_NON_EMPTY.value
        assert rec.e_t_prime < rec.e_t

    def test_roi_outside_workspace_unreachable(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 0)
        # move to azimuth 30 deg so the aligned ROI lattice corners leave the workspace
        g_l = align_points(np.asarray(env.gripper.position), env.frame_phi)
        env.step_camera(CameraAction(1, nearest_roi_bin(g_l, env.cfg, env.scene)))
        env.step_gripper(gripper_to(env, env.gripper.position, False))
        outside = [k for k in range(env.cfg.n_roi)
                   if not env.scene.in_workspace(env.decode_camera(CameraAction(0, k))[1])]
        assert outside
        env.step_camera(CameraAction(0, outside[0]))
        res = env.step_gripper(GripperAction(0, 0, False))
        assert env.records[-1].status == RoiStatus.UNREACHABLE.value
        assert float(res.rewards.r_i) == -0.02

    def test_unchanged_view_and_roi_gives_zero_gain(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 2)
        env.step_camera(hold_action(env))
        res = env.step_gripper(gripper_to(env, env.gripper.position, False))
        assert res.outcome is None
        env.step_camera(hold_action(env))
        rec = env._pending
        assert rec.e_t == rec.e_t_prime
        res = env.step_gripper(gripper_to(env, env.gripper.position, False))
        assert float(res.rewards.r_e) == 0.0

    def test_contract(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 0)
        with pytest.raises(ContractError):
            env.step_gripper(GripperAction(0, 0, False))
        env.step_camera(CameraAction(0, 0))
        with pytest.raises(ContractError):
            env.step_camera(CameraAction(0, 0))

    def test_action_range(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 0)
        with pytest.raises(ValueError):
            env.step_camera(CameraAction(48, 0))


class TestGripperStep:
    @pytest.mark.parametrize("task", TASKS)
    def test_reaching_goal_succeeds(self, task):
        env = ActiveVisionEnv()
        env.reset(task, 6)
        goal = np.asarray(env.layout.goal)
        k_f = nearest_roi_bin(align_points(goal, env.frame_phi), env.cfg, env.scene)
        env.step_camera(CameraAction(best_view(env), k_f))
        res = env.step_gripper(gripper_to(env, goal, env.layout.closure_required))
        assert res.done and res.outcome.kind == SUCCESS
        assert float(res.rewards.r_task) == 1.0

    def test_wrong_closure_is_not_success(self):
        env = ActiveVisionEnv()
        env.reset("hidden-press", 6)
        goal = np.asarray(env.layout.goal)
        k_f = nearest_roi_bin(align_points(goal, env.frame_phi), env.cfg, env.scene)
        env.step_camera(CameraAction(best_view(env), k_f))
        res = env.step_gripper(gripper_to(env, goal, False))
        assert res.outcome is None and float(res.rewards.r_task) == 0.0

    def test_path_through_occluder_fails(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 0)
        roof = next(s for s in env.scene.solids if s.name == "cave-roof")
        c = (np.array(roof.lo) + np.array(roof.hi)) / 2
        k_f = nearest_roi_bin(align_points(c, env.frame_phi), env.cfg, env.scene)
        env.step_camera(CameraAction(0, k_f))
        res = env.step_gripper(gripper_to(env, c, False))
        assert res.done and res.outcome.kind == EXECUTION_FAILURE
        assert float(res.rewards.r_task) == 0.0 and env.records[-1].interaction

    def test_timeout_after_max_steps(self):
        env = ActiveVisionEnv()
        env.reset("hidden-reach", 0)
        for i in range(10):
            env.step_camera(hold_action(env))
            res = env.step_gripper(gripper_to(env, env.gripper.position, False))
            assert res.done == (i == 9)
        assert res.outcome.kind == TIMEOUT and res.outcome.length == 10

    def test_segment_collision_oracle(self):
        scene = make_layout("hidden-reach", 0).scene
        rng = np.random.default_rng(0)
        lo, hi, _ = scene.box_arrays()
        for _ in range(200):
            p0, p1 = rng.uniform(-0.4, 0.4, 3), rng.uniform(-0.4, 0.4, 3)
            p0[2], p1[2] = abs(p0[2]) + 0.01, abs(p1[2]) + 0.01
            ts = np.linspace(0, 1, 4001)[:, None]
            pts = p0 + ts * (p1 - p0)
            sampled = [bool(np.any(np.all((pts > l) & (pts < h), axis=1))) for l, h in zip(lo, hi)]
            exact = segment_collisions(p0, p1, scene)
            # dense sampling can only miss grazing hits
            assert all(e or not s for e, s in zip(exact, sampled))


class TestDeterminism:
    def test_same_actions_same_stream(self):
        def run():
            env = ActiveVisionEnv()
            env.reset("hidden-press", 9)
            rng = np.random.default_rng(0)
            out = []
            while True:
                env.step_camera(CameraAction(int(rng.integers(48)), int(rng.integers(512))))
                res = env.step_gripper(GripperAction(int(rng.integers(512)), int(rng.integers(8)), bool(rng.integers(2))))
                out.append(res.rewards.to_dict())
                if res.done:
                    return out, res.outcome.kind, [r.to_dict() for r in res.outcome.steps]
        assert run() == run()


class TestAlignment:
    @pytest.mark.parametrize("j", [1, 2, 3])
    def test_quarter_turn_invariance(self, j):
        lay = make_layout("hidden-reach", 3)
        rot = dataclasses.replace(lay, scene=lay.scene.quarter_turn(j))
        v = Viewpoint.from_degrees(35, 60)
        a, b = ActiveVisionEnv(), ActiveVisionEnv()
        oa = a.reset_to(lay, v)
        ob = b.reset_to(rot, Viewpoint(v.theta, v.phi + j * math.pi / 2))
        assert oa.grid.to_bytes() == ob.grid.to_bytes()
        ma, mb = a.step_camera(CameraAction(5, 300)), b.step_camera(CameraAction(5, 300))
        assert ma.grid.to_bytes() == mb.grid.to_bytes()
        assert ma.labels.labels.tobytes() == mb.labels.labels.tobytes()

    def test_align_off_is_world_frame(self):
        env = ActiveVisionEnv(align=False)
        env.reset("hidden-reach", 0)
        obs = env.step_camera(CameraAction(4, 0))
        assert obs.frame_phi == 0.0
        assert env.viewpoint.phi != 0.0


def test_roi_lattice_covers_workspace():
    cfg = EnvConfig()
    scene = make_layout("hidden-reach", 0).scene
    centers = np.array([roi_lattice_center(k, cfg, scene) for k in range(cfg.n_roi)])
    assert np.all(centers >= np.array(scene.workspace_lo)) and np.all(centers <= np.array(scene.workspace_hi))
    assert len({tuple(c) for c in centers}) == cfg.n_roi
