"""Demonstrations: keyframe discovery, transition construction and augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import (
    ActiveVisionEnv,
    CameraAction,
    GripperAction,
    Observation,
    Renderer,
    nearest_roi_bin,
    roi_lattice_center,
    translation_bin,
)
from .geometry import GripperPose, Viewpoint, align_points, angular_distance, unalign_points
from .reward import RewardBundle
from .scene import TaskLayout
from .voxel import Visibility

DEFAULT_EPS_G = 1e-3  # metres per frame
DEFAULT_EPS_V = math.radians(1.0)  # radians per frame
DEFAULT_RATE_HZ = 10.0
CAMERA_HOLD = 2
GRIPPER_FRAMES = 5


class DemoError(ValueError):
    """Malformed demonstration or planner failure."""


@dataclass(frozen=True)
class DemoFrame:
    index: int
    viewpoint: Viewpoint
    gripper: GripperPose

    def to_dict(self) -> dict:
        v, g = self.viewpoint, self.gripper
        return {"i": self.index, "theta": v.theta, "phi": v.phi, "r": v.r, "position": list(g.position),
                "orientation": list(g.orientation), "closure": g.closure}

    @classmethod
    def from_dict(cls, d: dict) -> "DemoFrame":
        return cls(int(d["i"]), Viewpoint(d["theta"], d["phi"], d["r"]),
                   GripperPose(d["position"], d["orientation"], d["closure"]))


@dataclass
class DemoTrajectory:
    frames: list
    task: str = ""
    seed: int = -1
    layout: TaskLayout | None = None
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        if [f.index for f in self.frames] != list(range(len(self.frames))):
            raise DemoError("frame indices must be consecutive from 0")
        if self.rate_hz <= 0:
            raise DemoError("sampling rate must be positive")

    def __len__(self) -> int:
        return len(self.frames)

    def to_records(self) -> list[dict]:
        head = {"type": "demo", "task": self.task, "seed": self.seed, "rate_hz": self.rate_hz,
                "n_frames": len(self.frames), "layout": self.layout.to_dict() if self.layout else None}
        return [head] + [{"type": "frame", **f.to_dict()} for f in self.frames]

    @classmethod
    def from_records(cls, records: list[dict]) -> "DemoTrajectory":
        head = next(r for r in records if r["type"] == "demo")
        frames = [DemoFrame.from_dict(r) for r in records if r["type"] == "frame"]
        layout = TaskLayout.from_dict(head["layout"]) if head.get("layout") else None
        return cls(frames, head["task"], head["seed"], layout, head["rate_hz"])


@dataclass(frozen=True)
class KeyframeSet:
    pairs: tuple  # ((k_c_1, k_g_1), ...)
    n_frames: int

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(c), int(g)) for c, g in self.pairs))
        chain = [k for pair in self.pairs for k in pair]
        if not chain:
            raise DemoError("keyframe set is empty")
        if chain[0] < 0 or chain[-1] > self.n_frames - 1 or any(a > b for a, b in zip(chain, chain[1:])):
            raise DemoError(f"keyframes violate the ordering chain: {self.pairs} (N={self.n_frames})")

    def __len__(self) -> int:
        return len(self.pairs)

    def segment(self, j: int) -> tuple[int, int, int]:
        """(k_g_{j-1}, k_c_j, k_g_j) for 0-based segment j, with k_g_{-1} = 0."""
        prev = self.pairs[j - 1][1] if j > 0 else 0
        return prev, self.pairs[j][0], self.pairs[j][1]


# -- keyframe discovery --------------------------------------------------------

def discover_keyframes(traj: DemoTrajectory, eps_g: float = DEFAULT_EPS_G,
                       eps_v: float = DEFAULT_EPS_V) -> KeyframeSet:
    """Find (viewpoint, gripper) keyframe pairs.

    A gripper keyframe is a frame where the closure state toggles or where the
    gripper comes to rest (moving into the frame, stationary out of it). The
    viewpoint keyframe of a segment is the first frame at or after the previous
    gripper keyframe from which the camera stays still for two frame steps.
    """
    frames = traj.frames
    n = len(frames)
    if n == 0:
        raise DemoError("empty trajectory")
    pos = np.array([f.gripper.position for f in frames])
    disp = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    ang = np.array([angular_distance(a.viewpoint, b.viewpoint) for a, b in zip(frames, frames[1:])])
    is_open = [f.gripper.is_open for f in frames]

    events = []
    for i in range(n):
        toggled = i > 0 and is_open[i] != is_open[i - 1]
        arrived = i > 0 and disp[i - 1] >= eps_g
        stopped = arrived and (i == n - 1 or disp[i] < eps_g)
        if toggled or stopped:
            events.append(i)
    if not events:
        still = [i for i in range(n - 1) if disp[i] < eps_g]
        if n == 1:
            still = [0]
        if not still:
            raise DemoError("trajectory has no gripper keyframe")
        events = [still[0]]

    def stable(i):
        return all(k >= n - 1 or ang[k] < eps_v for k in (i, i + 1))

    pairs = []
    prev = 0
    for g in events:
        k_c = next((i for i in range(prev, g + 1) if stable(i)), g)
        pairs.append((k_c, g))
        prev = g
    return KeyframeSet(tuple(pairs), n)


# -- transitions -----------------------------------------------------------------

@dataclass
class Transition:
    obs: Observation  # o_t (NBV)
    camera: CameraAction
    obs_mid: Observation  # o_t' (NBP)
    gripper: GripperAction
    next_obs: Observation  # o_{t+1} (NBV)
    next_obs_mid: Observation  # NBP view of o_{t+1}
    rewards: RewardBundle
    terminal: bool
    segment: int = 0
    indices: tuple = ()  # frame indices (start, camera, gripper)

    def fingerprint(self) -> bytes:
        parts = [self.camera.k_v, self.camera.k_f, self.gripper.k_t, self.gripper.k_yaw, self.gripper.d,
                 int(self.terminal), *self.rewards.to_dict().values()]
        out = repr(parts).encode()
        for o in (self.obs, self.obs_mid, self.next_obs, self.next_obs_mid):
            out += o.grid.to_bytes() + repr((o.viewpoint, o.gripper, o.frame_phi)).encode()
        return out


def _roi_for(env: ActiveVisionEnv, scene, goal, phi_s: float) -> tuple[int, np.ndarray]:
    """ROI lattice bin (in frame phi_s) nearest the goal and its world centre."""
    k_f = nearest_roi_bin(align_points(np.asarray(goal, dtype=float), phi_s), env.cfg, scene)
    f = unalign_points(roi_lattice_center(k_f, env.cfg, scene), phi_s)
    return k_f, f


def _gripper_action(env: ActiveVisionEnv, target: GripperPose, f_world, phi_c: float) -> GripperAction:
    offset = align_points(np.asarray(target.position), phi_c) - align_points(np.asarray(f_world), phi_c)
    k_t = translation_bin(offset, env.cfg)
    if k_t is None:
        raise DemoError("gripper keyframe lies outside the selected ROI")
    step = 2.0 * math.pi / env.cfg.yaw_bins
    k_yaw = int(np.rint((target.yaw - phi_c) / step)) % env.cfg.yaw_bins
    return GripperAction(k_t, k_yaw, not target.is_open)


def _actions(traj: DemoTrajectory, env: ActiveVisionEnv, s: int, c: int, c_ref: int, g: int):
    """Camera action from frame s towards keyframe c_ref, gripper action from frame c towards g."""
    fs, fc, fg = traj.frames[s], traj.frames[c], traj.frames[g]
    phi_s, phi_c = env._frame(fs.viewpoint), env._frame(fc.viewpoint)
    v_target = traj.frames[c_ref].viewpoint
    k_v = env.bins.discretize(Viewpoint(v_target.theta, v_target.phi - phi_s, v_target.r))
    k_f, f_world = _roi_for(env, traj.layout.scene, fg.gripper.position, phi_s)
    return CameraAction(k_v, k_f), _gripper_action(env, fg.gripper, f_world, phi_c), f_world


def _replay_segment(traj: DemoTrajectory, env: ActiveVisionEnv, kfs: KeyframeSet, j: int):
    """Rewards and termination of segment j, replayed in the env from its start frame."""
    s, c, g = kfs.segment(j)
    a_c, _, _ = _actions(traj, env, s, c, c, g)
    start = traj.frames[s]
    env.reset_to(traj.layout, start.viewpoint, start.gripper, steps=j)
    env.step_camera(a_c)
    a_g = _gripper_action(env, traj.frames[g].gripper, env.roi_center, env.frame_phi)
    res = env.step_gripper(a_g)
    return res.rewards, res.done


def _transition(traj: DemoTrajectory, env: ActiveVisionEnv, renderer: Renderer, kfs: KeyframeSet, j: int,
                s: int, c: int, replayed) -> Transition:
    _, k_c, g = kfs.segment(j)
    fs, fc, fg = traj.frames[s], traj.frames[c], traj.frames[g]
    phi = env._frame
    a_c, a_g, f_world = _actions(traj, env, s, c, k_c, g)
    rewards, terminal = replayed
    return Transition(
        obs=renderer.observe("nbv", fs.viewpoint, fs.gripper, phi(fs.viewpoint)),
        camera=a_c,
        obs_mid=renderer.observe("nbp", fc.viewpoint, fc.gripper, phi(fc.viewpoint), f_world),
        gripper=a_g,
        next_obs=renderer.observe("nbv", fg.viewpoint, fg.gripper, phi(fg.viewpoint)),
        next_obs_mid=renderer.observe("nbp", fg.viewpoint, fg.gripper, phi(fg.viewpoint), f_world),
        rewards=rewards,
        terminal=terminal,
        segment=j,
        indices=(s, c, g),
    )


def _require_layout(traj: DemoTrajectory):
    if traj.layout is None:
        raise DemoError("trajectory has no scene layout; cannot render or replay")


def build_raw_transitions(traj: DemoTrajectory, kfs: KeyframeSet,
                          env: ActiveVisionEnv | None = None) -> list[Transition]:
    """One transition per keyframe segment; rewards come from replaying the segment in the env."""
    _require_layout(traj)
    env = env or ActiveVisionEnv()
    renderer = Renderer(traj.layout, env.cfg)
    out = []
    for j in range(len(kfs)):
        s, c, _ = kfs.segment(j)
        out.append(_transition(traj, env, renderer, kfs, j, s, c, _replay_segment(traj, env, kfs, j)))
    return out


def sample_augmented_indices(kfs: KeyframeSet, rng: np.random.Generator, count: int) -> list[tuple[int, int, int]]:
    """(segment, start, camera) index triples, drawn uniformly from the closed intervals."""
    if count < 0:
        raise ValueError("count must be non-negative")
    out = []
    for j in range(len(kfs)):
        prev, k_c, k_g = kfs.segment(j)
        for _ in range(count):
            out.append((j, int(rng.integers(prev, k_c + 1)), int(rng.integers(k_c, k_g + 1))))
    return out


def augment_transitions(traj: DemoTrajectory, kfs: KeyframeSet, rng_seed: int, count: int,
                        env: ActiveVisionEnv | None = None) -> list[Transition]:
    """``count`` augmented transitions per segment with resampled start/camera frames.

    Action targets and rewards are those of the raw transition of the same segment.
    """
    samples = sample_augmented_indices(kfs, np.random.default_rng(rng_seed), count)
    if not samples:
        return []
    _require_layout(traj)
    env = env or ActiveVisionEnv()
    renderer = Renderer(traj.layout, env.cfg)
    replayed = {j: _replay_segment(traj, env, kfs, j) for j in sorted({j for j, _, _ in samples})}
    return [_transition(traj, env, renderer, kfs, j, s, c, replayed[j]) for j, s, c in samples]


# -- scripted demonstrator ---------------------------------------------------------

def _signed_steps(a: int, b: int, n: int) -> int:
    d = (b - a) % n
    return d - n if d > n // 2 else d


def _target_visible(env: ActiveVisionEnv, v: Viewpoint, f_world) -> bool:
    frame = env._frame(v)
    roi = env.renderer.roi_grid(v, frame, f_world)
    labels = env.renderer.labels(roi, v, frame)
    centres = unalign_points(roi.voxel_centers().reshape(-1, 3), frame)
    inside = env.layout.scene.target.contains(centres)
    return bool(np.any(inside & (labels.labels.reshape(-1) == Visibility.OCCUPIED)))


def scripted_demo(env: ActiveVisionEnv, task: str, seed: int) -> DemoTrajectory:
    """Privileged demonstrator: step the camera to the most informative bin, then reach the goal."""
    env.reset(task, seed)
    layout = env.layout
    bins = env.bins
    goal = np.array(layout.goal)
    k_f, f_world = _roi_for(env, layout.scene, goal, env.frame_phi)

    k0 = bins.discretize(env.viewpoint)
    t0, p0 = bins.theta_index(k0), bins.phi_index(k0)

    def cost(k):
        steps = max(abs(bins.theta_index(k) - t0), abs(_signed_steps(p0, bins.phi_index(k), bins.n_phi)))
        return env.view_entropy(bins.undiscretize(k), f_world), steps, k

    k_best = min(range(len(bins)), key=cost)
    v_best = bins.undiscretize(k_best)
    if not _target_visible(env, v_best, f_world):
        raise DemoError(f"target not viewable for {task} seed {seed}")

    # camera path, one bin step per frame in theta and phi
    path = []
    ti, pi = t0, p0
    tt, pt = bins.theta_index(k_best), bins.phi_index(k_best)
    while (ti, pi) != (tt, pt):
        ti += int(np.sign(tt - ti))
        d = _signed_steps(pi, pt, bins.n_phi)
        pi = (pi + int(np.sign(d))) % bins.n_phi
        path.append(bins.undiscretize(ti * bins.n_phi + pi))

    g0 = env.gripper
    frames = [DemoFrame(0, env.viewpoint, g0)]
    for v in path + [v_best] * CAMERA_HOLD:
        frames.append(DemoFrame(len(frames), v, g0))

    # gripper target: centre of the translation bin containing the goal, seen from v_best
    phi_c = env._frame(v_best)
    offset = align_points(goal, phi_c) - align_points(f_world, phi_c)
    k_t = translation_bin(offset, env.cfg)
    if k_t is None:
        raise DemoError("goal outside the selected ROI")
    closed = layout.closure_required
    a_g = GripperAction(k_t, 0, closed)

    env.step_camera(CameraAction(bins.discretize(Viewpoint(v_best.theta, v_best.phi - env.frame_phi)), k_f))
    target = env.decode_gripper(a_g)
    start = np.array(g0.position)
    end = np.array(target.position)
    for s in range(1, GRIPPER_FRAMES + 1):
        p = start + (end - start) * s / GRIPPER_FRAMES
        closure = target.closure if s == GRIPPER_FRAMES else g0.closure
        frames.append(DemoFrame(len(frames), v_best, GripperPose(p, target.orientation, closure)))
    frames.append(DemoFrame(len(frames), v_best, target))

    res = env.step_gripper(a_g)
    if not (res.done and res.outcome.kind == "Success"):
        kind = res.outcome.kind if res.outcome else "running"
        raise DemoError(f"scripted demo for {task} seed {seed} does not succeed on replay ({kind})")
    return DemoTrajectory(frames, task, seed, layout)


def load_transitions(trajs, env: ActiveVisionEnv, augment: bool, count: int, seed: int,
                     eps_g: float = DEFAULT_EPS_G, eps_v: float = DEFAULT_EPS_V) -> list[Transition]:
    """Raw (and optionally augmented) transitions for a demo set."""
    out = []
    for i, traj in enumerate(trajs):
        kfs = discover_keyframes(traj, eps_g, eps_v)
        out.extend(build_raw_transitions(traj, kfs, env))
        if augment and count > 0:
            out.extend(augment_transitions(traj, kfs, seed * 100003 + i, count, env))
    return out
