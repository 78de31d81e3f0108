"""Tabletop simulator with a hemisphere camera and a point gripper.

One interaction step is split in two: ``step_camera`` moves the camera and
selects a region of interest (ROI), ``step_gripper`` then moves the gripper
inside that ROI. Observations are voxel grids expressed in the frame aligned
with the current camera azimuth (or in the world frame when alignment is off).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    GripperPose,
    Viewpoint,
    ViewpointBins,
    align_points,
    align_pose,
    unalign_points,
    viewpoint_to_camera_pose,
    wrap_angle,
)
from .reward import RewardBundle, RoiStatus, compose_rewards, entropy_reduction_reward, interaction_reward, roi_entropy
from .scene import GRIPPER_OPEN, GRIPPER_START, TASKS, SceneSpec, TaskLayout, make_layout
from .voxel import (
    ObservedGrid,
    Visibility,
    VoxelGrid,
    crop_roi,
    depth_to_pointcloud,
    label_from_solids,
    render_aligned,
    slab_intervals,
    voxelize,
)

SUCCESS = "Success"
TIMEOUT = "Timeout"
EXECUTION_FAILURE = "ExecutionFailure"


@dataclass(frozen=True)
class EnvConfig:
    image_res: int = 32
    fov_deg: float = 60.0
    scene_dims: int = 16
    scene_res: float = 0.05
    scene_center: tuple = (0.0, 0.0, 0.25)
    roi_side: float = 0.2
    roi_dims: int = 16
    roi_lattice: int = 8
    translation_bins: int = 8
    yaw_bins: int = 8
    theta_centers_deg: tuple = (15.0, 35.0, 55.0, 75.0)
    n_phi: int = 12
    radius: float = 1.2
    initial_theta_deg: float = 55.0
    initial_phi_deg: float = 0.0
    max_steps: int = 10
    success_tol: float = 0.025
    contact_margin: float = 0.015

    @property
    def roi_res(self) -> float:
        return self.roi_side / self.roi_dims

    @property
    def bins(self) -> ViewpointBins:
        return ViewpointBins(self.theta_centers_deg, self.n_phi, self.radius)

    @property
    def n_viewpoints(self) -> int:
        return len(self.theta_centers_deg) * self.n_phi

    @property
    def n_roi(self) -> int:
        return self.roi_lattice**3

    @property
    def n_translation(self) -> int:
        return self.translation_bins**3

    def initial_viewpoint(self) -> Viewpoint:
        return Viewpoint.from_degrees(self.initial_theta_deg, self.initial_phi_deg, self.radius)


@dataclass(frozen=True)
class CameraAction:
    k_v: int
    k_f: int


@dataclass(frozen=True)
class GripperAction:
    k_t: int
    k_yaw: int
    closed: bool  # d: False = open (index 0), True = closed (index 1)

    @property
    def d(self) -> int:
        return int(self.closed)


@dataclass(frozen=True)
class Observation:
    kind: str  # "nbv" (scene grid) or "nbp" (ROI grid)
    grid: VoxelGrid
    viewpoint: Viewpoint  # world frame
    gripper: GripperPose  # world frame
    frame_phi: float  # azimuth of the frame the grid is expressed in
    labels: ObservedGrid | None = None

    @property
    def viewpoint_local(self) -> Viewpoint:
        return Viewpoint(self.viewpoint.theta, self.viewpoint.phi - self.frame_phi, self.viewpoint.r)

    @property
    def gripper_local(self) -> GripperPose:
        return align_pose(self.gripper, self.frame_phi)


@dataclass
class StepRecord:
    step: int
    k_v: int
    k_f: int
    viewpoint: tuple  # world (theta, phi)
    roi_center: tuple  # world
    e_t: float
    e_t_prime: float
    e_init: float
    status: str
    k_t: int = -1
    k_yaw: int = -1
    d: int = -1
    gripper: tuple = ()
    interaction: bool = False
    collided: bool = False
    rewards: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        d = dict(d)
        d["viewpoint"] = tuple(d["viewpoint"])
        d["roi_center"] = tuple(d["roi_center"])
        d["gripper"] = tuple(d.get("gripper", ()))
        return cls(**d)


@dataclass
class EpisodeOutcome:
    kind: str
    length: int
    steps: list


@dataclass
class StepResult:
    obs: Observation  # next NBV observation o_{t+1}
    nbp_obs: Observation  # ROI observation after the gripper move (same ROI)
    rewards: RewardBundle
    done: bool
    outcome: EpisodeOutcome | None


class ContractError(RuntimeError):
    """Raised when step_camera / step_gripper are called out of order."""


def roi_lattice_center(k_f: int, cfg: EnvConfig, scene: SceneSpec | None = None) -> np.ndarray:
    lo = np.array(scene.workspace_lo if scene else (-0.4, -0.4, 0.0))
    hi = np.array(scene.workspace_hi if scene else (0.4, 0.4, 0.5))
    n = cfg.roi_lattice
    idx = np.array(np.unravel_index(int(k_f), (n, n, n)))
    return lo + (idx + 0.5) * (hi - lo) / n


def nearest_roi_bin(p_local, cfg: EnvConfig, scene: SceneSpec | None = None) -> int:
    lo = np.array(scene.workspace_lo if scene else (-0.4, -0.4, 0.0))
    hi = np.array(scene.workspace_hi if scene else (0.4, 0.4, 0.5))
    n = cfg.roi_lattice
    idx = np.clip(np.floor((np.asarray(p_local) - lo) / (hi - lo) * n), 0, n - 1).astype(int)
    return int(np.ravel_multi_index(tuple(idx), (n, n, n)))


def translation_offset(k_t: int, cfg: EnvConfig) -> np.ndarray:
    """Position of a translation bin centre relative to the ROI centre."""
    n = cfg.translation_bins
    step = cfg.roi_side / n
    idx = np.array(np.unravel_index(int(k_t), (n, n, n)))
    return -cfg.roi_side / 2.0 + (idx + 0.5) * step


def translation_bin(offset, cfg: EnvConfig) -> int | None:
    """Bin containing an ROI-relative position, or None when outside the ROI."""
    n = cfg.translation_bins
    idx = np.floor((np.asarray(offset) + cfg.roi_side / 2.0) / (cfg.roi_side / n)).astype(int)
    if np.any(idx < 0) or np.any(idx >= n):
        return None
    return int(np.ravel_multi_index(tuple(idx), (n, n, n)))


class Renderer:
    """Renders aligned grids for a layout; caches point clouds per viewpoint."""

    def __init__(self, layout: TaskLayout, cfg: EnvConfig):
        self.layout = layout
        self.cfg = cfg
        self._clouds: dict = {}
        self._labels: dict = {}

    def cloud(self, v: Viewpoint, frame_phi: float):
        key = (v.theta, v.phi, frame_phi)
        if key not in self._clouds:
            cam_l = viewpoint_to_camera_pose(Viewpoint(v.theta, v.phi - frame_phi, v.r) if frame_phi else v)
            img = render_aligned(self.layout.scene, cam_l, frame_phi, self.cfg.image_res, math.radians(self.cfg.fov_deg))
            self._clouds[key] = depth_to_pointcloud(img, cam_l)
        return self._clouds[key]

    def scene_grid(self, v: Viewpoint, frame_phi: float) -> VoxelGrid:
        c = self.cfg
        return voxelize(self.cloud(v, frame_phi), c.scene_res, np.array(c.scene_center, dtype=float), c.scene_dims)

    def roi_grid(self, v: Viewpoint, frame_phi: float, f_world) -> VoxelGrid:
        f_l = align_points(np.asarray(f_world, dtype=float), frame_phi)
        return crop_roi(self.cloud(v, frame_phi), f_l, self.cfg.roi_side, self.cfg.roi_res)

    def labels(self, roi: VoxelGrid, v: Viewpoint, frame_phi: float) -> ObservedGrid:
        key = (tuple(np.asarray(roi.center).tolist()), roi.resolution, roi.dims, v.theta, v.phi, v.r, frame_phi)
        if key not in self._labels:
            cam = viewpoint_to_camera_pose(v, self.layout.scene.center)
            self._labels[key] = label_from_solids(roi, cam.position, self.layout.scene, frame_phi)
        return self._labels[key]

    def observe(self, kind: str, v: Viewpoint, g: GripperPose, frame_phi: float, f_world=None) -> Observation:
        if kind == "nbv":
            return Observation("nbv", self.scene_grid(v, frame_phi), v, g, frame_phi)
        roi = self.roi_grid(v, frame_phi, f_world)
        return Observation("nbp", roi, v, g, frame_phi, self.labels(roi, v, frame_phi))


def segment_collisions(p0, p1, scene: SceneSpec, grasp_normal=None) -> np.ndarray:
    """Per-solid flag: does the straight path p0 -> p1 pass through that solid?

    The target may be entered through its graspable face (outward normal
    ``grasp_normal``) without counting as a collision.
    """
    p0 = np.asarray(p0, dtype=float)
    seg = np.asarray(p1, dtype=float) - p0
    lo, hi, _ = scene.box_arrays()
    if not np.any(seg):
        inside = np.all((p0 > lo) & (p0 < hi), axis=1)
        hits = inside
    else:
        t_near, t_far = slab_intervals(p0[None], seg[None], lo, hi)
        t_near, t_far = t_near[0], t_far[0]
        hits = np.maximum(t_near, 0.0) < np.minimum(t_far, 1.0) - 1e-12
    ti = scene.target_index
    if hits[ti] and grasp_normal is not None:
        lo_t, hi_t = lo[ti], hi[ti]
        start_inside = np.all((p0 >= lo_t) & (p0 <= hi_t))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo_t - p0) / seg
            t2 = (hi_t - p0) / seg
        entry_axis = int(np.argmax(np.minimum(t1, t2)))
        normal = np.zeros(3)
        normal[entry_axis] = -np.sign(seg[entry_axis])
        if start_inside or np.allclose(normal, grasp_normal):
            hits = hits.copy()
            hits[ti] = False
    return hits


def point_box_distance(p, scene: SceneSpec) -> np.ndarray:
    lo, hi, _ = scene.box_arrays()
    p = np.asarray(p, dtype=float)
    gap = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return np.linalg.norm(gap, axis=1)


class ActiveVisionEnv:
    def __init__(self, config: EnvConfig | None = None, align: bool = True, aux: bool = True):
        self.cfg = config or EnvConfig()
        self.align = align
        self.aux = aux
        self.bins = self.cfg.bins
        self.layout: TaskLayout | None = None
        self._phase = "idle"

    # -- lifecycle ---------------------------------------------------------
    def reset(self, task: str, seed: int) -> Observation:
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
        return self.reset_to(make_layout(task, seed))

    def reset_to(self, layout: TaskLayout, viewpoint: Viewpoint | None = None,
                 gripper: GripperPose | None = None, steps: int = 0) -> Observation:
        """Start an episode on an explicit layout (optionally mid-episode state)."""
        self.layout = layout
        self.renderer = Renderer(layout, self.cfg)
        self.v0 = self.cfg.initial_viewpoint()
        self.viewpoint = viewpoint or self.v0
        self.gripper = gripper or GripperPose(GRIPPER_START, (0.0, 0.0, 0.0), GRIPPER_OPEN)
        self.frame_phi = self._frame(self.viewpoint)
        self.steps = steps
        self.records: list[StepRecord] = []
        self._pending: StepRecord | None = None
        self._phase = "camera"
        return self.observe_nbv()

    def _frame(self, v: Viewpoint) -> float:
        return v.phi if self.align else 0.0

    @property
    def scene(self) -> SceneSpec:
        return self.layout.scene

    def observe_nbv(self) -> Observation:
        return self.renderer.observe("nbv", self.viewpoint, self.gripper, self.frame_phi)

    def observe_nbp(self) -> Observation:
        return self.renderer.observe("nbp", self.viewpoint, self.gripper, self.frame_phi, self.roi_center)

    # -- action decoding -------------------------------------------------------
    def decode_camera(self, a: CameraAction) -> tuple[Viewpoint, np.ndarray]:
        if not (0 <= a.k_v < self.cfg.n_viewpoints and 0 <= a.k_f < self.cfg.n_roi):
            raise ValueError(f"camera action out of range: {a}")
        v_l = self.bins.undiscretize(a.k_v)
        f_l = roi_lattice_center(a.k_f, self.cfg, self.scene)
        v = Viewpoint(v_l.theta, v_l.phi + self.frame_phi, v_l.r)
        f = unalign_points(f_l, self.frame_phi)
        return v, f

    def decode_gripper(self, a: GripperAction) -> GripperPose:
        if not (0 <= a.k_t < self.cfg.n_translation and 0 <= a.k_yaw < self.cfg.yaw_bins):
            raise ValueError(f"gripper action out of range: {a}")
        f_l = align_points(self.roi_center, self.frame_phi)
        pos_l = f_l + translation_offset(a.k_t, self.cfg)
        yaw_l = a.k_yaw * 2.0 * math.pi / self.cfg.yaw_bins
        g_l = GripperPose(pos_l, (0.0, 0.0, yaw_l), 0.0 if a.closed else GRIPPER_OPEN)
        roll, pitch, yaw = g_l.orientation
        return GripperPose(unalign_points(pos_l, self.frame_phi),
                           (roll, pitch, float((yaw + self.frame_phi + math.pi) % (2 * math.pi) - math.pi)),
                           g_l.closure)

    def encode_camera(self, v: Viewpoint, f_world) -> CameraAction:
        """Camera action (in the current frame) that reaches viewpoint v and ROI f."""
        v_l = Viewpoint(v.theta, v.phi - self.frame_phi, v.r)
        f_l = align_points(np.asarray(f_world, dtype=float), self.frame_phi)
        return CameraAction(self.bins.discretize(v_l), nearest_roi_bin(f_l, self.cfg, self.scene))

    # -- dynamics ------------------------------------------------------------
    def roi_status(self, f_world, labels: ObservedGrid) -> RoiStatus:
        if not self.scene.in_workspace(f_world) or self.scene.inside_solid(f_world):
            return RoiStatus.UNREACHABLE
        if np.any(labels.labels == Visibility.OCCUPIED):
            return RoiStatus.REACHABLE_NON_EMPTY
        return RoiStatus.REACHABLE_EMPTY

    def step_camera(self, a: CameraAction) -> Observation:
        if self._phase != "camera":
            raise ContractError(f"step_camera called during phase {self._phase!r}")
        v_prev = self.viewpoint
        v_new, f_world = self.decode_camera(a)
        self.viewpoint = v_new
        self.frame_phi = self._frame(v_new)
        self.roi_center = f_world
        obs = self.observe_nbp()
        self._mid = obs
        roi = obs.grid
        r = self.renderer
        e_t = roi_entropy(r.labels(roi, v_prev, self.frame_phi))
        e_tp = roi_entropy(obs.labels)
        e_init = roi_entropy(r.labels(roi, self.v0, self.frame_phi))
        status = self.roi_status(f_world, obs.labels)
        self._pending = StepRecord(
            step=self.steps + 1, k_v=a.k_v, k_f=a.k_f, viewpoint=(v_new.theta, v_new.phi),
            roi_center=tuple(float(x) for x in f_world), e_t=e_t, e_t_prime=e_tp, e_init=e_init,
            status=status.value,
        )
        self._phase = "gripper"
        return obs

    def step_gripper(self, a: GripperAction) -> StepResult:
        if self._phase != "gripper":
            raise ContractError(f"step_gripper called during phase {self._phase!r}")
        rec = self._pending
        target = self.decode_gripper(a)
        start = np.asarray(self.gripper.position)
        goal_pos = np.asarray(target.position)
        scene = self.scene
        collided = not scene.in_workspace(goal_pos) or bool(
            np.any(segment_collisions(start, goal_pos, scene, self.layout.grasp_normal)))
        if not collided:
            self.gripper = target
        contact = collided or bool(np.min(point_box_distance(self.gripper.position, scene)) <= self.cfg.contact_margin)
        reached = np.linalg.norm(np.asarray(self.gripper.position) - np.asarray(self.layout.goal)) <= self.cfg.success_tol
        closure_ok = (not self.gripper.is_open) == self.layout.closure_required
        success = (not collided) and reached and closure_ok
        self.steps += 1

        r_task = 1.0 if success else 0.0
        if self.aux:
            r_i = interaction_reward(rec.status)
            r_e = entropy_reduction_reward(rec.e_t, rec.e_t_prime)
        else:
            r_i = r_e = 0.0
        bundle = compose_rewards(r_task, r_i, r_e)
        rec.k_t, rec.k_yaw, rec.d = a.k_t, a.k_yaw, a.d
        rec.gripper = tuple(float(x) for x in self.gripper.position)
        rec.interaction = contact
        rec.collided = collided
        rec.rewards = bundle.to_dict()
        self.records.append(rec)
        self._pending = None

        outcome = None
        if success:
            kind = SUCCESS
        elif collided:
            kind = EXECUTION_FAILURE
        elif self.steps >= self.cfg.max_steps:
            kind = TIMEOUT
        else:
            kind = None
        done = kind is not None
        if done:
            outcome = EpisodeOutcome(kind, self.steps, list(self.records))
            self._phase = "done"
        else:
            self._phase = "camera"
        nbp_obs = replace(self._mid, gripper=self.gripper)
        return StepResult(self.observe_nbv(), nbp_obs, bundle, done, outcome)

    def view_entropy(self, v: Viewpoint, f_world) -> float:
        """ROI entropy at f_world seen from v, with the ROI aligned to v."""
        frame = self._frame(v)
        roi = self.renderer.roi_grid(v, frame, f_world)
        return roi_entropy(self.renderer.labels(roi, v, frame))
