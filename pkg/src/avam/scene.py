"""Box-world scene description and the randomised task layouts.

Every solid is an axis-aligned box in the world frame. The hemisphere centre
sits at the world origin on the table top, which keeps quarter-turn scene
rotations exact in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import _quarter

ROLES = ("target", "occluder", "clutter")
TASKS = ("hidden-reach", "hidden-press")

WORKSPACE_LO = (-0.4, -0.4, 0.0)
WORKSPACE_HI = (0.4, 0.4, 0.5)
GRIPPER_START = (0.0, 0.0, 0.2)
GRIPPER_OPEN = 0.08

# Cave dimensions (metres): interior width/depth/height and wall thickness.
CAVE_WIDTH = 0.12
CAVE_DEPTH = 0.12
CAVE_HEIGHT = 0.12
WALL = 0.02

# Opening directions that keep the target hidden from the initial camera (+x side).
OPENINGS = ((-1.0, 0.0), (0.0, 1.0), (0.0, -1.0))
# Goal distance from the hemisphere axis and lateral cave offsets. The values put
# every goal at a gripper-bin centre of the nearest ROI lattice cell, well away
# from lattice and bin boundaries, so demonstrated action labels are unambiguous.
GOAL_DISTANCES = {"hidden-reach": (0.1375, 0.1625, 0.1875), "hidden-press": (0.2375, 0.2625, 0.2875)}
LATERAL_OFFSETS = (-0.0875, -0.0625, -0.0375, 0.0375, 0.0625, 0.0875)
REACH_GOAL_DEPTH = 0.02  # goal distance inside the cave mouth
PRESS_GOAL_DEPTH = 0.09


@dataclass(frozen=True)
class Solid:
    lo: tuple
    hi: tuple
    feature: tuple
    role: str = "clutter"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "feature", tuple(float(v) for v in self.feature))
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate solid {self.name!r}: lo={self.lo} hi={self.hi}")
        if self.role not in ROLES:
            raise ValueError(f"unknown solid role {self.role!r}")

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lo) & (p < self.hi), axis=-1)

    def quarter_turn(self, j: int) -> "Solid":
        corners = np.array([self.lo, self.hi])
        x, y = _quarter(corners[:, 0], corners[:, 1], j % 4)
        lo = (min(x), min(y), self.lo[2])
        hi = (max(x), max(y), self.hi[2])
        return Solid(lo, hi, self.feature, self.role, self.name)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "feature": list(self.feature),
                "role": self.role, "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "Solid":
        return cls(d["lo"], d["hi"], d["feature"], d["role"], d.get("name", ""))


@dataclass(frozen=True)
class SceneSpec:
    solids: tuple
    workspace_lo: tuple = WORKSPACE_LO
    workspace_hi: tuple = WORKSPACE_HI
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "solids", tuple(self.solids))
        if not any(s.role == "target" for s in self.solids):
            raise ValueError("scene has no target solid")
        t = self.target
        lo, hi = np.array(self.workspace_lo), np.array(self.workspace_hi)
        if np.any(np.array(t.lo) < lo - 1e-9) or np.any(np.array(t.hi) > hi + 1e-9):
            raise ValueError("target lies outside the workspace")

    @property
    def target(self) -> Solid:
        return next(s for s in self.solids if s.role == "target")

    @property
    def target_index(self) -> int:
        return next(i for i, s in enumerate(self.solids) if s.role == "target")

    @property
    def feature_dim(self) -> int:
        return len(self.solids[0].feature)

    def box_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo = np.array([s.lo for s in self.solids], dtype=float)
        hi = np.array([s.hi for s in self.solids], dtype=float)
        feat = np.array([s.feature for s in self.solids], dtype=float)
        return lo, hi, feat

    def in_workspace(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.workspace_lo) and np.all(p <= self.workspace_hi))

    def inside_solid(self, p) -> bool:
        return any(bool(s.contains(p)) for s in self.solids)

    def quarter_turn(self, j: int) -> "SceneSpec":
        """The same scene rotated by j quarter turns about the hemisphere axis."""
        return SceneSpec(tuple(s.quarter_turn(j) for s in self.solids),
                         self.workspace_lo, self.workspace_hi, self.center)

    def to_dict(self) -> dict:
        return {"solids": [s.to_dict() for s in self.solids],
                "workspace_lo": list(self.workspace_lo), "workspace_hi": list(self.workspace_hi),
                "center": list(self.center)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(tuple(Solid.from_dict(s) for s in d["solids"]), tuple(d["workspace_lo"]),
                   tuple(d["workspace_hi"]), tuple(d["center"]))


@dataclass(frozen=True)
class TaskLayout:
    """A scene plus what counts as completing the task in it."""

    task: str
    scene: SceneSpec
    goal: tuple
    closure_required: bool  # True: gripper must be closed at the goal
    grasp_normal: tuple  # outward normal of the target face the gripper may touch
    opening_azimuth: float = 0.0

    def to_dict(self) -> dict:
        return {"task": self.task, "scene": self.scene.to_dict(), "goal": list(self.goal),
                "closure_required": self.closure_required, "grasp_normal": list(self.grasp_normal),
                "opening_azimuth": self.opening_azimuth}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskLayout":
        return cls(d["task"], SceneSpec.from_dict(d["scene"]), tuple(d["goal"]),
                   bool(d["closure_required"]), tuple(d["grasp_normal"]), d.get("opening_azimuth", 0.0))


def _local_box(mouth, n, s_range, w_range, z_range):
    """Axis-aligned box from cave-local ranges: s along the opening normal, w lateral."""
    n = np.array([n[0], n[1], 0.0])
    w = np.array([-n[1], n[0], 0.0])
    corners = []
    for s in s_range:
        for lat in w_range:
            corners.append(mouth + s * n + lat * w)
    corners = np.array(corners)
    lo = (corners[:, 0].min(), corners[:, 1].min(), z_range[0])
    hi = (corners[:, 0].max(), corners[:, 1].max(), z_range[1])
    return tuple(np.round(lo, 12)), tuple(np.round(hi, 12))


TABLE = Solid((-0.4, -0.4, -0.04), (0.4, 0.4, 0.0), (0.55, 0.45, 0.35), "clutter", "table")
_CAVE_RGB = (0.3, 0.35, 0.8)


def make_layout(task: str, seed: int) -> TaskLayout:
    """Sample a hidden-target layout. The cave opening never faces the initial camera."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    rng = np.random.default_rng(seed)
    n = OPENINGS[rng.integers(len(OPENINGS))]
    depth = REACH_GOAL_DEPTH if task == "hidden-reach" else PRESS_GOAL_DEPTH
    rho = GOAL_DISTANCES[task][rng.integers(3)] - depth
    lam = LATERAL_OFFSETS[rng.integers(len(LATERAL_OFFSETS))]
    n3 = np.array([n[0], n[1], 0.0])
    w3 = np.array([-n[1], n[0], 0.0])
    mouth = -rho * n3 + lam * w3

    half_w = CAVE_WIDTH / 2
    solids = [TABLE]
    back = _local_box(mouth, n, (-CAVE_DEPTH - WALL, -CAVE_DEPTH), (-half_w - WALL, half_w + WALL), (0.0, CAVE_HEIGHT))
    left = _local_box(mouth, n, (-CAVE_DEPTH, 0.0), (-half_w - WALL, -half_w), (0.0, CAVE_HEIGHT))
    right = _local_box(mouth, n, (-CAVE_DEPTH, 0.0), (half_w, half_w + WALL), (0.0, CAVE_HEIGHT))
    roof = _local_box(mouth, n, (-CAVE_DEPTH - WALL, 0.0), (-half_w - WALL, half_w + WALL),
                      (CAVE_HEIGHT, CAVE_HEIGHT + WALL))
    for name, (lo, hi) in (("back", back), ("left", left), ("right", right), ("roof", roof)):
        solids.append(Solid(lo, hi, _CAVE_RGB, "occluder", f"cave-{name}"))

    if task == "hidden-reach":
        lo, hi = _local_box(mouth, n, (-0.07, -0.03), (-0.02, 0.02), (0.0, 0.04))
        target = Solid(lo, hi, (0.9, 0.15, 0.1), "target", "block")
        goal = mouth - REACH_GOAL_DEPTH * n3 + np.array([0.0, 0.0, 0.02])
        closure_required = False
    else:
        lo, hi = _local_box(mouth, n, (-CAVE_DEPTH, -PRESS_GOAL_DEPTH - 0.01), (-0.025, 0.025), (0.02, 0.07))
        target = Solid(lo, hi, (0.1, 0.85, 0.2), "target", "button")
        goal = mouth - PRESS_GOAL_DEPTH * n3 + np.array([0.0, 0.0, 0.04375])
        closure_required = True
    solids.append(target)

    # one clutter block beside the cave axis, clear of both the camera line and the gripper path
    side = 1.0 if rng.random() < 0.5 else -1.0
    along = rng.uniform(0.05, 0.3)
    across = side * rng.uniform(0.22, 0.32)
    size = rng.uniform(0.04, 0.06)
    height = rng.uniform(0.04, 0.1)
    c = along * n3 + across * w3
    solids.append(Solid((c[0] - size / 2, c[1] - size / 2, 0.0), (c[0] + size / 2, c[1] + size / 2, height),
                        tuple(rng.uniform(0.2, 0.9, 3)), "clutter", "block-clutter"))

    scene = SceneSpec(tuple(solids))
    goal = tuple(float(v) for v in np.round(goal, 12))
    azimuth = math.atan2(n[1], n[0]) % (2 * math.pi)
    return TaskLayout(task, scene, goal, closure_required, (n[0], n[1], 0.0), azimuth)
