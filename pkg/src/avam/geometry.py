"""Hemisphere viewpoints, camera poses and viewpoint-centric alignment.

Frames: {W} is the world frame with the hemisphere centre at the origin and
z pointing up. {L} is {W} rotated about z by the active viewpoint azimuth, so
the camera always sits in the x-z half-plane (positive x) of {L}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
DEFAULT_RADIUS = 1.2

# Residual angles are snapped to this grid so that azimuths differing by an
# exact number of quarter turns share bit-identical trig values.
_SNAP = 2.0**40


def wrap_angle(phi):
    """Wrap azimuth(s) into [0, 2*pi)."""
    out = np.mod(phi, TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Viewpoint:
    theta: float
    phi: float
    r: float = DEFAULT_RADIUS

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"viewpoint radius must be positive, got {self.r}")
        if not (0.0 < self.theta <= HALF_PI + 1e-12):
            raise ValueError(f"theta must lie in (0, pi/2], got {self.theta}")
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float, r: float = DEFAULT_RADIUS) -> "Viewpoint":
        return cls(math.radians(theta_deg), math.radians(phi_deg), r)

    def direction(self) -> np.ndarray:
        """Unit vector from the hemisphere centre towards the camera."""
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


@dataclass(frozen=True)
class GripperPose:
    position: tuple
    orientation: tuple = (0.0, 0.0, 0.0)  # roll, pitch, yaw
    closure: float = 0.0  # tip distance; 0 means closed

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "orientation", tuple(float(v) for v in self.orientation))
        if len(self.position) != 3 or len(self.orientation) != 3:
            raise ValueError("gripper position and orientation must be 3-vectors")
        if self.closure < 0:
            raise ValueError("closure must be non-negative")

    @property
    def yaw(self) -> float:
        return self.orientation[2]

    @property
    def is_open(self) -> bool:
        return self.closure > 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self.position, dtype=float)


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray
    axis: np.ndarray
    up_hint: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (forward, right, up) unit vectors of the image plane."""
        fwd = np.asarray(self.axis, dtype=float)
        right = np.cross(fwd, self.up_hint)
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise ValueError("optical axis parallel to up hint; camera basis undefined")
        right = right / norm
        up = np.cross(right, fwd)
        return fwd, right, up


def viewpoint_to_camera_pose(v: Viewpoint, center=(0.0, 0.0, 0.0)) -> CameraPose:
    center = np.asarray(center, dtype=float)
    offset = v.r * v.direction()
    position = center + offset
    axis = (center - position) / v.r
    return CameraPose(position=position, axis=axis)


def _rotation_parts(phi):
    """Split azimuths into whole quarter turns and a snapped residual angle.

    Returns (quarters mod 4, cos(residual), sin(residual)) as arrays.
    """
    phi = np.asarray(phi, dtype=float)
    turns = phi / HALF_PI
    nearest = np.rint(turns)
    on_quarter = np.abs(turns - nearest) < 1e-9
    q = np.where(on_quarter, nearest, np.floor(turns))
    resid = np.where(on_quarter, 0.0, phi - q * HALF_PI)
    resid = np.rint(resid * _SNAP) / _SNAP
    return np.mod(q, 4).astype(np.int64), np.cos(resid), np.sin(resid)


def _quarter(x, y, q):
    """Rotate (x, y) by q quarter turns counter-clockwise; exact in floating point."""
    q = np.broadcast_to(q, np.shape(x))
    xo = np.where(q == 0, x, np.where(q == 1, -y, np.where(q == 2, -x, y)))
    yo = np.where(q == 0, y, np.where(q == 1, x, np.where(q == 2, -y, -x)))
    return xo, yo


def rotate_z(points, phi) -> np.ndarray:
    """Apply Rot(z, phi) to (..., 3) points. phi may be scalar or per-point."""
    pts = np.asarray(points, dtype=float)
    q, c, s = _rotation_parts(phi)
    x, y = pts[..., 0], pts[..., 1]
    xr = c * x - s * y
    yr = s * x + c * y
    xo, yo = _quarter(xr, yr, q)
    return np.stack([xo, yo, pts[..., 2] + 0.0], axis=-1)


def align_points(points, phi_v) -> np.ndarray:
    """Map world points into the viewpoint-aligned frame, i.e. Rot^-1(z, phi_v)."""
    pts = np.asarray(points, dtype=float)
    q, c, s = _rotation_parts(phi_v)
    x, y = _quarter(pts[..., 0], pts[..., 1], np.mod(-q, 4))
    xo = c * x + s * y
    yo = -s * x + c * y
    return np.stack([xo, yo, pts[..., 2] + 0.0], axis=-1)


def unalign_points(points, phi_v) -> np.ndarray:
    """Inverse of :func:`align_points`: aligned frame back to world."""
    return rotate_z(points, phi_v)


def inverse_align(v_l: Viewpoint, f_l, g_l: GripperPose, phi_v: float):
    """Map a viewpoint, ROI centre and gripper pose from {L} back to {W}."""
    v = replace(v_l, phi=v_l.phi + phi_v)
    f = unalign_points(np.asarray(f_l, dtype=float), phi_v)
    roll, pitch, yaw = g_l.orientation
    g = GripperPose(
        position=unalign_points(np.asarray(g_l.position, dtype=float), phi_v),
        orientation=(roll, pitch, _wrap_pi(yaw + phi_v)),
        closure=g_l.closure,
    )
    return v, f, g


def align_pose(g: GripperPose, phi_v: float) -> GripperPose:
    roll, pitch, yaw = g.orientation
    return GripperPose(
        position=align_points(np.asarray(g.position, dtype=float), phi_v),
        orientation=(roll, pitch, _wrap_pi(yaw - phi_v)),
        closure=g.closure,
    )


def _wrap_pi(a: float) -> float:
    """Wrap an angle into [-pi, pi); angles already in range are returned unchanged."""
    a = float(a)
    if -math.pi <= a < math.pi:
        return a
    return float((a + math.pi) % TWO_PI - math.pi)


def angular_distance(a: Viewpoint, b: Viewpoint) -> float:
    """Angle between the two viewing directions, radians."""
    c = float(np.clip(np.dot(a.direction(), b.direction()), -1.0, 1.0))
    return math.acos(c)


@dataclass(frozen=True)
class ViewpointBins:
    """Discrete viewpoint grid: polar-angle centres times evenly spaced azimuths."""

    theta_centers_deg: Sequence[float] = (15.0, 35.0, 55.0, 75.0)
    n_phi: int = 12
    r: float = DEFAULT_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "theta_centers_deg", tuple(float(t) for t in self.theta_centers_deg))
        if not self.theta_centers_deg or self.n_phi < 1:
            raise ValueError("viewpoint bin config must have at least one theta centre and one phi bin")
        if any(not (0.0 < t <= 90.0) for t in self.theta_centers_deg):
            raise ValueError("theta centres must lie in (0, 90] degrees")

    def __len__(self) -> int:
        return len(self.theta_centers_deg) * self.n_phi

    @property
    def phi_step(self) -> float:
        return TWO_PI / self.n_phi

    def undiscretize(self, k: int) -> Viewpoint:
        if not 0 <= k < len(self):
            raise IndexError(f"viewpoint bin {k} out of range [0, {len(self)})")
        i_theta, i_phi = divmod(int(k), self.n_phi)
        return Viewpoint(math.radians(self.theta_centers_deg[i_theta]), i_phi * self.phi_step, self.r)

    def discretize(self, v: Viewpoint) -> int:
        thetas = np.radians(self.theta_centers_deg)
        i_theta = int(np.argmin(np.abs(thetas - v.theta)))
        i_phi = int(np.rint(v.phi / self.phi_step)) % self.n_phi
        return i_theta * self.n_phi + i_phi

    def bins(self) -> list[Viewpoint]:
        return [self.undiscretize(k) for k in range(len(self))]

    def theta_index(self, k: int) -> int:
        return int(k) // self.n_phi

    def phi_index(self, k: int) -> int:
        return int(k) % self.n_phi
