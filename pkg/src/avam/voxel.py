"""Depth rendering, point clouds, voxel grids and voxel visibility."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import CameraPose, align_points, unalign_points
from .scene import SceneSpec

DEFAULT_RES = 32
DEFAULT_FOV = math.radians(60.0)


class Visibility(IntEnum):
    FREE = 0  # observed, empty
    OCCUPIED = 1  # observed, occupied
    OCCLUDED = 2


@dataclass(frozen=True)
class DepthImage:
    depth: np.ndarray  # (H, W), np.inf where nothing was hit
    features: np.ndarray  # (H, W, M)
    fov: float = DEFAULT_FOV

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class PointCloud:
    xyz: np.ndarray  # (n, 3)
    features: np.ndarray  # (n, M)

    def __post_init__(self):
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise ValueError("xyz must be (n, 3)")
        if len(self.xyz) != len(self.features):
            raise ValueError("xyz and features disagree on n")

    def __len__(self) -> int:
        return len(self.xyz)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.xyz, self.features], axis=1)

    def subset(self, mask) -> "PointCloud":
        return PointCloud(self.xyz[mask], self.features[mask])


@dataclass(frozen=True)
class VoxelGrid:
    center: np.ndarray
    resolution: float
    dims: int
    occupied: np.ndarray  # (D, D, D) bool
    centroids: np.ndarray  # (D, D, D, 3)
    features: np.ndarray  # (D, D, D, M)

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float) - self.dims * self.resolution / 2.0

    @property
    def feature_dim(self) -> int:
        return self.features.shape[-1]

    def voxel_centers(self) -> np.ndarray:
        return voxel_centers(self.origin, self.resolution, self.dims)

    def as_array(self) -> np.ndarray:
        """Per-voxel rows of (centroid, features, occupancy flag)."""
        d = self.dims
        flat_occ = self.occupied.reshape(d**3, 1).astype(float)
        return np.concatenate([self.centroids.reshape(-1, 3), self.features.reshape(d**3, -1), flat_occ], axis=1)

    def to_bytes(self) -> bytes:
        return (np.asarray(self.center, dtype=float).tobytes() + np.float64(self.resolution).tobytes()
                + self.occupied.tobytes() + self.centroids.tobytes() + self.features.tobytes())


@dataclass(frozen=True)
class ObservedGrid:
    grid: VoxelGrid
    labels: np.ndarray  # (D, D, D) int8 of Visibility

    def __post_init__(self):
        if self.labels.shape != self.grid.occupied.shape:
            raise ValueError("labels must cover every voxel")
        if np.any((self.labels == Visibility.OCCUPIED) & ~self.grid.occupied):
            raise ValueError("voxel labelled observed-occupied but not occupied")

    def counts(self) -> dict:
        return {v.name: int(np.count_nonzero(self.labels == v)) for v in Visibility}


def voxel_centers(origin, e: float, dims: int) -> np.ndarray:
    i = np.arange(dims)
    gi, gj, gk = np.meshgrid(i, i, i, indexing="ij")
    idx = np.stack([gi, gj, gk], axis=-1)
    return np.asarray(origin, dtype=float) + (idx + 0.5) * e


# -- ray casting -----------------------------------------------------------

def slab_intervals(origins, dirs, lo, hi):
    """Entry/exit ray parameters against boxes.

    origins, dirs: (R, 3); lo, hi: (B, 3). Returns (t_near, t_far) of shape (R, B).
    The per-axis formulation is symmetric under axis swaps and reflections so
    that mirrored inputs give bit-identical parameters.
    """
    o = np.asarray(origins, dtype=float)[:, None, :]
    d = np.asarray(dirs, dtype=float)[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (np.asarray(lo)[None] - o) / d
        t2 = (np.asarray(hi)[None] - o) / d
    t_near = np.max(np.minimum(t1, t2), axis=-1)
    t_far = np.min(np.maximum(t1, t2), axis=-1)
    return t_near, t_far


def cast_rays(scene: SceneSpec, origins, dirs) -> tuple[np.ndarray, np.ndarray]:
    """First-hit ray parameter and solid index per ray (inf / -1 on a miss)."""
    origins = np.asarray(origins, dtype=float)
    n = len(origins)
    if not scene.solids:
        return np.full(n, np.inf), np.full(n, -1)
    lo, hi, _ = scene.box_arrays()
    t_near, t_far = slab_intervals(origins, dirs, lo, hi)
    hit = (t_near <= t_far) & (t_near > 0)
    t = np.where(hit, t_near, np.inf)
    which = np.argmin(t, axis=1)
    best = t[np.arange(n), which]
    which = np.where(np.isfinite(best), which, -1)
    return best, which


def camera_rays(cam: CameraPose, res: int, fov: float = DEFAULT_FOV) -> np.ndarray:
    """Unit ray directions for a square pinhole image, row-major (res*res, 3)."""
    fwd, right, up = cam.basis()
    half = math.tan(fov / 2.0)
    u = (2.0 * (np.arange(res) + 0.5) / res - 1.0) * half
    v = (1.0 - 2.0 * (np.arange(res) + 0.5) / res) * half
    uu, vv = np.meshgrid(u, v)
    dirs = fwd[None] + uu.reshape(-1, 1) * right[None] + vv.reshape(-1, 1) * up[None]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def render_depth(scene: SceneSpec, cam: CameraPose, res: int = DEFAULT_RES, fov: float = DEFAULT_FOV) -> DepthImage:
    dirs = camera_rays(cam, res, fov)
    origins = np.broadcast_to(np.asarray(cam.position, dtype=float), dirs.shape)
    t, which = cast_rays(scene, origins, dirs)
    return _image_from_hits(scene, t, which, res, fov)


def render_aligned(scene: SceneSpec, cam_l: CameraPose, phi_v: float, res: int = DEFAULT_RES,
                   fov: float = DEFAULT_FOV) -> DepthImage:
    """Render with a camera given in the aligned frame of azimuth phi_v.

    Rays are built in {L} and rotated into {W}, so back-projecting the result
    with ``cam_l`` yields the aligned cloud directly.
    """
    dirs_l = camera_rays(cam_l, res, fov)
    dirs_w = unalign_points(dirs_l, phi_v)
    origin_w = unalign_points(np.asarray(cam_l.position, dtype=float), phi_v)
    t, which = cast_rays(scene, np.broadcast_to(origin_w, dirs_w.shape), dirs_w)
    return _image_from_hits(scene, t, which, res, fov)


def _image_from_hits(scene, t, which, res, fov) -> DepthImage:
    m = scene.feature_dim if scene.solids else 3
    feats = np.zeros((len(t), m))
    hit = which >= 0
    if np.any(hit):
        _, _, solid_feats = scene.box_arrays()
        feats[hit] = solid_feats[which[hit]]
    return DepthImage(t.reshape(res, res), feats.reshape(res, res, m), fov)


def depth_to_pointcloud(img: DepthImage, cam: CameraPose) -> PointCloud:
    res = img.depth.shape[0]
    dirs = camera_rays(cam, res, img.fov)
    depth = img.depth.reshape(-1)
    ok = np.isfinite(depth)
    xyz = np.asarray(cam.position, dtype=float)[None] + depth[ok, None] * dirs[ok]
    return PointCloud(xyz, img.features.reshape(len(depth), -1)[ok])


# -- voxelisation ------------------------------------------------------------

def bin_indices(xyz, origin, e: float) -> np.ndarray:
    """Half-open bin index per point: origin + i*e <= p < origin + (i+1)*e."""
    xyz = np.asarray(xyz, dtype=float)
    origin = np.asarray(origin, dtype=float)
    idx = np.floor((xyz - origin) / e).astype(np.int64)
    idx -= xyz < origin + idx * e
    idx += xyz >= origin + (idx + 1) * e
    return idx


def voxelize(pc: PointCloud, e: float, c, dims: int) -> VoxelGrid:
    if e <= 0 or dims < 1:
        raise ValueError("voxel resolution and dims must be positive")
    c = np.asarray(c, dtype=float)
    m = pc.features.shape[1]
    origin = c - dims * e / 2.0
    n_vox = dims**3
    centers = voxel_centers(origin, e, dims)
    occupied = np.zeros((dims,) * 3, dtype=bool)
    centroids = centers.copy()
    features = np.zeros((dims,) * 3 + (m,))
    if len(pc) == 0:
        return VoxelGrid(c, float(e), dims, occupied, centroids, features)
    idx = bin_indices(pc.xyz, origin, e)
    keep = np.all((idx >= 0) & (idx < dims), axis=1)
    if not np.any(keep):
        return VoxelGrid(c, float(e), dims, occupied, centroids, features)
    flat = np.ravel_multi_index(idx[keep].T, (dims,) * 3)
    counts = np.bincount(flat, minlength=n_vox)
    occ = counts > 0
    sums = np.stack([np.bincount(flat, weights=col, minlength=n_vox) for col in pc.xyz[keep].T], axis=1)
    fsums = np.stack([np.bincount(flat, weights=col, minlength=n_vox) for col in pc.features[keep].T], axis=1)
    flat_centroids = centroids.reshape(n_vox, 3)
    flat_centroids[occ] = sums[occ] / counts[occ, None]
    flat_features = features.reshape(n_vox, m)
    flat_features[occ] = fsums[occ] / counts[occ, None]
    occupied.reshape(-1)[:] = occ
    return VoxelGrid(c, float(e), dims, occupied, centroids, features)


def crop_roi(pc: PointCloud, f, side: float, e_roi: float) -> VoxelGrid:
    if side <= 0:
        raise ValueError("ROI side must be positive")
    f = np.asarray(f, dtype=float)
    dims = max(1, int(round(side / e_roi)))
    lo = f - dims * e_roi / 2.0
    hi = f + dims * e_roi / 2.0
    inside = np.all((pc.xyz >= lo) & (pc.xyz < hi), axis=1) if len(pc) else np.zeros(0, dtype=bool)
    return voxelize(pc.subset(inside), e_roi, f, dims)


# -- visibility ------------------------------------------------------------

def label_visibility(grid: VoxelGrid, cam: CameraPose) -> ObservedGrid:
    """Label every voxel by walking the segment camera -> voxel centre (3D DDA).

    A voxel is occluded when some other occupied voxel is entered first.
    All D^3 segments are traversed in lockstep.
    """
    d = grid.dims
    e = grid.resolution
    origin = grid.origin
    cam_p = np.asarray(cam.position, dtype=float)
    targets = grid.voxel_centers().reshape(-1, 3)
    target_idx = np.stack(np.unravel_index(np.arange(d**3), (d,) * 3), axis=1)
    direction = targets - cam_p

    box_lo = origin[None]
    box_hi = (origin + d * e)[None]
    t_near, _ = slab_intervals(np.broadcast_to(cam_p, direction.shape), direction, box_lo, box_hi)
    t0 = np.maximum(t_near[:, 0], 0.0)
    start = cam_p + t0[:, None] * direction
    idx = np.clip(np.floor((start - origin) / e).astype(np.int64), 0, d - 1)

    step = np.sign(direction).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = origin + (idx + (step > 0)) * e
        t_max = np.where(step != 0, (boundary - cam_p) / direction, np.inf)
        t_delta = np.where(step != 0, e / np.abs(direction), np.inf)

    labels = np.full(d**3, -1, dtype=np.int8)
    occ = grid.occupied
    active = np.arange(d**3)
    for _ in range(3 * d + 3):
        if active.size == 0:
            break
        cur = idx[active]
        inside = np.all((cur >= 0) & (cur < d), axis=1)
        is_target = np.all(cur == target_idx[active], axis=1)
        hit_occ = np.zeros(active.size, dtype=bool)
        hit_occ[inside] = occ[cur[inside, 0], cur[inside, 1], cur[inside, 2]]
        done_target = is_target | ~inside
        blocked = hit_occ & ~is_target
        labels[active[blocked]] = Visibility.OCCLUDED
        labels[active[done_target & ~blocked]] = -2  # reached target unobstructed
        keep = ~(done_target | blocked)
        active = active[keep]
        if active.size == 0:
            break
        tm = t_max[active]
        axis = np.argmin(tm, axis=1)
        rows = np.arange(active.size)
        idx[active, axis] += step[active, axis]
        t_max[active, axis] = tm[rows, axis] + t_delta[active, axis]

    reached = labels != Visibility.OCCLUDED
    flat_occ = occ.reshape(-1)
    labels[reached] = np.where(flat_occ[reached], Visibility.OCCUPIED, Visibility.FREE)
    return ObservedGrid(grid, labels.reshape((d,) * 3))


def label_from_solids(grid: VoxelGrid, cam_position, scene: SceneSpec, phi_frame: float = 0.0,
                      tol: float = 1e-9) -> ObservedGrid:
    """Sensor-side labels of a (possibly aligned) grid against the true scene boxes.

    The grid lives in the frame aligned with azimuth ``phi_frame``. A voxel
    is occupied when its centre lies inside a solid, and occluded when the
    sight line from the camera passes through a solid, shrunk by half a voxel,
    before it enters the voxel's own cell.
    """
    d, e = grid.dims, grid.resolution
    centers_l = grid.voxel_centers().reshape(-1, 3)
    centers_w = unalign_points(centers_l, phi_frame)
    cam_w = np.asarray(cam_position, dtype=float)
    cam_l = align_points(cam_w, phi_frame)

    seg_l = centers_l - cam_l
    # entry parameter of each segment into its own target cell
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (centers_l - e / 2 - cam_l) / seg_l
        t2 = (centers_l + e / 2 - cam_l) / seg_l
    cell_near = np.max(np.minimum(t1, t2), axis=1)

    lo, hi, feats = scene.box_arrays()
    # shrink solids by half a voxel so a surface lying inside a free cell does not
    # hide the occupied cell right behind it (voxel-level occlusion)
    m = np.minimum(e / 2.0, 0.49 * (hi - lo))
    seg_w = centers_w - cam_w
    t_near, t_far = slab_intervals(np.broadcast_to(cam_w, seg_w.shape), seg_w, lo + m, hi - m)
    start = np.maximum(t_near, 0.0)
    stop = np.minimum(t_far, cell_near[:, None])
    occluded = np.any(start < stop - tol, axis=1)

    inside = np.all((centers_w[:, None, :] >= lo[None]) & (centers_w[:, None, :] < hi[None]), axis=2)
    occ = np.any(inside, axis=1)
    first = np.argmax(inside, axis=1)
    m = feats.shape[1]
    features = np.zeros((d**3, m))
    features[occ] = feats[first[occ]]
    labels = np.where(occluded, Visibility.OCCLUDED,
                      np.where(occ, Visibility.OCCUPIED, Visibility.FREE)).astype(np.int8)
    truth = VoxelGrid(np.asarray(grid.center, dtype=float), e, d, occ.reshape((d,) * 3),
                      centers_l.reshape((d,) * 3 + (3,)), features.reshape((d,) * 3 + (m,)))
    return ObservedGrid(truth, labels.reshape((d,) * 3))
