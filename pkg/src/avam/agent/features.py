"""Fixed-length feature vectors from aligned voxel observations."""

from __future__ import annotations

import math

import numpy as np

from ..env import Observation
from ..voxel import VoxelGrid

CELLS = 8  # pooled grid side
N_PROPRIO = 10
FEATURE_DIM = 2 * CELLS**3 + N_PROPRIO

# normalisation of aligned gripper positions
_XY_SCALE = 0.4 * math.sqrt(2.0)
_Z_MID, _Z_HALF = 0.25, 0.25
_CLOSURE_MAX = 0.08


def pool_grid(grid: VoxelGrid, cells: int = CELLS) -> tuple[np.ndarray, np.ndarray]:
    """Mean-pool occupancy and channel-mean features down to cells^3."""
    d = grid.dims
    if d % cells:
        raise ValueError(f"grid side {d} is not a multiple of {cells}")
    f = d // cells
    shape = (cells, f, cells, f, cells, f)
    occ = grid.occupied.astype(float).reshape(shape).mean(axis=(1, 3, 5))
    feat = grid.features.mean(axis=-1).reshape(shape).mean(axis=(1, 3, 5))
    return occ, feat


def proprio_features(obs: Observation) -> np.ndarray:
    v = obs.viewpoint_local
    g = obs.gripper_local
    x, y, z = g.position
    pos = np.clip([x / _XY_SCALE, y / _XY_SCALE, (z - _Z_MID) / _Z_HALF], -1.0, 1.0)
    return np.array([
        math.sin(v.theta), math.cos(v.theta), math.sin(v.phi), math.cos(v.phi),
        *pos, math.sin(g.yaw), math.cos(g.yaw), min(g.closure / _CLOSURE_MAX, 1.0),
    ])


def observation_features(obs: Observation) -> np.ndarray:
    occ, feat = pool_grid(obs.grid)
    return np.concatenate([occ.ravel(), feat.ravel(), proprio_features(obs)]).astype(np.float32)
