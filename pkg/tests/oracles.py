"""Slow reference implementations used as test oracles."""

import numpy as np


def voxelize_naive(xyz, feats, e, c, dims):
    """Per-voxel membership scan, O(n * D^3)."""
    origin = np.asarray(c, dtype=float) - dims * e / 2.0
    occ = np.zeros((dims,) * 3, dtype=bool)
    cen = np.zeros((dims,) * 3 + (3,))
    fea = np.zeros((dims,) * 3 + (feats.shape[1],))
    for i in range(dims):
        for j in range(dims):
            for k in range(dims):
                lo = origin + np.array([i, j, k]) * e
                hi = origin + np.array([i + 1, j + 1, k + 1]) * e
                inside = np.all((xyz >= lo) & (xyz < hi), axis=1)
                if inside.any():
                    occ[i, j, k] = True
                    cen[i, j, k] = xyz[inside].mean(axis=0)
                    fea[i, j, k] = feats[inside].mean(axis=0)
                else:
                    cen[i, j, k] = lo + e / 2.0
    return occ, cen, fea


def segment_box(p0, p1, lo, hi):
    """Parameter interval [t0, t1] of segment p0 -> p1 inside the box, or None."""
    t0, t1 = 0.0, 1.0
    d = np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)
    for a in range(3):
        if d[a] == 0.0:
            if not lo[a] <= p0[a] <= hi[a]:
                return None
            continue
        ta, tb = (lo[a] - p0[a]) / d[a], (hi[a] - p0[a]) / d[a]
        t0, t1 = max(t0, min(ta, tb)), min(t1, max(ta, tb))
    return (t0, t1) if t0 < t1 else None


def visibility_naive(occupied, origin, e, cam):
    """Continuous ray-AABB oracle: 0 free, 1 occupied, 2 occluded."""
    dims = occupied.shape[0]
    cells = [tuple(ix) for ix in np.argwhere(occupied)]
    labels = np.zeros(occupied.shape, dtype=np.int8)
    for ix in np.ndindex(occupied.shape):
        center = origin + (np.array(ix) + 0.5) * e
        blocked = False
        for jx in cells:
            if jx == ix:
                continue
            lo = origin + np.array(jx) * e
            if segment_box(cam, center, lo, lo + e) is not None:
                blocked = True
                break
        labels[ix] = 2 if blocked else int(occupied[ix])
    assert dims == occupied.shape[1]
    return labels


def visibility_slab(occupied, origin, e, cam, chunk=512):
    """Vectorized form of :func:`visibility_naive` (same slab test, all cell pairs at once)."""
    occupied = np.asarray(occupied, dtype=bool)
    cam = np.asarray(cam, dtype=float)
    idx = np.argwhere(np.ones(occupied.shape, dtype=bool))
    centers = origin + (idx + 0.5) * e
    cells = np.argwhere(occupied)
    lo = origin + cells * e
    hi = lo + e
    flat_cells = np.ravel_multi_index(cells.T, occupied.shape)
    blocked = np.zeros(len(idx), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(0, len(idx), chunk):
            d = centers[s:s + chunk, None, :] - cam
            ta = (lo[None] - cam) / d
            tb = (hi[None] - cam) / d
            para = d == 0.0
            inside = (lo[None] <= cam) & (cam <= hi[None])
            near = np.where(para, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
            far = np.where(para, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
            t0 = np.maximum(0.0, near.max(axis=-1))
            t1 = np.minimum(1.0, far.min(axis=-1))
            hit = t0 < t1
            hit &= flat_cells[None, :] != np.arange(s, s + len(d))[:, None]
            blocked[s:s + chunk] = hit.any(axis=1)
    labels = np.where(blocked, 2, occupied.ravel().astype(np.int8)).astype(np.int8)
    return labels.reshape(occupied.shape)


def grid_from_occupancy(occ, e=0.05, c=(0.0, 0.0, 0.0)):
    from avam.voxel import VoxelGrid

    d = occ.shape[0]
    c = np.asarray(c, dtype=float)
    origin = c - d * e / 2
    i = np.stack(np.meshgrid(*(np.arange(d),) * 3, indexing="ij"), axis=-1)
    return VoxelGrid(c, e, d, occ, origin + (i + 0.5) * e, np.zeros((d, d, d, 1)))
