import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avam.geometry import CameraPose, Viewpoint, viewpoint_to_camera_pose
from avam.scene import SceneSpec, Solid
from avam.voxel import (
    PointCloud,
    Visibility,
    VoxelGrid,
    bin_indices,
    crop_roi,
    depth_to_pointcloud,
    label_visibility,
    render_depth,
    voxelize,
)

from oracles import grid_from_occupancy, visibility_naive, visibility_slab, voxelize_naive


def box(lo, hi, feat=(0.5, 0.5, 0.5), role="target"):
    return Solid(lo, hi, feat, role)


class TestRender:
    def test_nothing_in_view(self):
        # only solid sits behind the camera
        scene = SceneSpec((box((1.5, -0.1, 0.0), (1.7, 0.1, 0.2)),), (-2, -2, -2), (2, 2, 2))
        img = render_depth(scene, viewpoint_to_camera_pose(Viewpoint(math.pi / 2, 0.0)), 16)
        assert np.all(np.isinf(img.depth))

    def test_centre_pixel_hits_front_face(self):
        cam = CameraPose(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        half = 0.05
        scene = SceneSpec((box((0.6 - half, -half, -half), (0.6 + half, half, half)),), (-1, -1, -1), (1, 1, 1))
        img = render_depth(scene, cam, 33)
        assert img.depth[16, 16] == pytest.approx(0.6 - half, abs=1e-12)

    def test_rear_box_hidden(self):
        cam = CameraPose(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        front = box((0.5, -0.4, -0.4), (0.6, 0.4, 0.4), (1.0, 0.0, 0.0))
        rear = box((0.8, -0.1, -0.1), (0.9, 0.1, 0.1), (0.0, 1.0, 0.0), "clutter")
        img = render_depth(SceneSpec((front, rear), (-1, -1, -1), (1, 1, 1)), cam, 32)
        assert not np.any(np.all(img.features == (0.0, 1.0, 0.0), axis=-1))

    def test_back_projection(self):
        cam = CameraPose(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        solid = box((0.5, -0.1, -0.1), (0.7, 0.1, 0.1))
        img = render_depth(SceneSpec((solid,), (-1, -1, -1), (1, 1, 1)), cam, 33)
        pc = depth_to_pointcloud(img, cam)
        assert len(pc) == np.isfinite(img.depth).sum()
        eps = 1e-9
        assert np.all((pc.xyz >= np.array(solid.lo) - eps) & (pc.xyz <= np.array(solid.hi) + eps))
        on_axis = pc.xyz[np.argmin(np.linalg.norm(pc.xyz[:, 1:], axis=1))]
        assert np.linalg.norm(on_axis - [img.depth[16, 16], 0, 0]) < 1e-9

    def test_empty_image_gives_empty_cloud(self):
        from avam.voxel import DepthImage
        img = DepthImage(np.full((4, 4), np.inf), np.zeros((4, 4, 3)))
        assert len(depth_to_pointcloud(img, CameraPose(np.zeros(3), np.array([1.0, 0, 0])))) == 0


class TestVoxelize:
    def test_single_point(self):
        pc = PointCloud(np.array([[0.025, 0.025, 0.025]]), np.array([[1.0]]))
        g = voxelize(pc, 0.05, (0.4, 0.4, 0.4), 16)
        assert g.occupied[0, 0, 0] and g.occupied.sum() == 1
        np.testing.assert_array_equal(g.centroids[0, 0, 0], [0.025, 0.025, 0.025])

    def test_feature_mean(self):
        pc = PointCloud(np.array([[0.01, 0.01, 0.01], [0.02, 0.02, 0.02]]), np.array([[0.2], [0.4]]))
        g = voxelize(pc, 0.05, (0.4, 0.4, 0.4), 16)
        assert g.features[0, 0, 0, 0] == pytest.approx(0.3)

    def test_half_open_faces(self):
        # a point on a voxel's max face belongs to the next voxel
        assert bin_indices(np.array([[0.05, 0.0, 0.1]]), np.zeros(3), 0.05).tolist() == [[1, 0, 2]]
        pc = PointCloud(np.array([[0.05, 0.0, 0.0]]), np.zeros((1, 1)))
        assert voxelize(pc, 0.05, (0.4, 0.4, 0.4), 16).occupied[1, 0, 0]

    def test_out_of_bounds_dropped(self):
        pc = PointCloud(np.array([[-0.01, 0.0, 0.0], [0.8, 0.1, 0.1]]), np.zeros((2, 1)))
        assert not voxelize(pc, 0.05, (0.4, 0.4, 0.4), 16).occupied.any()

    def test_invalid_params(self):
        pc = PointCloud(np.zeros((0, 3)), np.zeros((0, 1)))
        with pytest.raises(ValueError):
            voxelize(pc, 0.0, (0, 0, 0), 4)

    @given(st.integers(0, 2**32 - 1), st.integers(0, 200))
    def test_occupied_count_bounded(self, seed, n):
        rng = np.random.default_rng(seed)
        pc = PointCloud(rng.uniform(-0.1, 0.9, (n, 3)), rng.uniform(0, 1, (n, 2)))
        g = voxelize(pc, 0.05, (0.4, 0.4, 0.4), 16)
        assert g.occupied.sum() <= n
        origin = g.origin
        idx = np.argwhere(g.occupied)
        lo = origin + idx * 0.05
        c = g.centroids[g.occupied]
        assert np.all((c >= lo - 1e-12) & (c <= lo + 0.05 + 1e-12))
        assert np.all(g.features[~g.occupied] == 0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            n = int(rng.integers(1, 300))
            xyz = rng.uniform(-0.05, 0.45, (n, 3))
            feats = rng.uniform(0, 1, (n, 3))
            g = voxelize(PointCloud(xyz, feats), 0.05, (0.2, 0.2, 0.2), 8)
            occ, cen, fea = voxelize_naive(xyz, feats, 0.05, (0.2, 0.2, 0.2), 8)
            np.testing.assert_array_equal(g.occupied, occ)
            np.testing.assert_allclose(g.centroids, cen, atol=1e-12, rtol=0)
            np.testing.assert_allclose(g.features, fea, atol=1e-12, rtol=0)


class TestCrop:
    def test_far_roi_empty(self):
        pc = PointCloud(np.random.default_rng(0).uniform(0, 1, (50, 3)), np.zeros((50, 1)))
        assert not crop_roi(pc, (5.0, 5.0, 5.0), 0.2, 0.0125).occupied.any()

    def test_point_at_centre(self):
        pc = PointCloud(np.array([[0.3, 0.3, 0.3]]), np.zeros((1, 1)))
        g = crop_roi(pc, (0.3, 0.3, 0.3), 0.2, 0.0125)
        assert g.dims == 16 and g.occupied[8, 8, 8]

    def test_equals_filter_then_voxelize(self):
        rng = np.random.default_rng(3)
        xyz = rng.uniform(0, 0.5, (400, 3))
        pc = PointCloud(xyz, rng.uniform(0, 1, (400, 2)))
        f = np.array([0.25, 0.2, 0.3])
        g = crop_roi(pc, f, 0.2, 0.0125)
        mask = np.all((xyz >= f - 0.1) & (xyz < f + 0.1), axis=1)
        ref = voxelize(pc.subset(mask), 0.0125, f, 16)
        np.testing.assert_array_equal(g.occupied, ref.occupied)
        np.testing.assert_array_equal(g.centroids, ref.centroids)


class TestVisibility:
    def test_empty_grid_all_free(self):
        g = grid_from_occupancy(np.zeros((4, 4, 4), dtype=bool))
        cam = CameraPose(np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]))
        assert np.all(label_visibility(g, cam).labels == Visibility.FREE)

    def test_nearer_voxel_occludes(self):
        occ = np.zeros((4, 4, 4), dtype=bool)
        occ[3, 1, 1] = True  # nearer to a camera on +x
        g = grid_from_occupancy(occ)
        cen = g.centroids[3, 1, 1]
        cam = CameraPose(np.array([1.0, cen[1], cen[2]]), np.array([-1.0, 0.0, 0.0]))
        labels = label_visibility(g, cam).labels
        assert labels[3, 1, 1] == Visibility.OCCUPIED
        assert labels[0, 1, 1] == Visibility.OCCLUDED
        assert labels[0, 2, 2] == Visibility.FREE

    def test_matches_continuous_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            occ = rng.random((6, 6, 6)) < 0.15
            g = grid_from_occupancy(occ)
            cam = rng.uniform(-1, 1, 3)
            cam = cam / np.linalg.norm(cam) * 0.7
            labels = label_visibility(g, CameraPose(cam, -cam / np.linalg.norm(cam))).labels
            np.testing.assert_array_equal(labels, visibility_naive(occ, g.origin, g.resolution, cam))

    def test_vectorized_oracle_agrees_with_loop_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            occ = rng.random((5, 5, 5)) < 0.2
            cam = rng.uniform(-1, 1, 3)
            origin = np.full(3, -0.125)
            np.testing.assert_array_equal(visibility_slab(occ, origin, 0.05, cam),
                                          visibility_naive(occ, origin, 0.05, cam))

    @given(st.integers(0, 2**32 - 1))
    def test_removing_occupancy_never_occludes_free(self, seed):
        rng = np.random.default_rng(seed)
        occ = rng.random((5, 5, 5)) < 0.2
        cam = rng.uniform(-1, 1, 3)
        cam = cam / np.linalg.norm(cam) * 0.6
        pose = CameraPose(cam, -cam / np.linalg.norm(cam))
        before = label_visibility(grid_from_occupancy(occ), pose).labels
        fewer = occ.copy()
        cells = np.argwhere(occ)
        if len(cells):
            fewer[tuple(cells[rng.integers(len(cells))])] = False
        after = label_visibility(grid_from_occupancy(fewer), pose).labels
        assert not np.any((before == Visibility.FREE) & (after == Visibility.OCCLUDED))
