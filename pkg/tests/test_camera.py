import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clothfold.camera import (
    CameraConfig,
    Observation,
    depth_to_image,
    downsample,
    extract_pointcloud,
    image_to_depth,
    image_to_mask,
    load_observation,
    mask_to_image,
    observation_from_depth,
    render_topdown,
    save_observation,
)
from clothfold.errors import InvalidArgumentError, OutOfWorkspaceError
from clothfold.metrics import coverage
from clothfold.sim import default_cloth, execute_pick_place, settle


def splat_oracle(state, cam):
    """Brute-force renderer: per pixel, max z over all covering samples."""
    pos = state.positions
    mids = 0.5 * (pos[state.edge_i] + pos[state.edge_j])
    samples = np.concatenate([pos, mids], axis=0)
    radius = state.rest_spacing / 2.0
    depth = np.full((cam.height, cam.width), cam.table_depth)
    for v in range(cam.height):
        for u in range(cam.width):
            px, py = cam.pixel_to_world(u, v)
            d2 = (samples[:, 0] - px) ** 2 + (samples[:, 1] - py) ** 2
            hit = d2 <= radius * radius
            if hit.any():
                depth[v, u] = max(cam.table_depth, samples[hit, 2].max())
    return depth


class TestCameraMapping:
    @given(u=st.integers(0, 63), v=st.integers(0, 63))
    @settings(max_examples=50)
    def test_pixel_world_round_trip_identity(self, u, v):
        cam = CameraConfig()
        x, y = cam.pixel_to_world(u, v)
        assert cam.world_to_pixel(x, y) == (u, v)

    def test_workspace_extent_default_one_meter(self):
        cam = CameraConfig()
        assert cam.extent == 1.0
        assert cam.cell == 1.0 / 64


class TestRender:
    def test_flat_cloth_mask_area_matches_analytic_ratio(self, flat_mask):
        expected = (0.32**2 / 1.0**2) * 64 * 64
        assert abs(coverage(flat_mask) - expected) <= 0.15 * expected

    def test_all_table_depth_gives_empty_mask(self):
        obs = observation_from_depth(np.zeros((64, 64)), height_threshold=0.0015)
        assert not obs.mask.any()

    def test_mask_iff_depth_above_threshold(self, flat_cloth, cam):
        obs = render_topdown(flat_cloth, cam)
        threshold = flat_cloth.thickness / 2.0
        assert np.array_equal(obs.mask, obs.depth > cam.table_depth + threshold)

    def test_out_of_workspace_raises(self, flat_cloth, params):
        shifted = flat_cloth.copy()
        shifted.positions[:, 0] += 1.0
        with pytest.raises(OutOfWorkspaceError):
            render_topdown(shifted, CameraConfig())

    def test_stacked_layers_keep_top_depth(self, flat_cloth, params, cam):
        ci = flat_cloth.corner_indices()
        folded, _ = execute_pick_place(
            flat_cloth,
            flat_cloth.positions[ci[0]].copy(),
            flat_cloth.positions[ci[3]].copy(),
            params,
        )
        obs = render_topdown(folded, cam)
        oracle = splat_oracle(folded, cam)
        assert np.array_equal(obs.depth, oracle)
        # where two layers overlap no pixel may carry the bottom layer
        pos = folded.positions
        mids = 0.5 * (pos[folded.edge_i] + pos[folded.edge_j])
        samples = np.concatenate([pos, mids], axis=0)
        radius = folded.rest_spacing / 2.0
        layered = 0
        for v in range(0, cam.height, 3):
            for u in range(0, cam.width, 3):
                px, py = cam.pixel_to_world(u, v)
                d2 = (samples[:, 0] - px) ** 2 + (samples[:, 1] - py) ** 2
                zs = samples[d2 <= radius * radius, 2]
                if len(zs) and zs.max() - zs.min() > folded.thickness / 2.0:
                    layered += 1
                    assert obs.depth[v, u] == zs.max()
        assert layered > 0  # the fold really produced overlapping layers

    def test_matches_bruteforce_oracle_on_random_states(self, flat_cloth):
        cam = CameraConfig(width=32, height=32)
        rng = np.random.default_rng(5)
        for _ in range(8):
            state = flat_cloth.copy()
            state.positions += rng.normal(scale=0.01, size=state.positions.shape)
            state.positions[:, 2] = np.abs(state.positions[:, 2])
            obs = render_topdown(state, cam)
            assert np.array_equal(obs.depth, splat_oracle(state, cam))


class TestPointCloud:
    def test_empty_mask_empty_cloud(self, cam):
        obs = observation_from_depth(np.zeros((64, 64)), height_threshold=0.0015)
        assert len(extract_pointcloud(obs, cam)) == 0

    def test_single_center_pixel_round_trip(self, cam):
        depth = np.zeros((64, 64))
        depth[32, 32] = 0.05
        obs = observation_from_depth(depth, height_threshold=0.0015)
        cloud = extract_pointcloud(obs, cam)
        assert len(cloud) == 1
        x, y = cam.pixel_to_world(32, 32)
        assert np.allclose(cloud.points[0], [x, y, 0.05])

    def test_flat_cloth_points_at_thickness(self, flat_cloth, cam):
        obs = render_topdown(flat_cloth, cam)
        cloud = extract_pointcloud(obs, cam)
        assert len(cloud) == coverage(obs.mask)
        assert np.all(np.abs(cloud.points[:, 2] - flat_cloth.thickness) < 1e-6)

    def test_count_always_matches_mask(self, crumpled_states, cam):
        for state in crumpled_states:
            obs = render_topdown(state, cam)
            assert len(extract_pointcloud(obs, cam)) == coverage(obs.mask)

    def test_points_backproject_into_mask(self, flat_cloth, cam):
        obs = render_topdown(flat_cloth, cam)
        cloud = extract_pointcloud(obs, cam)
        for x, y, _ in cloud.points[:: max(1, len(cloud) // 25)]:
            u, v = cam.world_to_pixel(x, y)
            assert obs.mask[v, u]


class TestPngIO:
    def test_depth_png_round_trip_millimeter_quantized(self, flat_cloth, cam, tmp_path):
        obs = render_topdown(flat_cloth, cam)
        path = tmp_path / "obs.png"
        save_observation(path, obs)
        loaded = load_observation(path, height_threshold=flat_cloth.thickness / 2.0)
        assert np.abs(loaded.depth - obs.depth).max() <= 0.0005 + 1e-12
        assert np.array_equal(loaded.mask, obs.mask)

    def test_mask_png_round_trip_exact(self, flat_mask):
        img = mask_to_image(flat_mask)
        assert np.array_equal(image_to_mask(img), flat_mask)

    def test_depth_image_is_16bit(self, flat_cloth, cam):
        img = depth_to_image(render_topdown(flat_cloth, cam).depth)
        assert img.mode == "I;16"
        back = image_to_depth(img)
        assert back.max() > 0


class TestDownsample:
    def test_shapes_and_mask_semantics(self, flat_cloth, cam):
        obs = render_topdown(flat_cloth, cam)
        small = downsample(obs, 2)
        assert small.depth.shape == (32, 32)
        expected_mask = obs.mask.reshape(32, 2, 32, 2).any(axis=(1, 3))
        assert np.array_equal(small.mask, expected_mask)

    def test_indivisible_factor_rejected(self, flat_cloth, cam):
        obs = render_topdown(flat_cloth, cam)
        with pytest.raises(InvalidArgumentError):
            downsample(obs, 3)


def test_observation_dim_mismatch_rejected():
    with pytest.raises(InvalidArgumentError):
        Observation(depth=np.zeros((4, 4)), mask=np.zeros((5, 4), dtype=bool))
