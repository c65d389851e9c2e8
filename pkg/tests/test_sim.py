import numpy as np
import pytest

from clothfold.camera import CameraConfig, render_topdown
from clothfold.errors import GraspMissError, InvalidArgumentError
from clothfold.metrics import coverage
from clothfold.sim import (
    EDGE_BEND,
    EDGE_SHEAR,
    EDGE_STRUCTURAL,
    SimParams,
    crumple,
    default_cloth,
    execute_pick_place,
    init_cloth,
    mechanical_energy,
    settle,
)


class TestInitCloth:
    def test_smallest_grid_by_hand(self):
        state = init_cloth(2, 2, 0.1)
        assert state.num_particles == 4
        xy = {tuple(np.round(p, 6)) for p in state.positions[:, :2]}
        assert xy == {(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (0.1, 0.1)}
        counts = np.bincount(state.edge_class, minlength=3)
        assert counts[EDGE_STRUCTURAL] == 4
        assert counts[EDGE_SHEAR] == 2
        assert counts[EDGE_BEND] == 0

    def test_default_grid_span(self):
        state = init_cloth(17, 17, 0.02)
        assert state.num_particles == 289
        span = state.positions.max(axis=0) - state.positions.min(axis=0)
        assert np.allclose(span[:2], 0.32)

    def test_bend_count_matches_exhaustive_two_hop_enumeration(self):
        rows, cols = 3, 3
        state = init_cloth(rows, cols, 0.05)
        # oracle: enumerate all same-row / same-column pairs exactly 2 apart
        expected = 0
        for a in range(rows * cols):
            for b in range(a + 1, rows * cols):
                ra, ca = divmod(a, cols)
                rb, cb = divmod(b, cols)
                if (ra == rb and abs(ca - cb) == 2) or (ca == cb and abs(ra - rb) == 2):
                    expected += 1
        assert expected == 6
        assert int((state.edge_class == EDGE_BEND).sum()) == expected

    def test_invalid_dimensions(self):
        with pytest.raises(InvalidArgumentError):
            init_cloth(1, 5, 0.02)
        with pytest.raises(InvalidArgumentError):
            init_cloth(5, 5, 0.0)

    def test_velocities_zero_and_z_at_thickness(self):
        state = init_cloth(5, 5, 0.02, thickness=0.003)
        assert np.all(state.velocities == 0.0)
        assert np.all(state.positions[:, 2] == 0.003)

    def test_mesh_edges_symmetric_no_self_loops(self):
        state = init_cloth(4, 4, 0.02)
        edges = state.mesh_edges_gt
        assert all((j, i) in edges for i, j in edges)
        assert all(i != j for i, j in edges)


class TestSettle:
    def test_flat_cloth_is_fixed_point(self, flat_cloth, params):
        again, report = settle(flat_cloth, params)
        assert report.converged
        assert np.abs(again.positions - flat_cloth.positions).max() < 1e-6

    def test_pinned_corner_holds_cloth_below_it(self, params):
        state = default_cloth()
        corner = state.corner_indices()[0]
        state.pinned[corner] = True
        state.positions[corner, 2] = 0.1
        settled, _ = settle(state, params)
        unpinned = ~settled.pinned
        assert np.all(settled.positions[unpinned, 2] <= 0.1 + 1e-6)

    def test_drop_recovers_flat_coverage(self, flat_cloth, flat_mask, params, cam):
        dropped = flat_cloth.copy()
        dropped.positions[:, 2] += 0.05
        settled, report = settle(dropped, params)
        assert report.converged
        ratio = coverage(render_topdown(settled, cam).mask) / coverage(flat_mask)
        assert ratio >= 0.95

    def test_no_table_penetration(self, crumpled_states, params):
        for state in crumpled_states:
            settled, _ = settle(state, params)
            assert settled.positions[:, 2].min() >= -1e-4


class TestEnergyAndStretch:
    @pytest.mark.slow
    def test_energy_non_increasing_on_seeded_states(self, flat_cloth, params):
        rng = np.random.default_rng(7)
        for _ in range(50):
            state = flat_cloth.copy()
            # smooth random displacement field plus a lift keeps the state
            # inside the solver's operating regime with zero external motion
            lift = rng.uniform(0.0, 0.04)
            state.positions[:, 2] += lift
            bump = rng.normal(scale=0.004, size=(state.num_particles, 3))
            state.positions += bump
            state.positions[:, 2] = np.maximum(state.positions[:, 2], params.ground_z)
            _, report = settle(state, params, record_energy=True)
            diffs = np.diff(np.asarray(report.energies))
            assert (diffs <= 1e-9).all(), f"energy increased by {diffs.max()}"

    def test_structural_springs_within_stretch_bound(self, crumpled_states, params):
        for state in crumpled_states:
            settled, _ = settle(state, params)
            mask = settled.edge_class == EDGE_STRUCTURAL
            lengths = np.linalg.norm(
                settled.positions[settled.edge_i[mask]] - settled.positions[settled.edge_j[mask]],
                axis=1,
            )
            assert (lengths / settled.edge_rest[mask]).max() <= 1.5

    def test_structural_rest_length_constant_over_episode(self, flat_cloth, params):
        before = flat_cloth.structural_rest_total()
        pick = flat_cloth.positions[flat_cloth.corner_indices()[0]].copy()
        place = flat_cloth.positions[flat_cloth.corner_indices()[3]].copy()
        after, _ = execute_pick_place(flat_cloth, pick, place, params)
        assert after.structural_rest_total() == before


class TestExecutePickPlace:
    def test_null_transport_returns_to_rest(self, flat_cloth, params):
        corner = flat_cloth.positions[flat_cloth.corner_indices()[0]].copy()
        after, _ = execute_pick_place(flat_cloth, corner, corner, params)
        resid = np.abs(after.positions - flat_cloth.positions).max()
        assert resid < 2 * params.settle_tol

    def test_diagonal_fold_halves_coverage(self, flat_cloth, flat_mask, params, cam):
        ci = flat_cloth.corner_indices()
        pick = flat_cloth.positions[ci[0]].copy()
        place = flat_cloth.positions[ci[3]].copy()
        folded, trajectory = execute_pick_place(flat_cloth, pick, place, params)
        ratio = coverage(render_topdown(folded, cam).mask) / coverage(flat_mask)
        assert 0.40 <= ratio <= 0.60
        assert len(trajectory) == 8

    def test_grasp_miss_when_far_from_cloth(self, flat_cloth, params):
        far = np.array([flat_cloth.positions[:, 0].max() + 1.0, 0.0, 0.0])
        with pytest.raises(GraspMissError):
            execute_pick_place(flat_cloth, far, far, params)

    def test_action_determinism_bitwise(self, flat_cloth, params):
        ci = flat_cloth.corner_indices()
        pick = flat_cloth.positions[ci[0]].copy()
        place = flat_cloth.positions[ci[3]].copy()
        a, _ = execute_pick_place(flat_cloth, pick, place, params)
        b, _ = execute_pick_place(flat_cloth, pick, place, params)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.velocities, b.velocities)


class TestCrumple:
    def test_zero_perturbations_is_identity(self, flat_cloth, params):
        out = crumple(flat_cloth, params, seed=3, num_perturbations=0)
        assert np.array_equal(out.positions, flat_cloth.positions)

    def test_same_seed_bitwise_identical(self, flat_cloth, params):
        a = crumple(flat_cloth, params, seed=11, num_perturbations=2)
        b = crumple(flat_cloth, params, seed=11, num_perturbations=2)
        assert np.array_equal(a.positions, b.positions)

    def test_negative_count_rejected(self, flat_cloth, params):
        with pytest.raises(InvalidArgumentError):
            crumple(flat_cloth, params, seed=0, num_perturbations=-1)

    @pytest.mark.slow
    def test_seed_sweep_reaches_all_difficulty_classes(self, flat_cloth, flat_mask, params, cam):
        # 100-seed sweep (the spec's own difficulty-class reachability check)
        ref = coverage(flat_mask)
        counts = {"easy": 0, "medium": 0, "hard": 0}
        for seed in range(100):
            state = crumple(flat_cloth, params, seed, 5)
            ratio = coverage(render_topdown(state, cam).mask) / ref
            if ratio > 0.7:
                counts["easy"] += 1
            elif ratio < 0.5:
                counts["hard"] += 1
            else:
                counts["medium"] += 1
        assert all(v > 0 for v in counts.values()), counts


def test_energy_helper_is_finite(flat_cloth, params):
    assert np.isfinite(mechanical_energy(flat_cloth, params))
