import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clothfold.errors import InvalidArgumentError, InvalidReferenceError
from clothfold.metrics import (
    classify_difficulty,
    coverage,
    delta_coverage,
    iou,
    isc,
    success,
)

masks_8x8 = arrays(bool, (8, 8), elements=st.booleans())


class TestCoverage:
    def test_empty(self):
        assert coverage(np.zeros((64, 64), dtype=bool)) == 0

    def test_full(self):
        assert coverage(np.ones((64, 64), dtype=bool)) == 4096

    @given(mask=masks_8x8)
    @settings(max_examples=30)
    def test_matches_bruteforce_recount(self, mask):
        assert coverage(mask) == sum(bool(v) for v in mask.ravel())


class TestIsc:
    def test_identical_is_one(self):
        ref = np.ones((16, 16), dtype=bool)
        assert isc(ref, ref) == 1.0

    def test_half_covered(self):
        ref = np.ones((16, 16), dtype=bool)
        half = ref.copy()
        half[8:] = False
        assert isc(half, ref) == 0.5

    def test_zero_reference_rejected(self):
        with pytest.raises(InvalidReferenceError):
            isc(np.ones((4, 4), dtype=bool), np.zeros((4, 4), dtype=bool))


class TestIou:
    def test_identical(self):
        m = np.zeros((8, 8), dtype=bool)
        m[2:5, 2:5] = True
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((8, 8), dtype=bool)
        b = np.zeros((8, 8), dtype=bool)
        a[0, 0] = True
        b[7, 7] = True
        assert iou(a, b) == 0.0

    def test_hand_counted_example(self):
        # |A∩B| = 2, |A∪B| = 6
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = a[0, 1] = a[0, 2] = a[1, 0] = True
        b[0, 1] = b[0, 2] = b[2, 2] = b[3, 3] = True
        assert iou(a, b) == pytest.approx(2 / 6)

    def test_both_empty_defined_as_one(self):
        z = np.zeros((4, 4), dtype=bool)
        assert iou(z, z) == 1.0

    def test_dim_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            iou(np.zeros((4, 4), dtype=bool), np.zeros((4, 5), dtype=bool))

    @given(a=masks_8x8, b=masks_8x8)
    @settings(max_examples=50)
    def test_symmetry_and_range(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0


class TestDeltaCoverage:
    def test_equal_masks_zero(self):
        ref = np.ones((8, 8), dtype=bool)
        assert delta_coverage(ref, ref, ref) == 0.0

    def test_published_smoothing_row(self):
        # 64.3% -> 97.7% coverage is a 33.4% gain
        ref = np.zeros((40, 40), dtype=bool)
        ref.ravel()[:1000] = True
        initial = np.zeros((40, 40), dtype=bool)
        initial.ravel()[:643] = True
        final = np.zeros((40, 40), dtype=bool)
        final.ravel()[:977] = True
        assert delta_coverage(initial, final, ref) == pytest.approx(0.334)

    @given(a=masks_8x8, b=masks_8x8)
    @settings(max_examples=30)
    def test_recomputed_independently(self, a, b):
        ref = np.ones((8, 8), dtype=bool)
        assert delta_coverage(a, b, ref) == pytest.approx(
            (coverage(b) - coverage(a)) / coverage(ref)
        )


class TestDifficulty:
    @pytest.mark.parametrize(
        "ratio,expected",
        [(0.75, "easy"), (0.5, "medium"), (0.3, "hard"), (0.7, "medium"), (0.71, "easy"), (0.49, "hard")],
    )
    def test_thresholds(self, ratio, expected):
        assert classify_difficulty(ratio) == expected

    @given(st.floats(0.0, 1.5))
    @settings(max_examples=100)
    def test_total_and_monotone(self, r):
        order = {"hard": 0, "medium": 1, "easy": 2}
        assert classify_difficulty(r) in order
        assert order[classify_difficulty(r)] <= order[classify_difficulty(min(r + 0.05, 1.5))]


class TestSuccess:
    def test_goal_vs_goal(self):
        goal = np.zeros((16, 16), dtype=bool)
        goal[4:12, 4:12] = True
        assert success(goal, goal)

    def test_quarter_area_fails(self):
        goal = np.zeros((16, 16), dtype=bool)
        goal[0:8, 0:8] = True
        full = np.ones((16, 16), dtype=bool)
        assert not success(full, goal)  # IoU = 0.25 < 0.8

    def test_symmetric_match_via_rotation(self):
        goal = np.zeros((16, 16), dtype=bool)
        goal[0:8, :] = True  # top half
        rotated = np.rot90(goal)
        assert not success(rotated, goal, symmetric=False)
        assert success(rotated, goal, symmetric=True)
