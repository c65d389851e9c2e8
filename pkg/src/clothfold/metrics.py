"""Mask-based evaluation metrics: coverage, smooth-coverage ratio, IoU,
coverage delta, difficulty classes and goal-match success."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError, InvalidReferenceError

SUCCESS_IOU_DEFAULT = 0.8


def coverage(mask: np.ndarray) -> int:
    """Number of true pixels."""
    return int(np.count_nonzero(mask))


def isc(mask: np.ndarray, smooth_ref_mask: np.ndarray) -> float:
    """Coverage relative to the fully smoothed cloth mask."""
    ref = coverage(smooth_ref_mask)
    if ref == 0:
        raise InvalidReferenceError("smooth reference mask has zero coverage")
    return coverage(mask) / ref


def iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    if mask_a.shape != mask_b.shape:
        raise InvalidArgumentError(f"mask dims differ: {mask_a.shape} vs {mask_b.shape}")
    a = mask_a.astype(bool)
    b = mask_b.astype(bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def delta_coverage(initial_mask: np.ndarray, final_mask: np.ndarray, ref_mask: np.ndarray) -> float:
    """Final minus initial coverage, both as ratios of the smooth reference."""
    return isc(final_mask, ref_mask) - isc(initial_mask, ref_mask)


def classify_difficulty(initial_coverage_ratio: float) -> str:
    """Coverage > 0.7 is easy, < 0.5 is hard, boundaries fall to medium."""
    if initial_coverage_ratio > 0.7:
        return "easy"
    if initial_coverage_ratio < 0.5:
        return "medium" if initial_coverage_ratio == 0.5 else "hard"
    return "medium"


def goal_variants(goal_mask: np.ndarray, symmetric: bool) -> list[np.ndarray]:
    if not symmetric:
        return [goal_mask]
    return [np.rot90(goal_mask, k) for k in range(4)]


def success(final_mask: np.ndarray, goal_mask: np.ndarray, threshold: float = SUCCESS_IOU_DEFAULT,
            symmetric: bool = False) -> bool:
    """IoU against the goal (or its rotations for symmetric tasks) >= threshold."""
    best = max(iou(final_mask, g) for g in goal_variants(goal_mask, symmetric))
    return best >= threshold
