"""Square-cloth task definitions: fold scripts and canonical goal masks.

Fold scripts are sequences of (pick corner, place target) picked from the
cloth's ground-truth corner particles; ``canonical_goal`` renders the mask a
scripted fold run produces from a flat start.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .camera import CameraConfig, render_topdown
from .errors import InvalidArgumentError
from .sim import ClothState, SimParams, default_cloth, execute_pick_place, settle

TASKS = ("SMOOTH", "SF", "DIF", "DTF", "FCIF")

# tasks whose goal admits several equally valid final orientations
SYMMETRIC_TASKS = ("DTF",)

# corner order: 0=(0,0)  1=(0,C-1)  2=(R-1,0)  3=(R-1,C-1); "center" is the
# canonical cloth center.  One tuple per action: (pick, place).
FOLD_SCRIPTS: dict[str, tuple[tuple[int | str, int | str], ...]] = {
    "SMOOTH": (),
    "SF": ((0, 3),),
    "DIF": ((0, "center"), (3, "center")),
    "DTF": ((0, 3), (1, 2)),
    "FCIF": ((0, "center"), (3, "center"), (1, "center"), (2, "center")),
}


def check_task(task: str) -> str:
    if task not in TASKS:
        raise InvalidArgumentError(f"unknown task {task!r}; expected one of {TASKS}")
    return task


def fold_action_count(task: str) -> int:
    return len(FOLD_SCRIPTS[check_task(task)])


def _corner_position(state: ClothState, which: int | str, canonical: bool) -> np.ndarray:
    pos = state.canonical_positions if canonical else state.positions
    if which == "center":
        corners = pos[state.corner_indices()]
        return corners.mean(axis=0)
    return pos[state.corner_indices()[int(which)]].copy()


def fold_step_points(state: ClothState, task: str, step: int) -> tuple[np.ndarray, np.ndarray]:
    """World pick/place points for fold step ``step`` of ``task``.

    Picks track the corner particle's current position; places aim at the
    canonical location of the target (opposite corner or cloth center).
    """
    script = FOLD_SCRIPTS[check_task(task)]
    if not 0 <= step < len(script):
        raise InvalidArgumentError(f"task {task} has {len(script)} fold steps, got step {step}")
    pick_ref, place_ref = script[step]
    pick = _corner_position(state, pick_ref, canonical=False)
    place = _corner_position(state, place_ref, canonical=True)
    return pick, place


def run_fold_script(state: ClothState, task: str, params: SimParams) -> ClothState:
    """Apply the full fold script to (a copy of) ``state``."""
    work, _ = settle(state, params)
    for step in range(fold_action_count(task)):
        pick, place = fold_step_points(work, task, step)
        work, _ = execute_pick_place(work, pick, place, params)
    return work


@lru_cache(maxsize=32)
def _goal_mask_cached(task: str, rows: int, cols: int, spacing: float,
                      params: SimParams, cam: CameraConfig) -> np.ndarray:
    cloth = default_cloth(rows, cols, spacing, cam.extent)
    final = run_fold_script(cloth, task, params)
    mask = render_topdown(final, cam).mask
    mask.setflags(write=False)
    return mask


def canonical_goal(
    task: str,
    cloth_dims: tuple[int, int, float] = (17, 17, 0.02),
    params: SimParams | None = None,
    cam: CameraConfig | None = None,
) -> np.ndarray:
    """Goal mask for ``task``: the scripted fold applied to a flat cloth and
    rendered (the flat mask itself for SMOOTH)."""
    check_task(task)
    rows, cols, spacing = cloth_dims
    return _goal_mask_cached(
        task, rows, cols, spacing, params or SimParams(), cam or CameraConfig()
    ).copy()
