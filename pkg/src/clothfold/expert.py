"""Ground-truth-informed scripted experts.

The fold phase replays the task script on the cloth's corner particles; the
smoothing phase repeatedly drags the most-displaced visible particle back to
its canonical flattened position.  Used to synthesize demonstrations and to
calibrate the success threshold.
"""

from __future__ import annotations

import numpy as np

from .actions import ActionPair
from .camera import CameraConfig, Observation, render_topdown
from .errors import InvalidArgumentError
from .metrics import isc
from .sim import ClothState
from .tasks import check_task, fold_action_count, fold_step_points

SMOOTH_SWITCH_ISC = 0.955


def visible_particles(state: ClothState, obs: Observation, cam: CameraConfig) -> np.ndarray:
    """Indices of particles lying on the rendered top surface of their pixel."""
    out = []
    for p in range(state.num_particles):
        x, y, z = state.positions[p]
        u, v = cam.world_to_pixel(x, y)
        if cam.in_bounds(u, v) and obs.depth[v, u] - z <= state.thickness / 2.0:
            out.append(p)
    return np.asarray(out, dtype=np.int64)


def smoothing_action(state: ClothState, obs: Observation, cam: CameraConfig) -> ActionPair:
    """Drag the visible particle farthest from its canonical spot home."""
    vis = visible_particles(state, obs, cam)
    if len(vis) == 0:
        raise InvalidArgumentError("no visible particles to smooth")
    disp = np.linalg.norm(
        state.positions[vis, :2] - state.canonical_positions[vis, :2], axis=1
    )
    p = int(vis[int(np.argmax(disp))])
    pick_w = state.positions[p].copy()
    place_w = state.canonical_positions[p].copy()
    return _to_action(pick_w, place_w, cam)


def _to_action(pick_w: np.ndarray, place_w: np.ndarray, cam: CameraConfig) -> ActionPair:
    return ActionPair(
        pick_px=cam.world_to_pixel(pick_w[0], pick_w[1]),
        place_px=cam.world_to_pixel(place_w[0], place_w[1]),
        pick_w=pick_w,
        place_w=place_w,
        score=1.0,
    )


def fold_action(state: ClothState, task: str, step: int, cam: CameraConfig) -> ActionPair:
    pick_w, place_w = fold_step_points(state, task, step)
    return _to_action(pick_w, place_w, cam)


class ScriptedExpert:
    """Stateful per-episode expert: smooth until nearly flat, then run the
    fold script.  ``step(state)`` returns None once the script is done."""

    def __init__(
        self,
        task: str,
        cam: CameraConfig | None = None,
        smooth_ref_mask: np.ndarray | None = None,
        switch_isc: float = SMOOTH_SWITCH_ISC,
    ):
        self.task = check_task(task)
        self.cam = cam or CameraConfig()
        self.smooth_ref_mask = smooth_ref_mask
        self.switch_isc = switch_isc
        self.fold_step = 0
        self.folding_started = False

    def phase(self, state: ClothState, obs: Observation) -> str:
        # folding drops coverage by design, so never fall back to smoothing
        if self.folding_started or self.smooth_ref_mask is None:
            return "fold"
        return "smooth" if isc(obs.mask, self.smooth_ref_mask) < self.switch_isc else "fold"

    def step(self, state: ClothState, obs: Observation | None = None) -> ActionPair | None:
        obs = obs if obs is not None else render_topdown(state, self.cam)
        if self.task == "SMOOTH":
            if self.smooth_ref_mask is not None and isc(obs.mask, self.smooth_ref_mask) >= self.switch_isc:
                return None
            return smoothing_action(state, obs, self.cam)
        if self.phase(state, obs) == "smooth":
            return smoothing_action(state, obs, self.cam)
        if self.fold_step >= fold_action_count(self.task):
            return None
        self.folding_started = True
        action = fold_action(state, self.task, self.fold_step, self.cam)
        self.fold_step += 1
        return action
