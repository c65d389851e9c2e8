"""Action representation, pick-point Gaussian encoding and the joint
(pick, place) argmax selection over candidate place maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraConfig, Observation
from .errors import InvalidArgumentError, NoClothVisibleError


@dataclass
class ActionPair:
    """Pick/place in observation pixels plus world coordinates.

    ``score`` is the winning place probability; ``rotation`` is the gripper
    rotation vector, filled in by the grasp-frame module.
    """

    pick_px: tuple[int, int]
    place_px: tuple[int, int]
    pick_w: np.ndarray
    place_w: np.ndarray
    score: float = 0.0
    rotation: np.ndarray | None = None

    def to_record(self) -> dict:
        return {
            "pick_px": list(self.pick_px),
            "place_px": list(self.place_px),
            "pick_w": [float(v) for v in self.pick_w],
            "place_w": [float(v) for v in self.place_w],
            "score": float(self.score),
            "rotation": None if self.rotation is None else [float(v) for v in self.rotation],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ActionPair":
        return cls(
            pick_px=tuple(rec["pick_px"]),
            place_px=tuple(rec["place_px"]),
            pick_w=np.asarray(rec["pick_w"], dtype=np.float64),
            place_w=np.asarray(rec["place_w"], dtype=np.float64),
            score=rec.get("score", 0.0),
            rotation=None if rec.get("rotation") is None else np.asarray(rec["rotation"]),
        )


def encode_pick(pick_px: tuple[int, int], sigma: float = 2.0, grid: int = 32) -> np.ndarray:
    """Unnormalized 2-D Gaussian heatmap peaking at 1.0 on the pick pixel."""
    u0, v0 = pick_px
    if not (0 <= u0 < grid and 0 <= v0 < grid):
        raise InvalidArgumentError(f"pick pixel {pick_px} outside {grid}x{grid} grid")
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be > 0")
    us = np.arange(grid, dtype=np.float64)
    vs = np.arange(grid, dtype=np.float64)
    du2 = (us - u0) ** 2
    dv2 = (vs - v0) ** 2
    return np.exp(-(dv2[:, None] + du2[None, :]) / (2.0 * sigma * sigma))


def select_best(place_maps: list[np.ndarray]) -> tuple[int, tuple[int, int], float]:
    """Joint argmax over candidates and pixels.

    Returns (candidate index, (u, v) place pixel, winning probability).
    Ties break to the lowest candidate index, then row-major lowest pixel.
    """
    if not place_maps:
        raise InvalidArgumentError("no candidate place maps")
    best_i, best_px, best_p = 0, (0, 0), -np.inf
    for i, pm in enumerate(place_maps):
        flat = int(np.argmax(pm))  # first occurrence = row-major lowest pixel
        v, u = divmod(flat, pm.shape[1])
        p = float(pm[v, u])
        if p > best_p:
            best_i, best_px, best_p = i, (u, v), p
    return best_i, best_px, best_p


def sample_pick_candidates(mask: np.ndarray, count: int, seed: int) -> list[tuple[int, int]]:
    """Uniform sample (without replacement) of mask-true pixels as (u, v)."""
    vs, us = np.nonzero(mask)
    if len(us) == 0:
        raise NoClothVisibleError("cannot sample pick candidates from an empty mask")
    rng = np.random.default_rng(seed)
    take = min(count, len(us))
    chosen = rng.choice(len(us), size=take, replace=False)
    return [(int(us[k]), int(vs[k])) for k in chosen]


def pixel_to_world_action(
    pick_px: tuple[int, int],
    place_px: tuple[int, int],
    obs: Observation,
    cam: CameraConfig,
    score: float = 0.0,
    ground_z: float = 0.003,
) -> ActionPair:
    """Build an ActionPair from observation-space pixels; the pick's world z
    comes from the rendered depth, the place lands at table rest height."""
    px, py = cam.pixel_to_world(*pick_px)
    qx, qy = cam.pixel_to_world(*place_px)
    pick_w = np.array([px, py, max(float(obs.depth[pick_px[1], pick_px[0]]), ground_z)])
    place_w = np.array([qx, qy, ground_z])
    return ActionPair(pick_px=pick_px, place_px=place_px, pick_w=pick_w, place_w=place_w, score=score)
