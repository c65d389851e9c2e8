"""Top-down orthographic rendering of the cloth and back-projection.

The camera maps a square workspace onto a pixel grid with an exact
pixel <-> world correspondence.  Rendering splats every particle and every
mesh-edge midpoint with a disk footprint of one rest spacing into a max-z
depth buffer, which gives self-occlusion for free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import simkernels
from .errors import InvalidArgumentError, OutOfWorkspaceError
from .sim import ClothState

DEPTH_SCALE = 1000.0  # PNG depth is stored in millimeters


@dataclass(frozen=True)
class CameraConfig:
    width: int = 64
    height: int = 64
    extent: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)
    table_depth: float = 0.0

    @property
    def cell(self) -> float:
        return self.extent / self.width

    def pixel_to_world(self, u: int, v: int) -> tuple[float, float]:
        """World coordinates of the pixel center (u = column, v = row)."""
        return (
            self.origin[0] + (u + 0.5) * self.cell,
            self.origin[1] + (v + 0.5) * (self.extent / self.height),
        )

    def world_to_pixel(self, x: float, y: float) -> tuple[int, int]:
        u = int(np.floor((x - self.origin[0]) / self.cell))
        v = int(np.floor((y - self.origin[1]) / (self.extent / self.height)))
        return u, v

    def in_bounds(self, u: int, v: int) -> bool:
        return 0 <= u < self.width and 0 <= v < self.height


@dataclass
class Observation:
    """Per-pixel height above the table plus the derived cloth mask."""

    depth: np.ndarray
    mask: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        if self.depth.shape != self.mask.shape:
            raise InvalidArgumentError("depth and mask must share dimensions")


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) world coordinates

    def __len__(self) -> int:
        return self.points.shape[0]


def render_topdown(state: ClothState, cam: CameraConfig) -> Observation:
    """Render cloth height into a max-z buffer; mask = height above the
    table by more than half the cloth thickness."""
    pos = state.positions
    lo = np.array(cam.origin)
    hi = lo + cam.extent
    if (pos[:, 0].min() < lo[0] or pos[:, 0].max() > hi[0]
            or pos[:, 1].min() < lo[1] or pos[:, 1].max() > hi[1]):
        raise OutOfWorkspaceError("cloth extends outside the camera workspace")

    mids = 0.5 * (pos[state.edge_i] + pos[state.edge_j])
    samples = np.concatenate([pos, mids], axis=0)
    depth = np.full((cam.height, cam.width), cam.table_depth, dtype=np.float64)
    simkernels.splat_zbuffer(
        np.ascontiguousarray(samples[:, 0]),
        np.ascontiguousarray(samples[:, 1]),
        np.ascontiguousarray(samples[:, 2]),
        state.rest_spacing / 2.0,
        cam.origin[0],
        cam.origin[1],
        cam.cell,
        depth,
    )
    threshold = state.thickness / 2.0
    mask = depth > cam.table_depth + threshold
    return Observation(depth=depth, mask=mask)


def extract_pointcloud(obs: Observation, cam: CameraConfig) -> PointCloud:
    """One point per mask-true pixel at the pixel's world (x, y, depth),
    in row-major pixel order."""
    vs, us = np.nonzero(obs.mask)
    xs = cam.origin[0] + (us + 0.5) * cam.cell
    ys = cam.origin[1] + (vs + 0.5) * (cam.extent / cam.height)
    zs = obs.depth[vs, us]
    return PointCloud(points=np.stack([xs, ys, zs], axis=1))


def downsample(obs: Observation, factor: int = 2) -> Observation:
    """Max-pool depth (top surface wins) and or-pool mask by ``factor``."""
    h, w = obs.depth.shape
    if h % factor or w % factor:
        raise InvalidArgumentError("grid not divisible by downsample factor")
    d = obs.depth.reshape(h // factor, factor, w // factor, factor).max(axis=(1, 3))
    m = obs.mask.reshape(h // factor, factor, w // factor, factor).any(axis=(1, 3))
    return Observation(depth=d, mask=m, timestamp=obs.timestamp)


def depth_to_image(depth: np.ndarray) -> Image.Image:
    """16-bit grayscale PNG payload, millimeter-scaled."""
    mm = np.clip(np.rint(depth * DEPTH_SCALE), 0, 65535).astype(np.uint16)
    return Image.frombytes("I;16", (mm.shape[1], mm.shape[0]), mm.tobytes())


def image_to_depth(img: Image.Image) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / DEPTH_SCALE


def mask_to_image(mask: np.ndarray) -> Image.Image:
    return Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L")


def image_to_mask(img: Image.Image) -> np.ndarray:
    return np.asarray(img) > 127


def observation_from_depth(depth: np.ndarray, height_threshold: float,
                           table_depth: float = 0.0, timestamp: float = 0.0) -> Observation:
    return Observation(depth=depth, mask=depth > table_depth + height_threshold, timestamp=timestamp)


def save_observation(path, obs: Observation) -> None:
    depth_to_image(obs.depth).save(path, format="PNG")


def load_observation(path, height_threshold: float, table_depth: float = 0.0) -> Observation:
    return observation_from_depth(image_to_depth(Image.open(path)), height_threshold, table_depth)
