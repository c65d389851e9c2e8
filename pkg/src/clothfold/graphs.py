"""Visible-connectivity graph construction from point clouds.

Voxelize the cloud on a grid anchored at the workspace origin, connect
centroids closer than a radius (strict inequality), and label candidate edges
against the simulator's ground-truth mesh for classifier training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraConfig, Observation, PointCloud, extract_pointcloud
from .errors import EmptyInputError, InvalidArgumentError
from .sim import EDGE_SHEAR, EDGE_STRUCTURAL, ClothState

DEFAULT_VOXEL_SIZE = 0.02  # = default cloth rest spacing
DEFAULT_RADIUS = 0.03  # 1.5 * voxel: keeps 4-neighbors and diagonals, drops 2-hops


@dataclass
class VoxelNodes:
    centroids: np.ndarray  # (N, 3)
    voxel_size: float
    member_counts: np.ndarray  # (N,)
    source_pixel_sets: list[np.ndarray]  # cloud indices per node
    voxel_keys: np.ndarray  # (N, 3) integer grid coordinates
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __len__(self) -> int:
        return self.centroids.shape[0]


@dataclass
class VisibilityGraph:
    nodes: VoxelNodes
    nearby_edges: np.ndarray  # (M, 2) int, i < j
    radius: float
    mesh_edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    mesh_probabilities: np.ndarray = field(default_factory=lambda: np.empty(0))


def voxelize(cloud: PointCloud, voxel_size: float,
             origin: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> VoxelNodes:
    """Group points into cubes of edge ``voxel_size`` anchored at ``origin``;
    each occupied cube becomes a node at the member centroid.

    Node order is the lexicographic order of the integer voxel keys, so node
    identity is deterministic given (cloud, size, origin).
    """
    if voxel_size <= 0:
        raise InvalidArgumentError("voxel size must be > 0")
    pts = cloud.points
    if pts.shape[0] == 0:
        raise EmptyInputError("cannot voxelize an empty point cloud")
    keys = np.floor((pts - np.asarray(origin)) / voxel_size).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    boundaries = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
    groups = np.split(order, boundaries)
    centroids = np.stack([pts[g].mean(axis=0) for g in groups])
    counts = np.array([len(g) for g in groups], dtype=np.int64)
    node_keys = np.stack([sorted_keys[0] if i == 0 else sorted_keys[b]
                          for i, b in enumerate(np.concatenate([[0], boundaries]))])
    return VoxelNodes(
        centroids=centroids,
        voxel_size=voxel_size,
        member_counts=counts,
        source_pixel_sets=[g.copy() for g in groups],
        voxel_keys=node_keys,
        origin=origin,
    )


def nearby_edges(nodes: VoxelNodes, radius: float) -> np.ndarray:
    """All node pairs (i < j) with centroid distance strictly below
    ``radius``, found with a spatial hash; ordered lexicographically."""
    if radius <= 0:
        raise InvalidArgumentError("radius must be > 0")
    pts = nodes.centroids
    n = pts.shape[0]
    cells: dict[tuple[int, int, int], list[int]] = {}
    keys = np.floor(pts / radius).astype(np.int64)
    for idx in range(n):
        cells.setdefault((int(keys[idx, 0]), int(keys[idx, 1]), int(keys[idx, 2])), []).append(idx)
    r2 = radius * radius
    found_i: list[int] = []
    found_j: list[int] = []
    for i in range(n):
        kx, ky, kz = keys[i]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = cells.get((int(kx) + dx, int(ky) + dy, int(kz) + dz))
                    if bucket is None:
                        continue
                    for j in bucket:
                        if j <= i:
                            continue
                        d = pts[i] - pts[j]
                        if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < r2:
                            found_i.append(i)
                            found_j.append(j)
    if not found_i:
        return np.empty((0, 2), dtype=np.int64)
    edges = np.stack([np.asarray(found_i, dtype=np.int64), np.asarray(found_j, dtype=np.int64)], axis=1)
    return edges[np.lexsort((edges[:, 1], edges[:, 0]))]


def nearest_particles(points: np.ndarray, state: ClothState) -> np.ndarray:
    """Index of the closest particle for every point (ties to lowest index)."""
    out = np.empty(points.shape[0], dtype=np.int64)
    for k in range(points.shape[0]):
        d = np.linalg.norm(state.positions - points[k][None, :], axis=1)
        out[k] = int(np.argmin(d))
    return out


def oracle_mesh_labels(
    nodes: VoxelNodes,
    cloud: PointCloud,
    edges: np.ndarray,
    state: ClothState,
    provenance_tol: float | None = None,
) -> np.ndarray:
    """Ground-truth labels for candidate edges.

    Every cloud point is attributed to its nearest particle; an edge is
    mesh-true iff some attributed particle pair across the two voxels is
    connected by a structural or shear spring.
    """
    pts = cloud.points
    tol = provenance_tol if provenance_tol is not None else 1.5 * state.rest_spacing
    owners = nearest_particles(pts, state)
    dmin = np.linalg.norm(state.positions[owners] - pts, axis=1)
    if dmin.max() > tol:
        raise InvalidArgumentError(
            f"point cloud does not match state: nearest-particle distance {dmin.max():.4f} > {tol:.4f}"
        )
    n = state.num_particles
    adj_ss = np.zeros((n, n), dtype=bool)
    keep = np.isin(state.edge_class, (EDGE_STRUCTURAL, EDGE_SHEAR))
    adj_ss[state.edge_i[keep], state.edge_j[keep]] = True
    adj_ss[state.edge_j[keep], state.edge_i[keep]] = True
    particle_sets = [np.unique(owners[members]) for members in nodes.source_pixel_sets]
    labels = np.zeros(edges.shape[0], dtype=bool)
    for k, (a, b) in enumerate(edges):
        labels[k] = bool(adj_ss[np.ix_(particle_sets[int(a)], particle_sets[int(b)])].any())
    return labels


def build_graph(
    obs: Observation,
    cam: CameraConfig,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    radius: float = DEFAULT_RADIUS,
) -> tuple[VisibilityGraph, PointCloud]:
    """Observation -> point cloud -> voxel nodes -> nearby edges."""
    cloud = extract_pointcloud(obs, cam)
    nodes = voxelize(cloud, voxel_size)
    edges = nearby_edges(nodes, radius)
    return VisibilityGraph(nodes=nodes, nearby_edges=edges, radius=radius), cloud
