"""Deterministic quasi-static cloth simulator.

A rectangular particle grid connected by structural (4-neighbor), shear
(diagonal) and bend (2-hop) springs, relaxed by XPBD-style constraint
projection with heavy velocity damping.  Manipulation is a single primitive:
grasp a particle, lift, drag parallel to the table, lower, release, settle.

All randomness is injected through explicit seeds; identical inputs give
bitwise-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import simkernels
from .errors import GraspMissError, InvalidArgumentError, SimulationDivergedError

EDGE_STRUCTURAL = 0
EDGE_SHEAR = 1
EDGE_BEND = 2


@dataclass(frozen=True)
class SimParams:
    """Solver constants.  Stiffnesses are spring constants in N/m; ``damping``
    is an exponential velocity decay rate (1/s); ``friction`` is the fraction
    of tangential velocity removed per substep while touching the table."""

    gravity: float = 9.81
    stiffness_structural: float = 5000.0
    stiffness_shear: float = 20.0
    stiffness_bend: float = 0.3
    damping: float = 8.0
    friction: float = 0.45
    time_step: float = 0.02
    settle_tol: float = 0.0012
    max_settle_iters: int = 400
    substeps: int = 10
    solver_iters: int = 6
    particle_mass: float = 0.002
    thickness: float = 0.003
    lift_height: float = 0.035
    grasp_radius: float = 0.02
    drag_step: float = 0.005
    collide_xy: float = 0.012

    def validate(self, rest_spacing: float | None = None) -> None:
        for name in (
            "gravity",
            "stiffness_structural",
            "stiffness_shear",
            "stiffness_bend",
            "damping",
            "friction",
            "time_step",
            "settle_tol",
            "particle_mass",
            "thickness",
            "lift_height",
            "grasp_radius",
            "drag_step",
            "collide_xy",
        ):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"SimParams.{name} must be strictly positive")
        for name in ("max_settle_iters", "substeps", "solver_iters"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"SimParams.{name} must be >= 1")
        if rest_spacing is not None and not self.settle_tol < rest_spacing / 10.0:
            raise InvalidArgumentError(
                f"settle_tol {self.settle_tol} must be < rest_spacing/10 = {rest_spacing / 10.0}"
            )

    @property
    def ground_z(self) -> float:
        return self.thickness

    def compliance(self) -> tuple[float, float, float]:
        return (
            1.0 / self.stiffness_structural,
            1.0 / self.stiffness_shear,
            1.0 / self.stiffness_bend,
        )


@dataclass(eq=False)
class ClothState:
    """Particle grid state plus immutable ground-truth mesh connectivity.

    ``positions``/``velocities``/``pinned`` are owned per-instance; the edge
    arrays and canonical (flat) positions are shared between copies and must
    never be mutated.
    """

    rows: int
    cols: int
    rest_spacing: float
    thickness: float
    positions: np.ndarray
    velocities: np.ndarray
    pinned: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_class: np.ndarray
    edge_rest: np.ndarray
    canonical_positions: np.ndarray
    adjacency: np.ndarray = field(repr=False, default=None)

    @property
    def num_particles(self) -> int:
        return self.rows * self.cols

    def index(self, r: int, c: int) -> int:
        return r * self.cols + c

    def corner_indices(self) -> list[int]:
        """Corner particle indices in order (0,0), (0,C-1), (R-1,0), (R-1,C-1)."""
        return [0, self.cols - 1, (self.rows - 1) * self.cols, self.rows * self.cols - 1]

    def copy(self) -> "ClothState":
        return replace(
            self,
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            pinned=self.pinned.copy(),
        )

    @property
    def mesh_edges_gt(self) -> set[tuple[int, int]]:
        """Symmetric set of connected particle-index pairs (all spring classes)."""
        out = set()
        for i, j in zip(self.edge_i.tolist(), self.edge_j.tolist()):
            out.add((i, j))
            out.add((j, i))
        return out

    def edge_pairs(self, classes: tuple[int, ...] = (EDGE_STRUCTURAL, EDGE_SHEAR, EDGE_BEND)) -> np.ndarray:
        mask = np.isin(self.edge_class, classes)
        return np.stack([self.edge_i[mask], self.edge_j[mask]], axis=1)

    def structural_rest_total(self) -> float:
        return float(self.edge_rest[self.edge_class == EDGE_STRUCTURAL].sum())

    def connected(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])


@dataclass
class SettleReport:
    converged: bool
    iterations: int
    max_displacement: float
    energies: list[float] = field(default_factory=list)


def _build_edges(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ei, ej, ec = [], [], []

    def add(a, b, cls):
        ei.append(min(a, b))
        ej.append(max(a, b))
        ec.append(cls)

    for r in range(rows):
        for c in range(cols):
            idx = r * cols + c
            if c + 1 < cols:
                add(idx, idx + 1, EDGE_STRUCTURAL)
            if r + 1 < rows:
                add(idx, idx + cols, EDGE_STRUCTURAL)
            if r + 1 < rows and c + 1 < cols:
                add(idx, idx + cols + 1, EDGE_SHEAR)
                add(idx + 1, idx + cols, EDGE_SHEAR)
            if c + 2 < cols:
                add(idx, idx + 2, EDGE_BEND)
            if r + 2 < rows:
                add(idx, idx + 2 * cols, EDGE_BEND)
    return (
        np.asarray(ei, dtype=np.int64),
        np.asarray(ej, dtype=np.int64),
        np.asarray(ec, dtype=np.int64),
    )


def init_cloth(
    rows: int,
    cols: int,
    spacing: float,
    planar_pose: tuple[float, float, float] = (0.0, 0.0, 0.0),
    thickness: float = 0.003,
) -> ClothState:
    """Flat grid at ``z = thickness`` with zero velocity.

    ``planar_pose`` is (x, y, yaw): particle (0,0) lands at (x, y) and the
    grid axes are rotated by ``yaw`` around it.
    """
    if rows < 2 or cols < 2:
        raise InvalidArgumentError("rows and cols must be >= 2")
    if spacing <= 0:
        raise InvalidArgumentError("spacing must be > 0")
    x0, y0, yaw = planar_pose
    cos_t, sin_t = math.cos(yaw), math.sin(yaw)
    pos = np.zeros((rows * cols, 3), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            gx, gy = c * spacing, r * spacing
            idx = r * cols + c
            pos[idx, 0] = x0 + cos_t * gx - sin_t * gy
            pos[idx, 1] = y0 + sin_t * gx + cos_t * gy
            pos[idx, 2] = thickness
    edge_i, edge_j, edge_class = _build_edges(rows, cols)
    rest = np.linalg.norm(pos[edge_i] - pos[edge_j], axis=1)
    n = rows * cols
    adj = np.zeros((n, n), dtype=bool)
    adj[edge_i, edge_j] = True
    adj[edge_j, edge_i] = True
    return ClothState(
        rows=rows,
        cols=cols,
        rest_spacing=spacing,
        thickness=thickness,
        positions=pos,
        velocities=np.zeros_like(pos),
        pinned=np.zeros(n, dtype=bool),
        edge_i=edge_i,
        edge_j=edge_j,
        edge_class=edge_class,
        edge_rest=rest,
        canonical_positions=pos.copy(),
        adjacency=adj,
    )


def centered_pose(rows: int, cols: int, spacing: float, extent: float = 1.0) -> tuple[float, float, float]:
    """Axis-aligned pose that centers the cloth in the workspace, snapped so
    particles land on voxel centers of a grid with edge ``spacing`` anchored
    at the workspace origin (keeps voxel node identity stable across frames)."""
    span_x, span_y = (cols - 1) * spacing, (rows - 1) * spacing
    off_x = (math.floor(((extent - span_x) / 2.0) / spacing) + 0.5) * spacing
    off_y = (math.floor(((extent - span_y) / 2.0) / spacing) + 0.5) * spacing
    return (off_x, off_y, 0.0)


def default_cloth(rows: int = 17, cols: int = 17, spacing: float = 0.02, extent: float = 1.0) -> ClothState:
    return init_cloth(rows, cols, spacing, centered_pose(rows, cols, spacing, extent))


def _compliance_per_edge(state: ClothState, params: SimParams) -> np.ndarray:
    comp = np.asarray(params.compliance())
    return comp[state.edge_class]


def collision_candidates(state: ClothState, r_query: float) -> tuple[np.ndarray, np.ndarray]:
    """Non-connected particle pairs within ``r_query`` in the xy plane,
    ordered row-major by (i, j).  Dense all-pairs scan; particle counts are
    small enough that this beats a hash grid."""
    pos = state.positions
    dx = pos[:, 0][:, None] - pos[:, 0][None, :]
    dy = pos[:, 1][:, None] - pos[:, 1][None, :]
    close = dx * dx + dy * dy < r_query * r_query
    close &= ~state.adjacency
    close &= np.tri(pos.shape[0], k=-1, dtype=bool).T  # keep i < j only
    out_i, out_j = np.nonzero(close)
    return out_i.astype(np.int64), out_j.astype(np.int64)


def mechanical_energy(state: ClothState, params: SimParams) -> float:
    """Kinetic + gravitational + elastic energy (springs at their nominal
    stiffness), measured from the table plane."""
    m = params.particle_mass
    ke = 0.5 * m * float((state.velocities**2).sum())
    pe = m * params.gravity * float((state.positions[:, 2] - params.ground_z).sum())
    stiff = np.asarray(
        [params.stiffness_structural, params.stiffness_shear, params.stiffness_bend]
    )[state.edge_class]
    lengths = np.linalg.norm(state.positions[state.edge_i] - state.positions[state.edge_j], axis=1)
    elastic = 0.5 * float((stiff * (lengths - state.edge_rest) ** 2).sum())
    return ke + pe + elastic


class _Engine:
    """Reusable buffers for stepping one state; not part of the public API."""

    def __init__(self, state: ClothState, params: SimParams):
        params.validate(state.rest_spacing)
        self.state = state
        self.params = params
        self.lam = np.zeros(state.edge_i.shape[0], dtype=np.float64)
        self.prev = np.empty_like(state.positions)
        self.alpha = _compliance_per_edge(state, params)
        self.r_query = params.collide_xy + 2.0 * state.rest_spacing
        self.invmass = np.where(state.pinned, 0.0, 1.0 / params.particle_mass)

    def refresh_pins(self) -> None:
        self.invmass = np.where(self.state.pinned, 0.0, 1.0 / self.params.particle_mass)

    def step(self) -> float:
        s, p = self.state, self.params
        coll_i, coll_j = collision_candidates(s, self.r_query)
        disp = simkernels.macro_step(
            s.positions,
            s.velocities,
            self.invmass,
            s.edge_i,
            s.edge_j,
            s.edge_rest,
            self.alpha,
            self.lam,
            coll_i,
            coll_j,
            p.substeps,
            p.time_step,
            p.solver_iters,
            p.gravity,
            p.damping,
            p.ground_z,
            p.friction,
            p.collide_xy,
            p.thickness,
            self.prev,
        )
        return float(disp)


def settle(
    state: ClothState,
    params: SimParams,
    record_energy: bool = False,
) -> tuple[ClothState, SettleReport]:
    """Step until the max per-particle displacement per step drops below
    ``settle_tol`` or ``max_settle_iters`` is hit."""
    work = state.copy()
    eng = _Engine(work, params)
    energies: list[float] = []
    if record_energy:
        energies.append(mechanical_energy(work, params))
    disp = math.inf
    converged = False
    iterations = 0
    for it in range(params.max_settle_iters):
        disp = eng.step()
        iterations = it + 1
        if not np.isfinite(work.positions).all():
            raise SimulationDivergedError("non-finite particle position", iteration=it)
        if record_energy:
            energies.append(mechanical_energy(work, params))
        if disp < params.settle_tol:
            converged = True
            break
    return work, SettleReport(converged, iterations, disp, energies)


def _nearest_particle(state: ClothState, point: np.ndarray) -> tuple[int, float]:
    d = np.linalg.norm(state.positions - point[None, :], axis=1)
    idx = int(np.argmin(d))
    return idx, float(d[idx])


def _segment_steps(a: np.ndarray, b: np.ndarray, step: float) -> int:
    return max(1, int(math.ceil(np.linalg.norm(b - a) / step))) if np.linalg.norm(b - a) > 0 else 0


def _transport(
    state: ClothState,
    params: SimParams,
    grasp_idx: int,
    target_xy: np.ndarray,
    lift_height: float,
    lower: bool = True,
    num_snapshots: int = 8,
) -> tuple[ClothState, list[ClothState]]:
    """Pin a particle, move it through lift / drag / (optional) lower,
    release and settle.  Returns the settled state plus evenly spaced
    snapshots of the motion."""
    work = state.copy()
    was_pinned = bool(work.pinned[grasp_idx])
    work.pinned[grasp_idx] = True
    eng = _Engine(work, params)

    start = work.positions[grasp_idx].copy()
    top = start.copy()
    top[2] = lift_height
    over = np.array([target_xy[0], target_xy[1], lift_height])
    down = np.array([target_xy[0], target_xy[1], params.ground_z])
    waypoints = [start, top, over] + ([down] if lower else [])

    legs = []
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        n_steps = _segment_steps(a, b, params.drag_step)
        for k in range(1, n_steps + 1):
            legs.append(a + (b - a) * (k / n_steps))
    total = len(legs)
    snap_at = {max(1, round(total * k / num_snapshots)) for k in range(1, num_snapshots + 1)}
    snapshots: list[ClothState] = []
    for step_no, point in enumerate(legs, start=1):
        work.positions[grasp_idx] = point
        work.velocities[grasp_idx] = 0.0
        eng.step()
        if not np.isfinite(work.positions).all():
            raise SimulationDivergedError("non-finite particle position", iteration=step_no)
        if step_no in snap_at:
            snapshots.append(work.copy())
    while len(snapshots) < num_snapshots:
        snapshots.append(work.copy())

    work.pinned[grasp_idx] = was_pinned
    settled, _ = settle(work, params)
    return settled, snapshots


def execute_pick_place(
    state: ClothState,
    pick_w: np.ndarray,
    place_w: np.ndarray,
    params: SimParams,
    grasp_radius: float | None = None,
) -> tuple[ClothState, list[ClothState]]:
    """Pick-lift-drag-release primitive.

    Grasps the particle nearest to ``pick_w`` (error if none within the grasp
    radius), lifts it to the configured height, drags it level to above
    ``place_w``, lowers, releases and settles.
    """
    pick_w = np.asarray(pick_w, dtype=np.float64)
    place_w = np.asarray(place_w, dtype=np.float64)
    radius = grasp_radius if grasp_radius is not None else (params.grasp_radius or state.rest_spacing)
    idx, dist = _nearest_particle(state, pick_w)
    if dist > radius:
        raise GraspMissError(
            f"no particle within grasp radius {radius:.4f} of pick point (nearest {dist:.4f})"
        )
    return _transport(state, params, idx, place_w[:2], params.lift_height, lower=True)


def crumple(
    state: ClothState,
    params: SimParams,
    seed: int,
    num_perturbations: int,
    target_box: tuple[float, float] = (0.25, 0.75),
) -> ClothState:
    """Seeded random short pick-move-drop perturbations (states stay
    physically reachable).  ``num_perturbations == 0`` returns the state
    unchanged."""
    if num_perturbations < 0:
        raise InvalidArgumentError("num_perturbations must be >= 0")
    work = state.copy()
    if num_perturbations == 0:
        return work
    rng = np.random.default_rng(seed)
    lo, hi = target_box
    # per-state strength so a seed sweep spans lightly wrinkled through
    # heavily crumpled configurations
    strength = rng.uniform(0.25, 1.0)
    for _ in range(num_perturbations):
        idx = int(rng.integers(0, work.num_particles))
        centroid = work.positions[:, :2].mean(axis=0)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        dist = rng.uniform(0.02, 0.14) * strength
        height = 0.015 + rng.uniform(0.005, 0.035) * strength
        target = centroid + dist * np.array([math.cos(angle), math.sin(angle)])
        target = np.clip(target, lo, hi)
        work, _ = _transport(work, params, idx, target, height, lower=False, num_snapshots=1)
    return work
