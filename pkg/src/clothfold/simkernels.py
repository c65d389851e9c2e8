"""Hot inner loops of the cloth solver.

Plain-Python implementations over NumPy arrays, compiled with numba when the
``numba`` backend is active (see :mod:`clothfold.backend`).  Keep these free of
Python objects: arrays and scalars only, so the same source runs identically
under both backends.
"""

import math

import numpy as np

from .backend import jit_kernel


def _substep_solve(
    pos,
    vel,
    invmass,
    edge_i,
    edge_j,
    rest,
    alpha,
    lam,
    coll_i,
    coll_j,
    dt_s,
    n_iters,
    gravity,
    damp_factor,
    ground_z,
    friction,
    collide_xy,
    thickness,
    prev,
):
    n = pos.shape[0]
    m = edge_i.shape[0]
    mc = coll_i.shape[0]

    for p in range(n):
        prev[p, 0] = pos[p, 0]
        prev[p, 1] = pos[p, 1]
        prev[p, 2] = pos[p, 2]
        if invmass[p] > 0.0:
            vel[p, 2] -= gravity * dt_s
            vel[p, 0] *= damp_factor
            vel[p, 1] *= damp_factor
            vel[p, 2] *= damp_factor
            pos[p, 0] += vel[p, 0] * dt_s
            pos[p, 1] += vel[p, 1] * dt_s
            pos[p, 2] += vel[p, 2] * dt_s

    for e in range(m):
        lam[e] = 0.0

    dt2 = dt_s * dt_s
    for _ in range(n_iters):
        for e in range(m):
            i = edge_i[e]
            j = edge_j[e]
            wi = invmass[i]
            wj = invmass[j]
            wsum = wi + wj
            if wsum == 0.0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            dist = math.sqrt(dx * dx + dy * dy + dz * dz)
            if dist < 1e-12:
                continue
            c = dist - rest[e]
            at = alpha[e] / dt2
            dlam = (-c - at * lam[e]) / (wsum + at)
            lam[e] += dlam
            sx = dlam * dx / dist
            sy = dlam * dy / dist
            sz = dlam * dz / dist
            pos[i, 0] += wi * sx
            pos[i, 1] += wi * sy
            pos[i, 2] += wi * sz
            pos[j, 0] -= wj * sx
            pos[j, 1] -= wj * sy
            pos[j, 2] -= wj * sz

        # layer stacking: near-vertical neighbor pairs keep one cloth
        # thickness of vertical separation
        for k in range(mc):
            i = coll_i[k]
            j = coll_j[k]
            wi = invmass[i]
            wj = invmass[j]
            wsum = wi + wj
            if wsum == 0.0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            if dx * dx + dy * dy >= collide_xy * collide_xy:
                continue
            dz = pos[i, 2] - pos[j, 2]
            if dz >= thickness or dz <= -thickness:
                continue
            if dz >= 0.0:
                push = thickness - dz
                pos[i, 2] += push * wi / wsum
                pos[j, 2] -= push * wj / wsum
            else:
                push = thickness + dz
                pos[i, 2] -= push * wi / wsum
                pos[j, 2] += push * wj / wsum

        for p in range(n):
            if invmass[p] > 0.0 and pos[p, 2] < ground_z:
                pos[p, 2] = ground_z

    # positional ground friction: contacting particles keep only a
    # (1 - friction) fraction of their tangential motion this substep
    inv_dt = 1.0 / dt_s
    for p in range(n):
        if invmass[p] > 0.0:
            if pos[p, 2] <= ground_z + 1e-6:
                keep = 1.0 - friction
                pos[p, 0] = prev[p, 0] + (pos[p, 0] - prev[p, 0]) * keep
                pos[p, 1] = prev[p, 1] + (pos[p, 1] - prev[p, 1]) * keep
            vel[p, 0] = (pos[p, 0] - prev[p, 0]) * inv_dt
            vel[p, 1] = (pos[p, 1] - prev[p, 1]) * inv_dt
            vel[p, 2] = (pos[p, 2] - prev[p, 2]) * inv_dt


def _macro_step(
    pos,
    vel,
    invmass,
    edge_i,
    edge_j,
    rest,
    alpha,
    lam,
    coll_i,
    coll_j,
    n_sub,
    dt,
    n_iters,
    gravity,
    damping,
    ground_z,
    friction,
    collide_xy,
    thickness,
    prev,
):
    """Advance one macro step (``n_sub`` substeps); returns max displacement."""
    n = pos.shape[0]
    dt_s = dt / n_sub
    damp_factor = math.exp(-damping * dt_s)
    start = np.empty((n, 3))
    for p in range(n):
        start[p, 0] = pos[p, 0]
        start[p, 1] = pos[p, 1]
        start[p, 2] = pos[p, 2]
    for _ in range(n_sub):
        _SUBSTEP(
            pos,
            vel,
            invmass,
            edge_i,
            edge_j,
            rest,
            alpha,
            lam,
            coll_i,
            coll_j,
            dt_s,
            n_iters,
            gravity,
            damp_factor,
            ground_z,
            friction,
            collide_xy,
            thickness,
            prev,
        )
    max_disp = 0.0
    for p in range(n):
        dx = pos[p, 0] - start[p, 0]
        dy = pos[p, 1] - start[p, 1]
        dz = pos[p, 2] - start[p, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d > max_disp:
            max_disp = d
    return max_disp


def _splat_zbuffer(sample_x, sample_y, sample_z, radius, origin_x, origin_y, cell, depth):
    """Max-z splat of point samples with a disk footprint onto a depth grid."""
    height = depth.shape[0]
    width = depth.shape[1]
    ns = sample_x.shape[0]
    r2 = radius * radius
    for s in range(ns):
        x = sample_x[s]
        y = sample_y[s]
        z = sample_z[s]
        u_lo = int(math.floor((x - radius - origin_x) / cell))
        u_hi = int(math.floor((x + radius - origin_x) / cell))
        v_lo = int(math.floor((y - radius - origin_y) / cell))
        v_hi = int(math.floor((y + radius - origin_y) / cell))
        if u_lo < 0:
            u_lo = 0
        if v_lo < 0:
            v_lo = 0
        if u_hi > width - 1:
            u_hi = width - 1
        if v_hi > height - 1:
            v_hi = height - 1
        for v in range(v_lo, v_hi + 1):
            py = origin_y + (v + 0.5) * cell
            for u in range(u_lo, u_hi + 1):
                px = origin_x + (u + 0.5) * cell
                dx = px - x
                dy = py - y
                if dx * dx + dy * dy <= r2 and z > depth[v, u]:
                    depth[v, u] = z


_SUBSTEP = jit_kernel(_substep_solve)
macro_step = jit_kernel(_macro_step)
splat_zbuffer = jit_kernel(_splat_zbuffer)
