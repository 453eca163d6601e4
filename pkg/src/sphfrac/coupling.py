"""Fluid-structure interaction forces.

Structure particles act on the fluid as boundary particles carrying a
pressure and density extrapolated from the surrounding fluid; the fluid
pushes back with the exact opposite pair force, so total momentum is
conserved to round-off. The same pair kernel, fed the solid's physical
pressure and the wall's solid-channel state, provides contact support
between structures and fixed walls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .fluid import extrapolate_boundary_state
from .kernel import grad_w_factor
from .neighbors import neighbor_table, rebuild_grid


@dataclass
class CouplingForces:
    """Pair-summed forces in newtons, aligned with each store's rows."""

    on_fluid: np.ndarray
    on_solid: np.ndarray


@njit(cache=True)
def _couple_pass(pos, vel, m, p_pair, rho_pair, nbr, cnt, row_lo, row_hi,
                 col_lo, col_hi, h, cbar, beta1, beta2, out):
    """Gather -m_i m_j (p_i/rho_i^2 + p_j/rho_j^2 + pi_ij) grad_i W onto rows.

    p_pair/rho_pair hold, per global slot, whatever state that slot
    exposes to this interaction; both gather directions therefore see
    bitwise-identical pair scalars and the forces cancel exactly.
    """
    eps_h2 = 0.01 * h * h
    for i in range(row_lo, row_hi):
        fx = fy = fz = 0.0
        p_i = p_pair[i]
        rho_i = rho_pair[i]
        inv_i = 1.0 / (rho_i * rho_i)
        for k in range(cnt[i - row_lo]):
            j = nbr[(i - row_lo), k]
            if j < col_lo or j >= col_hi:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            g = grad_w_factor(np.sqrt(r2), h)
            if g == 0.0:
                continue
            rho_j = rho_pair[j]
            term = p_i * inv_i + p_pair[j] / (rho_j * rho_j)
            dvx = vel[i, 0] - vel[j, 0]
            dvy = vel[i, 1] - vel[j, 1]
            dvz = vel[i, 2] - vel[j, 2]
            vdotx = dvx * dx + dvy * dy + dvz * dz
            if vdotx <= 0.0:
                mu_ij = h * vdotx / (r2 + eps_h2)
                term += (-beta1 * cbar * mu_ij + beta2 * mu_ij * mu_ij) \
                    / (0.5 * (rho_i + rho_j))
            c = -m[i] * m[j] * term * g
            fx += c * dx
            fy += c * dy
            fz += c * dz
        out[i - row_lo, 0] = fx
        out[i - row_lo, 1] = fy
        out[i - row_lo, 2] = fz
    return 0


def _pair_tables(pos, h, nf, n):
    grid = rebuild_grid(pos, 2.0 * h)
    nbr_f, cnt_f = neighbor_table(grid, pos, (0, nf), [(nf, n)], 2.0 * h)
    nbr_s, cnt_s = neighbor_table(grid, pos, (nf, n), [(0, nf)], 2.0 * h)
    return nbr_f, cnt_f, nbr_s, cnt_s


def couple(fluid, solid, gravity, dp, extrapolate=True):
    """Mutual fluid/structure forces (Newton-exact pair sums).

    Structure particles weigh in as same-size fluid ghosts (fluid rest
    density times lattice volume); their physical mass belongs to the
    solid solver alone. With
    extrapolate=True the solid's fluid-facing pressure and density
    channels are refreshed first; pass False when the caller already
    did so this half step.
    """
    if extrapolate:
        extrapolate_boundary_state(solid, fluid, gravity)
    nf = fluid.n
    n = nf + solid.n
    vol = float(dp) ** 3
    mat = fluid.mat
    pos = np.concatenate([fluid.pos, solid.pos])
    vel = np.concatenate([fluid.vel, solid.vel])
    m = np.concatenate([fluid.m, np.full(solid.n, mat.rho0 * vol)])
    p_pair = np.concatenate([fluid.p, solid.p_b])
    rho_pair = np.concatenate([fluid.rho, solid.rho_b])
    h = fluid.h
    nbr_f, cnt_f, nbr_s, cnt_s = _pair_tables(pos, h, nf, n)
    on_fluid = np.zeros((nf, 3))
    on_solid = np.zeros((solid.n, 3))
    _couple_pass(pos, vel, m, p_pair, rho_pair, nbr_f, cnt_f, 0, nf, nf, n,
                 h, mat.c0, mat.beta1, mat.beta2, on_fluid)
    _couple_pass(pos, vel, m, p_pair, rho_pair, nbr_s, cnt_s, nf, n, 0, nf,
                 h, mat.c0, mat.beta1, mat.beta2, on_solid)
    return CouplingForces(on_fluid=on_fluid, on_solid=on_solid)


def wall_support(solid, wall, dp, extrapolate=True):
    """Contact forces on structure particles from fixed wall particles.

    The wall exposes a pressure extrapolated from nearby structure
    particles through the structure's own equation of state (and weighs
    in at the structure's rest density times the lattice volume), so
    resting contact balances instead of letting fragments sink through
    floors.
    """
    if extrapolate:
        extrapolate_wall_from_solid(wall, solid)
    ns = wall.n
    n = ns + solid.n
    vol = float(dp) ** 3
    mat = solid.mat
    pos = np.concatenate([wall.pos, solid.pos])
    vel = np.concatenate([wall.vel, solid.vel])
    m = np.concatenate([np.full(ns, mat.rho0 * vol), solid.m])
    p_pair = np.concatenate([wall.p_bs, solid.p])
    rho_pair = np.concatenate([wall.rho_bs, solid.rho])
    h = solid.h
    grid = rebuild_grid(pos, 2.0 * h)
    nbr, cnt = neighbor_table(grid, pos, (ns, n), [(0, ns)], 2.0 * h)
    out = np.zeros((solid.n, 3))
    cbar = np.sqrt(mat.bulk_modulus / mat.rho0)
    _couple_pass(pos, vel, m, p_pair, rho_pair, nbr, cnt, ns, n, 0, ns,
                 h, cbar, mat.beta1, mat.beta2, out)
    return out


def extrapolate_wall_from_solid(wall, solid, gravity=(0.0, 0.0, 0.0)):
    """Fill the wall's structure-facing channels from nearby structure
    particles, inverting pressure through the linear bulk law."""
    from .fluid import _extrapolate_pass

    pos = np.concatenate([solid.pos, wall.pos])
    h = solid.h
    grid = rebuild_grid(pos, 2.0 * h)
    ns = solid.n
    nbr, cnt = neighbor_table(grid, pos, (ns, ns + wall.n), [(0, ns)],
                              2.0 * h)
    g = np.asarray(gravity, dtype=np.float64)
    mat = solid.mat
    _extrapolate_pass(pos, solid.p, solid.rho, nbr, cnt, ns, 0, ns, h,
                      g[0], g[1], g[2], 0.0, 0.0, 0.0,
                      mat.rho0, mat.bulk_modulus, mat.gamma_eos,
                      mat.rho_floor, True, wall.p_bs, wall.rho_bs)
    return wall
