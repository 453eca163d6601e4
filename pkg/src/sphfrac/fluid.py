"""Weakly compressible fluid solver.

Rate evaluation for the fluid phase: power-law equation of state,
continuity with a density-diffusion correction, momentum with laminar
viscous stress and pairwise artificial viscosity, and the generalized
(dynamic) boundary treatment that extrapolates fluid state onto wall
and structure particles.

Pair kernels work on globally concatenated arrays laid out as
[fluid | wall | solid]; the `nf`/`nfw` offsets passed everywhere mark
the phase boundaries.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from .kernel import grad_w_factor, w_scalar
from .neighbors import neighbor_table, rebuild_grid


def eos_pressure(rho, mat):
    """Power-law EOS; negative below the rest density (tension)."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0.0):
        raise ValueError("density must be positive")
    return mat.p0 * ((rho / mat.rho0) ** mat.gamma_eos - 1.0)


def eos_density(p, mat, warn=True):
    """Inverse EOS. Pressures below -p0 leave the physical branch and
    are clamped to the configured floor density."""
    p = np.asarray(p, dtype=np.float64)
    base = p / mat.p0 + 1.0
    floor_base = (mat.rho_floor / mat.rho0) ** mat.gamma_eos
    clamped = base < floor_base
    if np.any(clamped) and warn:
        warnings.warn(
            f"{int(np.count_nonzero(clamped))} pressure value(s) below the "
            f"EOS domain; clamped to floor density {mat.rho_floor:g}",
            RuntimeWarning, stacklevel=2,
        )
    return mat.rho0 * np.maximum(base, floor_base) ** (1.0 / mat.gamma_eos)


@njit(cache=True, inline="always")
def _pi_pair(dx, dy, dz, dvx, dvy, dvz, rho_i, rho_j, cbar, h, b1, b2):
    """Pairwise artificial viscosity; nonzero only for approaching pairs."""
    vx = dvx * dx + dvy * dy + dvz * dz
    if vx > 0.0:
        return 0.0
    r2 = dx * dx + dy * dy + dz * dz
    mu = h * vx / (r2 + 0.01 * h * h)
    return (-b1 * cbar * mu + b2 * mu * mu) / (0.5 * (rho_i + rho_j))


def artificial_viscosity(x_ij, v_ij, rho_i, rho_j, cbar, h, beta1, beta2):
    """Scalar pi_ij for one pair; enters the momentum sum like a pressure."""
    if rho_i <= 0.0 or rho_j <= 0.0:
        raise ValueError("densities must be positive")
    x = np.asarray(x_ij, dtype=np.float64)
    v = np.asarray(v_ij, dtype=np.float64)
    return _pi_pair(x[0], x[1], x[2], v[0], v[1], v[2],
                    rho_i, rho_j, cbar, h, beta1, beta2)


@njit(cache=True, inline="always")
def _rho_hydrostatic(gdotx, rho0, p0, inv_gamma):
    """EOS density offset across a pair under gravity; zero without it."""
    if p0 <= 0.0:
        return 0.0
    base = 1.0 + rho0 * gdotx / p0
    if base < 0.0:
        base = 0.0
    return rho0 * (base ** inv_gamma - 1.0)


@njit(cache=True)
def _tau_pass(pos, vel, rho_eff, m, nbr, cnt, nf, nfw, h, mu, vol_b, tau):
    """Viscous stress for fluid rows from plain SPH velocity gradients.

    Walls enter with zero velocity (no-slip source) and their lattice
    volume; structure particles are excluded, their tangential action
    comes through coupling.
    """
    for i in range(nbr.shape[0]):
        l00 = l01 = l02 = l10 = l11 = l12 = l20 = l21 = l22 = 0.0
        for k in range(cnt[i]):
            j = nbr[i, k]
            if j >= nfw:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r = np.sqrt(dx * dx + dy * dy + dz * dz)
            g = grad_w_factor(r, h)
            if g == 0.0:
                continue
            vol = m[j] / rho_eff[j] if j < nf else vol_b
            ux = vel[j, 0] - vel[i, 0]
            uy = vel[j, 1] - vel[i, 1]
            uz = vel[j, 2] - vel[i, 2]
            wx = g * dx
            wy = g * dy
            wz = g * dz
            l00 += vol * ux * wx
            l01 += vol * ux * wy
            l02 += vol * ux * wz
            l10 += vol * uy * wx
            l11 += vol * uy * wy
            l12 += vol * uy * wz
            l20 += vol * uz * wx
            l21 += vol * uz * wy
            l22 += vol * uz * wz
        tau[i, 0] = mu * 2.0 * l00
        tau[i, 1] = mu * 2.0 * l11
        tau[i, 2] = mu * 2.0 * l22
        tau[i, 3] = mu * (l01 + l10)
        tau[i, 4] = mu * (l02 + l20)
        tau[i, 5] = mu * (l12 + l21)


@njit(cache=True)
def _fluid_pass(pos, vel, rho_eff, p_eff, m, tau, nbr, cnt, nf, nfw,
                h, c0, rho0, p0, gamma_eos, delta, beta1, beta2,
                gx, gy, gz, vol_b, drho, acc):
    """Fused continuity + momentum for fluid rows.

    The velocity-divergence sum runs over every neighbor (walls static,
    structure particles with their physical velocities); the diffusion
    term is fluid-fluid only; pressure/viscous/artificial-viscosity
    forces act between fluid and wall neighbors, fluid-structure forces
    being the coupling module's job. Boundary columns weigh in as
    same-size fluid ghosts, rest density times lattice volume, so their
    physical mass never leaks into fluid rates.
    """
    inv_gamma = 1.0 / gamma_eos
    dhc2 = 2.0 * delta * h * c0
    eps_h2 = 0.01 * h * h
    for i in range(nbr.shape[0]):
        dr = 0.0
        ax = ay = az = 0.0
        rho_i = rho_eff[i]
        p_i = p_eff[i]
        pi_fac = p_i / (rho_i * rho_i)
        t0 = tau[i, 0]
        t1 = tau[i, 1]
        t2 = tau[i, 2]
        t3 = tau[i, 3]
        t4 = tau[i, 4]
        t5 = tau[i, 5]
        inv_ri2 = 1.0 / (rho_i * rho_i)
        for k in range(cnt[i]):
            j = nbr[i, k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            r = np.sqrt(r2)
            g = grad_w_factor(r, h)
            if g == 0.0:
                continue
            dvx = vel[i, 0] - vel[j, 0]
            dvy = vel[i, 1] - vel[j, 1]
            dvz = vel[i, 2] - vel[j, 2]
            mj = m[j] if j < nf else rho0 * vol_b
            # velocity divergence, all neighbor types
            dr += mj * (dvx * dx + dvy * dy + dvz * dz) * g
            if j < nf:
                # density diffusion, fluid-fluid only
                gdx = gx * dx + gy * dy + gz * dz
                rho_h = _rho_hydrostatic(gdx, rho0, p0, inv_gamma)
                bracket = rho_eff[j] - rho_i + rho_h
                dr += dhc2 * (m[j] / rho_eff[j]) * bracket * (-g) * r2 / (r2 + eps_h2)
            if j >= nfw:
                continue
            # pressure + artificial viscosity + viscous stress (fluid/wall)
            rho_j = rho_eff[j]
            pi_ij = 0.0
            vdotx = dvx * dx + dvy * dy + dvz * dz
            if vdotx <= 0.0:
                mu_ij = h * vdotx / (r2 + eps_h2)
                pi_ij = (-beta1 * c0 * mu_ij + beta2 * mu_ij * mu_ij) \
                    / (0.5 * (rho_i + rho_j))
            pterm = pi_fac + p_eff[j] / (rho_j * rho_j) + pi_ij
            coef = -mj * pterm * g
            ax += coef * dx
            ay += coef * dy
            az += coef * dz
            if j < nf:
                inv_rj2 = 1.0 / (rho_j * rho_j)
                s0 = t0 * inv_ri2 + tau[j, 0] * inv_rj2
                s1 = t1 * inv_ri2 + tau[j, 1] * inv_rj2
                s2 = t2 * inv_ri2 + tau[j, 2] * inv_rj2
                s3 = t3 * inv_ri2 + tau[j, 3] * inv_rj2
                s4 = t4 * inv_ri2 + tau[j, 4] * inv_rj2
                s5 = t5 * inv_ri2 + tau[j, 5] * inv_rj2
            else:
                s0 = t0 * inv_ri2
                s1 = t1 * inv_ri2
                s2 = t2 * inv_ri2
                s3 = t3 * inv_ri2
                s4 = t4 * inv_ri2
                s5 = t5 * inv_ri2
            wx = g * dx
            wy = g * dy
            wz = g * dz
            ax += mj * (s0 * wx + s3 * wy + s4 * wz)
            ay += mj * (s3 * wx + s1 * wy + s5 * wz)
            az += mj * (s4 * wx + s5 * wy + s2 * wz)
        drho[i] = dr
        acc[i, 0] = ax + gx
        acc[i, 1] = ay + gy
        acc[i, 2] = az + gz


@njit(cache=True)
def _extrapolate_pass(pos, p_src, rho_src, nbr, cnt, row_start, col_lo,
                      col_hi, h, gx, gy, gz, awx, awy, awz,
                      rho0, p0_or_K, gamma_eos, rho_floor, linear_eos,
                      p_out, rho_out):
    """Boundary-state extrapolation onto rows from source columns.

    Shared by wall-from-fluid, structure-from-fluid (both invert the
    power-law EOS) and wall-from-structure (linear EOS). Rows without
    any source neighbor in support revert to rest state (p=0, rho0).
    """
    bx = gx - awx
    by = gy - awy
    bz = gz - awz
    inv_gamma = 1.0 / gamma_eos
    floor_base = (rho_floor / rho0) ** gamma_eos
    for r in range(nbr.shape[0]):
        i = row_start + r
        sw = 0.0
        spw = 0.0
        sbody = 0.0
        for k in range(cnt[r]):
            j = nbr[r, k]
            if j < col_lo or j >= col_hi:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r_ = np.sqrt(dx * dx + dy * dy + dz * dz)
            w = w_scalar(r_, h)
            if w == 0.0:
                continue
            sw += w
            spw += p_src[j] * w
            sbody += rho_src[j] * (bx * dx + by * dy + bz * dz) * w
        if sw == 0.0:
            p_out[r] = 0.0
            rho_out[r] = rho0
            continue
        pw = (spw + sbody) / sw
        p_out[r] = pw
        if linear_eos:
            rho = rho0 * (pw / p0_or_K + 1.0)
            if rho < rho_floor:
                rho = rho_floor
            rho_out[r] = rho
        else:
            base = pw / p0_or_K + 1.0
            if base < floor_base:
                base = floor_base
            rho_out[r] = rho0 * base ** inv_gamma


def _ctx_for(fluid, others):
    """Concatenated positions (fluid first) and a support-radius grid,
    for the standalone wrappers below."""
    stores = [fluid] + [s for s in others if s is not None and s.n]
    pos = np.concatenate([s.pos for s in stores])
    h = max(s.h for s in stores)
    return stores, pos, rebuild_grid(pos, 2.0 * h)


def continuity_rate(fluid, mat, h, gravity, wall=None, solid=None, dp=None):
    """drho/dt for every fluid particle (standalone evaluation).

    dp sets the boundary particles' lattice volume and is required as
    soon as wall or solid stores take part.
    """
    if dp is None and ((wall is not None and wall.n) or
                       (solid is not None and solid.n)):
        raise ValueError("dp is required when boundary stores are present")
    vol_b = 0.0 if dp is None else float(dp) ** 3
    stores, pos, grid = _ctx_for(fluid, [wall, solid])
    nf = fluid.n
    sizes = [s.n for s in stores]
    offs = np.cumsum([0] + sizes)
    n = offs[-1]
    nfw = n
    for s, lo in zip(stores, offs):
        if s.phase.name == "SOLID":
            nfw = lo
    vel = np.concatenate([s.vel for s in stores])
    m = np.concatenate([s.m for s in stores])
    rho_eff = np.concatenate(
        [s.rho if s.phase.name == "FLUID" else s.rho_b for s in stores]
    )
    p_eff = np.concatenate(
        [s.p if s.phase.name == "FLUID" else s.p_b for s in stores]
    )
    nbr, cnt = neighbor_table(grid, pos, (0, nf), [(0, n)], 2.0 * h)
    drho = np.zeros(nf)
    acc = np.zeros((nf, 3))
    tau = np.zeros((n, 6))
    g = np.asarray(gravity, dtype=np.float64)
    _fluid_pass(pos, vel, rho_eff, p_eff, m, tau, nbr, cnt, nf, nfw,
                h, mat.c0, mat.rho0, mat.p0, mat.gamma_eos, mat.delta,
                mat.beta1, mat.beta2, g[0], g[1], g[2], vol_b, drho, acc)
    return drho


def momentum_rate(fluid, mat, h, gravity, wall=None, dp=None):
    """dv/dt for every fluid particle (standalone evaluation)."""
    if dp is None and wall is not None and wall.n:
        raise ValueError("dp is required when boundary stores are present")
    vol_b = 0.0 if dp is None else float(dp) ** 3
    stores, pos, grid = _ctx_for(fluid, [wall])
    nf = fluid.n
    n = pos.shape[0]
    vel = np.concatenate([s.vel for s in stores])
    m = np.concatenate([s.m for s in stores])
    rho_eff = np.concatenate(
        [s.rho if s.phase.name == "FLUID" else s.rho_b for s in stores]
    )
    p_eff = np.concatenate(
        [s.p if s.phase.name == "FLUID" else s.p_b for s in stores]
    )
    nbr, cnt = neighbor_table(grid, pos, (0, nf), [(0, n)], 2.0 * h)
    tau = np.zeros((n, 6))
    if mat.mu > 0.0:
        _tau_pass(pos, vel, rho_eff, m, nbr, cnt, nf, n, h, mat.mu, vol_b,
                  tau)
    drho = np.zeros(nf)
    acc = np.zeros((nf, 3))
    g = np.asarray(gravity, dtype=np.float64)
    _fluid_pass(pos, vel, rho_eff, p_eff, m, tau, nbr, cnt, nf, n,
                h, mat.c0, mat.rho0, mat.p0, mat.gamma_eos, mat.delta,
                mat.beta1, mat.beta2, g[0], g[1], g[2], vol_b, drho, acc)
    return acc


def extrapolate_boundary_state(boundary, fluid, gravity, a_w=None):
    """Update boundary (wall or structure) p_b/rho_b from nearby fluid."""
    pos = np.concatenate([fluid.pos, boundary.pos])
    h = boundary.h
    grid = rebuild_grid(pos, 2.0 * h)
    nf = fluid.n
    nbr, cnt = neighbor_table(grid, pos, (nf, nf + boundary.n),
                              [(0, nf)], 2.0 * h)
    g = np.asarray(gravity, dtype=np.float64)
    aw = np.zeros(3) if a_w is None else np.asarray(a_w, dtype=np.float64)
    mat = fluid.mat
    _extrapolate_pass(pos, fluid.p, fluid.rho, nbr, cnt, nf, 0, nf, h,
                      g[0], g[1], g[2], aw[0], aw[1], aw[2],
                      mat.rho0, mat.p0, mat.gamma_eos, mat.rho_floor, False,
                      boundary.p_b, boundary.rho_b)
    return boundary
