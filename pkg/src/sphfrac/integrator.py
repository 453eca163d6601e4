"""Predictor-corrector time stepping for the coupled solver.

One step: rebuild neighbor tables at x^n, evaluate all rates, advance
every evolved field a half step (positions with the old velocities),
refresh boundary extrapolations and rates at the midpoint with the same
tables, correct the half step (positions now with the new midpoint
velocities), then extrapolate to t^{n+1} via X = 2 X_mid - X^n. Spring
failure is assessed once, on the final configuration. Fixed particles
contribute rates but keep their velocity and position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import _couple_pass
from .fluid import (
    _extrapolate_pass,
    _fluid_pass,
    _tau_pass,
    eos_pressure,
)
from .neighbors import neighbor_table, rebuild_grid, update_springs
from .solid import compute_correction_matrices, solid_pressure, _solid_pass
from .kernel import w_scalar

# pair acceptance slack over the kernel support, so midpoint
# re-evaluation on half-step-old tables misses nothing
SKIN = 1.05


@dataclass
class StepConfig:
    """Time-step control: fixed dt when given, else CFL-derived."""

    dt: float | None = None
    cfl_number: float = 0.25
    t_end: float = 0.0

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.cfl_number <= 0.5:
            raise ValueError(
                f"cfl_number must lie in (0, 0.5], got {self.cfl_number}")


def longitudinal_speed(mat):
    """Fastest elastic signal speed (P-wave) for CFL purposes."""
    return np.sqrt((mat.bulk_modulus + 4.0 * mat.shear_modulus / 3.0)
                   / mat.rho0)


def cfl_timestep(state, cfl_number):
    """dt = cfl * h / (c_max + v_max), one dt shared by both phases."""
    c_max = 0.0
    h = 0.0
    for s in state.stores():
        if s is None or s.n == 0:
            continue
        h = max(h, s.h)
        if s.phase.name == "FLUID":
            c_max = max(c_max, s.mat.c0)
        elif s.phase.name == "SOLID":
            c_max = max(c_max, longitudinal_speed(s.mat))
    if c_max == 0.0:
        raise ValueError("no material sound speed available for CFL")
    return cfl_number * h / (c_max + state.max_speed())


@dataclass
class _Ctx:
    """Per-step workspace: concatenated particle views and the neighbor
    tables shared by the two rate evaluations."""

    nf: int
    nfw: int
    n: int
    h: float
    pos: np.ndarray
    vel: np.ndarray
    m: np.ndarray
    tbl: dict = field(default_factory=dict)
    rho_eff: np.ndarray | None = None
    p_eff: np.ndarray | None = None


def _assemble(state):
    fluid, wall, solid = state.fluid, state.wall, state.solid
    nf = fluid.n if fluid is not None else 0
    nw = wall.n if wall is not None else 0
    ns = solid.n if solid is not None else 0
    nfw = nf + nw
    n = nfw + ns
    hs = [s.h for s in state.stores() if s is not None and s.n]
    h = max(hs)
    if abs(min(hs) - h) > 1e-12 * h:
        raise ValueError("all phases must share one smoothing length")
    ctx = _Ctx(nf=nf, nfw=nfw, n=n, h=h,
               pos=np.empty((n, 3)), vel=np.empty((n, 3)), m=np.empty(n))
    parts = [(0, fluid), (nf, wall), (nfw, solid)]
    for lo, s in parts:
        if s is None or s.n == 0:
            continue
        ctx.m[lo:lo + s.n] = s.m
    cutoff = SKIN * 2.0 * h
    _refresh_kinematics(state, ctx)
    grid = rebuild_grid(ctx.pos, cutoff)
    if nf:
        ctx.tbl["f"] = neighbor_table(grid, ctx.pos, (0, nf), [(0, n)],
                                      cutoff)
    if nw and (nf or ns):
        ranges = []
        if nf:
            ranges.append((0, nf))
        if ns:
            ranges.append((nfw, n))
        ctx.tbl["w"] = neighbor_table(grid, ctx.pos, (nf, nfw), ranges,
                                      cutoff)
    if ns and nfw:
        ctx.tbl["s"] = neighbor_table(grid, ctx.pos, (nfw, n), [(0, nfw)],
                                      cutoff)
    ctx.rho_eff = np.empty(n)
    ctx.p_eff = np.empty(n)
    return ctx


def _refresh_kinematics(state, ctx):
    lo = 0
    for s in (state.fluid, state.wall, state.solid):
        if s is None or s.n == 0:
            continue
        ctx.pos[lo:lo + s.n] = s.pos
        ctx.vel[lo:lo + s.n] = s.vel
        lo += s.n


@dataclass
class _Rates:
    fluid_drho: np.ndarray | None = None
    fluid_acc: np.ndarray | None = None
    solid_drho: np.ndarray | None = None
    solid_acc: np.ndarray | None = None
    solid_dS: np.ndarray | None = None
    solid_deps: np.ndarray | None = None
    fallback_count: int = 0


def _ramp_factor(state, t):
    if state.load_ramp is None or state.load_ramp <= 0.0:
        return 1.0
    return min(t / state.load_ramp, 1.0)


def _rate_eval(state, ctx, t_eval):
    """All rates at the configuration currently held in the stores."""
    fluid, wall, solid = state.fluid, state.wall, state.solid
    nf, nfw, n, h = ctx.nf, ctx.nfw, ctx.n, ctx.h
    g = np.asarray(state.gravity, dtype=np.float64)
    vol = float(state.dp) ** 3
    _refresh_kinematics(state, ctx)
    pos, vel, m = ctx.pos, ctx.vel, ctx.m
    rates = _Rates()

    # boundary channels seen by the fluid
    if nf:
        fmat = fluid.mat
        if nfw > nf:
            nbr_w, cnt_w = ctx.tbl["w"]
            _extrapolate_pass(pos, fluid.p, fluid.rho, nbr_w, cnt_w, nf,
                              0, nf, h, g[0], g[1], g[2], 0.0, 0.0, 0.0,
                              fmat.rho0, fmat.p0, fmat.gamma_eos,
                              fmat.rho_floor, False, wall.p_b, wall.rho_b)
        if n > nfw:
            nbr_s, cnt_s = ctx.tbl["s"]
            _extrapolate_pass(pos, fluid.p, fluid.rho, nbr_s, cnt_s, nfw,
                              0, nf, h, g[0], g[1], g[2], 0.0, 0.0, 0.0,
                              fmat.rho0, fmat.p0, fmat.gamma_eos,
                              fmat.rho_floor, False, solid.p_b, solid.rho_b)
    # wall channel seen by the solid
    if n > nfw and nfw > nf:
        smat = solid.mat
        nbr_w, cnt_w = ctx.tbl["w"]
        _extrapolate_pass(pos, solid.p, solid.rho, nbr_w, cnt_w, nf,
                          nfw, n, h, g[0], g[1], g[2], 0.0, 0.0, 0.0,
                          smat.rho0, smat.bulk_modulus, smat.gamma_eos,
                          smat.rho_floor, True, wall.p_bs, wall.rho_bs)

    if nf:
        fmat = fluid.mat
        rho_eff, p_eff = ctx.rho_eff, ctx.p_eff
        rho_eff[:nf] = fluid.rho
        p_eff[:nf] = fluid.p
        if nfw > nf:
            rho_eff[nf:nfw] = wall.rho_b
            p_eff[nf:nfw] = wall.p_b
        if n > nfw:
            rho_eff[nfw:] = solid.rho_b
            p_eff[nfw:] = solid.p_b
        nbr_f, cnt_f = ctx.tbl["f"]
        tau = np.zeros((n, 6))
        if fmat.mu > 0.0:
            _tau_pass(pos, vel, rho_eff, m, nbr_f, cnt_f, nf, nfw, h,
                      fmat.mu, vol, tau)
        drho = np.empty(nf)
        acc = np.empty((nf, 3))
        _fluid_pass(pos, vel, rho_eff, p_eff, m, tau, nbr_f, cnt_f, nf, nfw,
                    h, fmat.c0, fmat.rho0, fmat.p0, fmat.gamma_eos,
                    fmat.delta, fmat.beta1, fmat.beta2,
                    g[0], g[1], g[2], vol, drho, acc)
        rates.fluid_drho = drho
        rates.fluid_acc = acc

    if n > nfw:
        smat = solid.mat
        net = state.springs
        B, fb = compute_correction_matrices(solid, net, h)
        s_drho = np.zeros(solid.n)
        s_acc = np.zeros((solid.n, 3))
        dS = np.zeros((solid.n, 6))
        deps = np.zeros((solid.n, 6))
        w_dp = w_scalar(state.dp, h)
        nbar = w_scalar(0.0, h) / w_dp
        _solid_pass(solid.pos, solid.vel, solid.rho, solid.p, solid.m,
                    solid.S, B, net.adj_off, net.adj_partner, net.adj_edge,
                    net.f, h, smat.shear_modulus, smat.c0, smat.beta1,
                    smat.beta2, smat.gamma_ap, w_dp, nbar, s_drho, s_acc,
                    dS, deps)
        rates.fallback_count = int(fb.sum())
        s_acc += g
        ramp = _ramp_factor(state, t_eval)
        if solid.ext_force is not None and ramp != 0.0:
            s_acc += (ramp / solid.m)[:, None] * solid.ext_force

        # fluid-structure exchange and wall contact
        if nf:
            fmat = fluid.mat
            m_pair = np.zeros(n)
            m_pair[:nf] = fluid.m
            m_pair[nfw:] = fmat.rho0 * vol
            p_pair = np.zeros(n)
            rho_pair = np.ones(n)
            p_pair[:nf] = fluid.p
            rho_pair[:nf] = fluid.rho
            p_pair[nfw:] = solid.p_b
            rho_pair[nfw:] = solid.rho_b
            nbr_f, cnt_f = ctx.tbl["f"]
            nbr_s, cnt_s = ctx.tbl["s"]
            f_on_f = np.zeros((nf, 3))
            f_on_s = np.zeros((solid.n, 3))
            _couple_pass(pos, vel, m_pair, p_pair, rho_pair, nbr_f, cnt_f,
                         0, nf, nfw, n, h, fmat.c0, fmat.beta1, fmat.beta2,
                         f_on_f)
            _couple_pass(pos, vel, m_pair, p_pair, rho_pair, nbr_s, cnt_s,
                         nfw, n, 0, nf, h, fmat.c0, fmat.beta1, fmat.beta2,
                         f_on_s)
            rates.fluid_acc += f_on_f / fluid.m[:, None]
            s_acc += f_on_s / solid.m[:, None]
        if nfw > nf:
            m_sup = np.zeros(n)
            m_sup[nf:nfw] = smat.rho0 * vol
            m_sup[nfw:] = solid.m
            p_sup = np.zeros(n)
            rho_sup = np.ones(n)
            p_sup[nf:nfw] = wall.p_bs
            rho_sup[nf:nfw] = wall.rho_bs
            p_sup[nfw:] = solid.p
            rho_sup[nfw:] = solid.rho
            nbr_s, cnt_s = ctx.tbl["s"]
            f_sup = np.zeros((solid.n, 3))
            cbar = np.sqrt(smat.bulk_modulus / smat.rho0)
            _couple_pass(pos, vel, m_sup, p_sup, rho_sup, nbr_s, cnt_s,
                         nfw, n, nf, nfw, h, cbar, smat.beta1, smat.beta2,
                         f_sup)
            s_acc += f_sup / solid.m[:, None]

        rates.solid_drho = s_drho
        rates.solid_acc = s_acc
        rates.solid_dS = dS
        rates.solid_deps = deps
    return rates


def _check_finite(state):
    for name, s in (("fluid", state.fluid), ("solid", state.solid)):
        if s is None or s.n == 0:
            continue
        for fname, arr in (("position", s.pos), ("velocity", s.vel),
                           ("density", s.rho)):
            bad = ~np.isfinite(arr)
            if bad.any():
                i = int(np.argwhere(bad.any(axis=-1) if arr.ndim > 1
                                    else bad)[0][0])
                raise FloatingPointError(
                    f"non-finite {name} {fname} at step "
                    f"{state.step_count}, particle {i}")


def step(state, cfg):
    """Advance the state one predictor-corrector step (in place)."""
    dt = cfg.dt if cfg.dt is not None else cfl_timestep(state, cfg.cfl_number)
    half = 0.5 * dt
    ctx = _assemble(state)
    fluid, wall, solid = state.fluid, state.wall, state.solid

    saved = {}
    if fluid is not None and fluid.n:
        saved["f"] = (fluid.pos.copy(), fluid.vel.copy(), fluid.rho.copy())
        free_f = ~fluid.fixed
    if solid is not None and solid.n:
        saved["s"] = (solid.pos.copy(), solid.vel.copy(), solid.rho.copy(),
                      solid.S.copy(), solid.eps.copy())
        free_s = ~solid.fixed

    r0 = _rate_eval(state, ctx, state.time)

    # predictor: positions advance on the old velocities
    if "f" in saved:
        pos_n, vel_n, rho_n = saved["f"]
        fluid.pos[free_f] = pos_n[free_f] + half * vel_n[free_f]
        fluid.vel[free_f] = vel_n[free_f] + half * r0.fluid_acc[free_f]
        fluid.rho += half * r0.fluid_drho
        np.maximum(fluid.rho, fluid.mat.rho_floor, out=fluid.rho)
        fluid.p[:] = eos_pressure(fluid.rho, fluid.mat)
    if "s" in saved:
        pos_n, vel_n, rho_n, S_n, eps_n = saved["s"]
        solid.pos[free_s] = pos_n[free_s] + half * vel_n[free_s]
        solid.vel[free_s] = vel_n[free_s] + half * r0.solid_acc[free_s]
        solid.rho += half * r0.solid_drho
        solid.S += half * r0.solid_dS
        solid.eps += half * r0.solid_deps
        solid.p[:] = solid_pressure(solid.rho, solid.mat)

    r1 = _rate_eval(state, ctx, state.time + half)

    # corrector: positions advance on the corrected midpoint velocities,
    # then every field extrapolates to the full step
    if "f" in saved:
        pos_n, vel_n, rho_n = saved["f"]
        fluid.vel[free_f] = vel_n[free_f] + half * r1.fluid_acc[free_f]
        fluid.pos[free_f] = pos_n[free_f] + half * fluid.vel[free_f]
        fluid.rho[:] = rho_n + half * r1.fluid_drho
        fluid.vel[free_f] = 2.0 * fluid.vel[free_f] - vel_n[free_f]
        fluid.pos[free_f] = 2.0 * fluid.pos[free_f] - pos_n[free_f]
        fluid.rho[:] = 2.0 * fluid.rho - rho_n
        np.maximum(fluid.rho, fluid.mat.rho_floor, out=fluid.rho)
        fluid.p[:] = eos_pressure(fluid.rho, fluid.mat)
    if "s" in saved:
        pos_n, vel_n, rho_n, S_n, eps_n = saved["s"]
        solid.vel[free_s] = vel_n[free_s] + half * r1.solid_acc[free_s]
        solid.pos[free_s] = pos_n[free_s] + half * solid.vel[free_s]
        solid.rho[:] = rho_n + half * r1.solid_drho
        solid.S[:] = S_n + half * r1.solid_dS
        solid.eps[:] = eps_n + half * r1.solid_deps
        solid.vel[free_s] = 2.0 * solid.vel[free_s] - vel_n[free_s]
        solid.pos[free_s] = 2.0 * solid.pos[free_s] - pos_n[free_s]
        solid.rho[:] = 2.0 * solid.rho - rho_n
        solid.S[:] = 2.0 * solid.S - S_n
        solid.eps[:] = 2.0 * solid.eps - eps_n
        solid.p[:] = solid_pressure(solid.rho, solid.mat)

    state.time += dt
    state.step_count += 1
    state.dt_last = dt

    if "s" in saved and state.springs is not None:
        update_springs(state.springs, solid.pos, solid.mat.eps_fail,
                       state.step_count, state.time)
        solid.damage[:] = state.springs.damage()

    _check_finite(state)
    return state


def run(state, cfg, on_step=None):
    """Step until cfg.t_end; on_step(state) runs after every step."""
    t0, n0 = state.time, state.step_count
    while state.time < cfg.t_end - 1e-15:
        step(state, cfg)
        if cfg.dt is not None:
            # keep t = t0 + n dt exact instead of accumulating round-off
            state.time = t0 + (state.step_count - n0) * cfg.dt
        if on_step is not None:
            on_step(state)
    return state
