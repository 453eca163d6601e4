"""Particle stores, lattice builders and the whole-simulation state."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .materials import MaterialParams

# Symmetric rank-2 tensors are stored with components (xx, yy, zz, xy, xz, yz).
TENSOR_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class Phase(IntEnum):
    FLUID = 0
    SOLID = 1
    WALL = 2


@dataclass
class ParticleStore:
    """Struct-of-arrays container for one phase.

    Walls and solids carry extrapolated boundary-side state in addition
    to their own fields: p_b/rho_b hold the fluid-side pressure and
    density a neighboring fluid particle should see, and walls also get
    p_bs/rho_bs for the solid-side channel (a wall supporting debris
    must mirror solid stress, not fluid pressure).
    """

    phase: Phase
    mat: MaterialParams
    h: float
    pos: np.ndarray
    vel: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    m: np.ndarray
    fixed: np.ndarray
    S: np.ndarray | None = None
    eps: np.ndarray | None = None
    damage: np.ndarray | None = None
    ext_force: np.ndarray | None = None
    p_b: np.ndarray | None = None
    rho_b: np.ndarray | None = None
    p_bs: np.ndarray | None = None
    rho_bs: np.ndarray | None = None

    @property
    def n(self):
        return self.pos.shape[0]

    def volume(self):
        return self.m / self.rho

    def copy(self):
        def dup(a):
            return None if a is None else a.copy()

        return ParticleStore(
            phase=self.phase, mat=self.mat, h=self.h,
            pos=self.pos.copy(), vel=self.vel.copy(), rho=self.rho.copy(),
            p=self.p.copy(), m=self.m.copy(), fixed=self.fixed.copy(),
            S=dup(self.S), eps=dup(self.eps), damage=dup(self.damage),
            ext_force=dup(self.ext_force),
            p_b=dup(self.p_b), rho_b=dup(self.rho_b),
            p_bs=dup(self.p_bs), rho_bs=dup(self.rho_bs),
        )


def make_store(phase, mat, h, pos, m, fixed=None):
    """Allocate a store with rest-state fields for the given positions."""
    pos = np.ascontiguousarray(pos, dtype=np.float64).reshape(-1, 3)
    n = pos.shape[0]
    m = np.broadcast_to(np.asarray(m, dtype=np.float64), (n,)).copy()
    if fixed is None:
        fixed = np.zeros(n, dtype=bool)
    else:
        fixed = np.broadcast_to(np.asarray(fixed, dtype=bool), (n,)).copy()
    store = ParticleStore(
        phase=Phase(phase), mat=mat, h=float(h),
        pos=pos, vel=np.zeros((n, 3)), rho=np.full(n, mat.rho0),
        p=np.zeros(n), m=m, fixed=fixed,
    )
    if store.phase is Phase.SOLID:
        store.S = np.zeros((n, 6))
        store.eps = np.zeros((n, 6))
        store.damage = np.zeros(n)
        store.ext_force = np.zeros((n, 3))
    if store.phase in (Phase.SOLID, Phase.WALL):
        store.p_b = np.zeros(n)
        store.rho_b = np.full(n, mat.rho0)
    if store.phase is Phase.WALL:
        store.p_bs = np.zeros(n)
        store.rho_bs = np.full(n, mat.rho0)
    return store


def lattice_positions(lo, hi, dp):
    """Regular dp lattice filling the box [lo, hi], centered per axis.

    The per-axis count is round(extent / dp); a box much thinner than
    dp therefore yields no sites and is rejected.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi < lo):
        raise ValueError(f"box has negative extent: lo={lo}, hi={hi}")
    counts = np.rint((hi - lo) / dp).astype(int)
    if np.any(counts < 1):
        raise ValueError(
            f"box {lo}..{hi} is thinner than dp={dp} along axis "
            f"{int(np.argmin(counts))}; no particles fit"
        )
    axes = [
        lo[a] + ((hi[a] - lo[a]) - (counts[a] - 1) * dp) / 2.0
        + dp * np.arange(counts[a])
        for a in range(3)
    ]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def build_lattice(lo, hi, dp, phase, mat, h, fixed=False):
    pos = lattice_positions(lo, hi, dp)
    return make_store(phase, mat, h, pos, mat.rho0 * dp**3, fixed)


def subset(store, mask):
    """New store keeping only particles where mask is True."""
    mask = np.asarray(mask, dtype=bool)

    def take(a):
        return None if a is None else a[mask].copy()

    return ParticleStore(
        phase=store.phase, mat=store.mat, h=store.h,
        pos=store.pos[mask].copy(), vel=store.vel[mask].copy(),
        rho=store.rho[mask].copy(), p=store.p[mask].copy(),
        m=store.m[mask].copy(), fixed=store.fixed[mask].copy(),
        S=take(store.S), eps=take(store.eps), damage=take(store.damage),
        ext_force=take(store.ext_force),
        p_b=take(store.p_b), rho_b=take(store.rho_b),
        p_bs=take(store.p_bs), rho_bs=take(store.rho_bs),
    )


def merge(a, b):
    """Concatenate two stores of the same phase and material."""
    if a.phase != b.phase:
        raise ValueError("cannot merge stores of different phases")
    if a.mat != b.mat or a.h != b.h:
        raise ValueError("cannot merge stores with different materials")

    def cat(x, y):
        return None if x is None else np.concatenate([x, y])

    return ParticleStore(
        phase=a.phase, mat=a.mat, h=a.h,
        pos=np.concatenate([a.pos, b.pos]), vel=np.concatenate([a.vel, b.vel]),
        rho=np.concatenate([a.rho, b.rho]), p=np.concatenate([a.p, b.p]),
        m=np.concatenate([a.m, b.m]), fixed=np.concatenate([a.fixed, b.fixed]),
        S=cat(a.S, b.S), eps=cat(a.eps, b.eps), damage=cat(a.damage, b.damage),
        ext_force=cat(a.ext_force, b.ext_force),
        p_b=cat(a.p_b, b.p_b), rho_b=cat(a.rho_b, b.rho_b),
        p_bs=cat(a.p_bs, b.p_bs), rho_bs=cat(a.rho_bs, b.rho_bs),
    )


def generate_wall(boxes, layers, dp, mat, h):
    """Static boundary particles filling the given slab boxes.

    Each box must be exactly `layers` lattice sites thick along its
    thinnest axis; boxes may touch but not overlap (overlap would put
    duplicate particles at the seam and double the wall density there).
    """
    if layers < 1:
        raise ValueError(f"wall needs at least one layer, got {layers}")
    parts = []
    for lo, hi in boxes:
        pos = lattice_positions(lo, hi, dp)
        counts = np.rint((np.asarray(hi, float) - np.asarray(lo, float)) / dp)
        if int(counts.min()) != layers:
            raise ValueError(
                f"wall box {lo}..{hi} is {int(counts.min())} sites thick, "
                f"expected {layers}"
            )
        parts.append(pos)
    pos = np.concatenate(parts)
    keys = np.round(pos / (0.5 * dp)).astype(np.int64)
    if len(np.unique(keys, axis=0)) != len(keys):
        raise ValueError("wall boxes overlap")
    return make_store(Phase.WALL, mat, h, pos, mat.rho0 * dp**3, fixed=True)


@dataclass
class SimState:
    """Everything the integrator advances, plus scene-level constants."""

    dp: float
    gravity: np.ndarray
    fluid: ParticleStore | None = None
    solid: ParticleStore | None = None
    wall: ParticleStore | None = None
    springs: "SpringNetwork | None" = None  # noqa: F821 (built in neighbors)
    time: float = 0.0
    step_count: int = 0
    dt_last: float = 0.0
    load_ramp: float = 0.0
    probe_ctx: dict = field(default_factory=dict)

    def stores(self):
        return [s for s in (self.fluid, self.solid, self.wall) if s is not None]

    def max_speed(self):
        v = 0.0
        for s in (self.fluid, self.solid):
            if s is not None and s.n:
                v = max(v, float(np.sqrt((s.vel * s.vel).sum(axis=1).max())))
        return v
