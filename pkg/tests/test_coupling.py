"""Fluid-structure force exchange tests: exact momentum cancellation,
buoyancy against the analytic Archimedes force, and contact support."""

import numpy as np

from sphfrac.coupling import (
    couple,
    extrapolate_wall_from_solid,
    wall_support,
)
from sphfrac.fluid import eos_density, extrapolate_boundary_state
from sphfrac.materials import elastic, water
from sphfrac.particles import Phase, build_lattice, subset
from sphfrac.solid import solid_pressure

DP = 0.01
H = 1.3 * DP
G = np.array([0.0, 0.0, -9.81])
WATER = water(rho0=1000.0, c0=50.0)
GLASS = elastic(rho0=2450.0, E=32e9, nu=0.2)


def slab_setup():
    """Hydrostatic fluid box with a solid slab carved into its middle."""
    fluid = build_lattice([0, 0, 0], [0.14, 0.14, 0.12], DP,
                          Phase.FLUID, WATER, H)
    lo = np.array([0.04, 0.04, 0.05])
    hi = np.array([0.10, 0.10, 0.07])
    inside = np.all((fluid.pos > lo) & (fluid.pos < hi), axis=1)
    fluid = subset(fluid, ~inside)
    solid = build_lattice(lo, hi, DP, Phase.SOLID, GLASS, H)
    z_top = 0.12
    p = WATER.rho0 * 9.81 * (z_top - fluid.pos[:, 2])
    fluid.p[:] = p
    fluid.rho[:] = eos_density(p, WATER, warn=False)
    return fluid, solid


def test_forces_cancel_exactly():
    fluid, solid = slab_setup()
    rng = np.random.default_rng(5)
    fluid.vel[:] = rng.normal(scale=0.5, size=fluid.vel.shape)
    solid.vel[:] = rng.normal(scale=0.5, size=solid.vel.shape)
    forces = couple(fluid, solid, G, DP)
    net = forces.on_fluid.sum(axis=0) + forces.on_solid.sum(axis=0)
    scale = max(np.abs(forces.on_solid).max(), np.abs(forces.on_fluid).max())
    assert scale > 0.0
    assert np.abs(net).max() < 1e-10 * scale


def test_archimedes_buoyancy():
    fluid, solid = slab_setup()
    forces = couple(fluid, solid, G, DP)
    fz = forces.on_solid[:, 2].sum()
    v_slab = solid.n * DP**3
    expected = WATER.rho0 * 9.81 * v_slab
    assert abs(fz - expected) / expected < 0.05
    # horizontal components cancel by symmetry
    assert abs(forces.on_solid[:, 0].sum()) < 0.01 * expected
    assert abs(forces.on_solid[:, 1].sum()) < 0.01 * expected


def test_separated_phases_no_force():
    fluid = build_lattice([0, 0, 0], [0.03, 0.03, 0.03], DP,
                          Phase.FLUID, WATER, H)
    solid = build_lattice([0.2, 0.0, 0.0], [0.23, 0.03, 0.03], DP,
                          Phase.SOLID, GLASS, H)
    fluid.p[:] = 1e4
    forces = couple(fluid, solid, G, DP)
    assert np.abs(forces.on_fluid).max() == 0.0
    assert np.abs(forces.on_solid).max() == 0.0


def test_viscous_term_resists_approach():
    fluid = build_lattice([0, 0, 0], [DP, DP, DP], DP, Phase.FLUID, WATER, H)
    solid = build_lattice([0, 0, -DP], [DP, DP, 0.0], DP, Phase.SOLID,
                          GLASS, H)
    solid.p_b[:] = 500.0
    solid.rho_b[:] = WATER.rho0
    fluid.p[:] = 500.0

    fluid.vel[:, 2] = -1.0  # closing in on the structure below
    f_in = couple(fluid, solid, G, DP, extrapolate=False).on_fluid[0, 2]
    fluid.vel[:, 2] = 1.0
    f_out = couple(fluid, solid, G, DP, extrapolate=False).on_fluid[0, 2]
    assert f_in > f_out > 0.0


def test_wall_support_carries_resting_block():
    wall = build_lattice([-0.01, -0.01, -0.03], [0.06, 0.06, 0.0], DP,
                         Phase.WALL, GLASS, H)
    solid = build_lattice([0.01, 0.01, 0.0], [0.04, 0.04, 0.02], DP,
                          Phase.SOLID, GLASS, H)
    solid.rho[:] = 1.0001 * GLASS.rho0  # slight compression at contact
    solid.p[:] = solid_pressure(solid.rho, GLASS)
    assert solid.p.min() > 0.0
    extrapolate_wall_from_solid(wall, solid)
    touched = wall.p_bs > 0.0
    assert touched.any()
    f = wall_support(solid, wall, DP, extrapolate=False)
    assert f[:, 2].sum() > 0.0
    assert abs(f[:, 0].sum()) < 1e-8 * abs(f[:, 2].sum())
    assert abs(f[:, 1].sum()) < 1e-8 * abs(f[:, 2].sum())
    # support decays with distance: the contact layer carries most of it
    top_layer = solid.pos[:, 2] > 0.014
    bottom_layer = ~top_layer
    assert f[bottom_layer, 2].sum() > 3.0 * f[top_layer, 2].sum() > 0.0


def test_extrapolation_into_solid_sees_hydrostatic_pressure():
    fluid, solid = slab_setup()
    extrapolate_boundary_state(solid, fluid, G)
    z_top = 0.12
    shell = np.abs(solid.pos[:, 2] - solid.pos[:, 2].min()) < 1e-9
    expect = WATER.rho0 * 9.81 * (z_top - solid.pos[shell, 2])
    got = solid.p_b[shell]
    assert np.abs(got - expect).max() < 0.08 * expect.max()
