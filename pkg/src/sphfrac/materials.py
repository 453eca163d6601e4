"""Material parameter bundles for fluids, elastic solids and walls."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive constants for one particle phase.

    Fluids use the stiffened power-law equation of state with reference
    pressure p0 = c0^2 rho0 / gamma_eos; solids use a linear bulk law
    p = K (rho/rho0 - 1) plus a deviatoric hypoelastic law, so E and nu
    must be set for them. beta1/beta2 are the linear/quadratic artificial
    viscosity coefficients, gamma_ap scales the short-range artificial
    pressure that suppresses tensile clumping, and eps_fail is the pair
    strain at which springs break (inf = no fracture).
    """

    rho0: float
    c0: float = 0.0
    gamma_eos: float = 7.0
    mu: float = 0.0
    delta: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    E: float = 0.0
    nu: float = 0.0
    gamma_ap: float = 0.0
    eps_fail: float = math.inf
    rho_floor_frac: float = 0.5

    def __post_init__(self):
        if self.rho0 <= 0.0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if self.c0 < 0.0:
            raise ValueError(f"c0 must be non-negative, got {self.c0}")
        if self.gamma_eos < 1.0:
            raise ValueError(f"gamma_eos must be >= 1, got {self.gamma_eos}")
        if self.E < 0.0 or self.mu < 0.0:
            raise ValueError("E and mu must be non-negative")
        if self.E > 0.0 and not -1.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (-1, 0.5), got {self.nu}")
        if self.eps_fail <= 0.0:
            raise ValueError(f"eps_fail must be positive, got {self.eps_fail}")
        if not 0.0 < self.rho_floor_frac < 1.0:
            raise ValueError("rho_floor_frac must lie in (0, 1)")

    @property
    def p0(self):
        """Tait reference pressure."""
        return self.c0 * self.c0 * self.rho0 / self.gamma_eos

    @property
    def bulk_modulus(self):
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def shear_modulus(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def rho_floor(self):
        return self.rho_floor_frac * self.rho0

    def with_(self, **kw):
        return replace(self, **kw)


def water(rho0=1000.0, c0=None, ref_speed=None, mu=0.0, delta=0.1,
          beta1=0.03, beta2=0.0):
    """Weakly compressible water-like fluid.

    Either pass c0 directly or ref_speed (the fastest bulk speed the
    scene will see); the artificial sound speed is then 10x that, which
    keeps density variations near 1%.
    """
    if c0 is None:
        if ref_speed is None:
            raise ValueError("water() needs c0 or ref_speed")
        c0 = 10.0 * ref_speed
    return MaterialParams(rho0=rho0, c0=c0, gamma_eos=7.0, mu=mu, delta=delta,
                          beta1=beta1, beta2=beta2)


def elastic(rho0, E, nu, beta1=1.5, beta2=1.5, gamma_ap=0.25,
            eps_fail=math.inf):
    """Linear elastic (optionally brittle) solid.

    The stored c0 is the bulk wave speed sqrt(K/rho0); it drives both
    the artificial viscosity and the stable-timestep estimate.
    """
    if E <= 0.0:
        raise ValueError(f"elastic() needs E > 0, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"nu must lie in (-1, 0.5), got {nu}")
    K = E / (3.0 * (1.0 - 2.0 * nu))
    return MaterialParams(rho0=rho0, c0=math.sqrt(K / rho0), gamma_eos=7.0,
                          beta1=beta1, beta2=beta2, E=E, nu=nu,
                          gamma_ap=gamma_ap, eps_fail=eps_fail)
