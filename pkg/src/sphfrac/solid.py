"""Pseudo-spring elastic solid solver.

Solid particles interact only through their initial lattice shell
(spring partners); failed springs drop out permanently. All gradients
use the per-particle renormalization matrix, which keeps kinematics
first-order exact on the truncated neighborhoods that cracks and free
surfaces create. Stress is hypoelastic: linear bulk pressure plus a
deviatoric part advanced with the Jaumann objective rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .kernel import COND_LIMIT, grad_w_factor, invert3, w_scalar


@dataclass
class SolidRates:
    """Field rates for the solid phase (internal forces only; gravity,
    external loads and coupling are composed by the integrator)."""

    drho_dt: np.ndarray
    dv_dt: np.ndarray
    dS_dt: np.ndarray
    deps_dt: np.ndarray
    fallback_count: int = 0


def solid_pressure(rho, mat):
    """Linear bulk pressure; negative in tension."""
    return mat.bulk_modulus * (np.asarray(rho, dtype=np.float64) / mat.rho0 - 1.0)


@njit(cache=True, inline="always")
def _artificial_pressure_pair(p_i, p_j, rho_i, rho_j, w_r, w_dp, nbar,
                              gamma_ap):
    """Short-range repulsion against tensile particle clumping."""
    if gamma_ap == 0.0 or w_r == 0.0:
        return 0.0
    return gamma_ap * (abs(p_i) / (rho_i * rho_i) + abs(p_j) / (rho_j * rho_j)) \
        * (w_r / w_dp) ** nbar


def artificial_pressure(p_i, p_j, rho_i, rho_j, d_ij, dp, h, gamma_ap):
    """Scalar artificial pressure for one pair at separation d_ij."""
    if dp <= 0.0:
        raise ValueError(f"reference spacing must be positive, got {dp}")
    w_dp = w_scalar(dp, h)
    nbar = w_scalar(0.0, h) / w_dp
    return _artificial_pressure_pair(p_i, p_j, rho_i, rho_j,
                                     w_scalar(d_ij, h), w_dp, nbar, gamma_ap)


def strain_spin_rates(l):
    """Symmetric/antisymmetric split of a velocity gradient tensor."""
    l = np.asarray(l, dtype=np.float64)
    eps_dot = 0.5 * (l + l.T)
    omega = 0.5 * (l - l.T)
    return eps_dot, omega


def deviatoric_stress_rate(S, eps_dot, omega, mu_shear):
    """Jaumann rate of the deviatoric stress (trace-free by construction)."""
    S = np.asarray(S, dtype=np.float64)
    eps_dot = np.asarray(eps_dot, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    dev = eps_dot - (np.trace(eps_dot) / 3.0) * np.eye(3)
    return 2.0 * mu_shear * dev + S @ omega.T + omega @ S


def rayleigh_speed(mat):
    """Rayleigh surface wave speed (Viktorov approximation)."""
    cs = np.sqrt(mat.shear_modulus / mat.rho0)
    return cs * (0.862 + 1.14 * mat.nu) / (1.0 + mat.nu)


@njit(cache=True)
def _correction_pass(pos, m, rho, adj_off, adj_partner, adj_edge, f, h,
                     B_out, fallback):
    """Renormalization matrix per particle over intact spring partners."""
    A = np.empty((3, 3))
    B = np.empty((3, 3))
    n = adj_off.shape[0] - 1
    n_fallback = 0
    for i in range(n):
        for r in range(3):
            for c in range(3):
                A[r, c] = 0.0
        for k in range(adj_off[i], adj_off[i + 1]):
            if f[adj_edge[k]] == 0:
                continue
            j = adj_partner[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r_ = np.sqrt(dx * dx + dy * dy + dz * dz)
            g = grad_w_factor(r_, h)
            if g == 0.0:
                continue
            c_ = -(m[j] / rho[j]) * g
            A[0, 0] += c_ * dx * dx
            A[0, 1] += c_ * dx * dy
            A[0, 2] += c_ * dx * dz
            A[1, 0] += c_ * dy * dx
            A[1, 1] += c_ * dy * dy
            A[1, 2] += c_ * dy * dz
            A[2, 0] += c_ * dz * dx
            A[2, 1] += c_ * dz * dy
            A[2, 2] += c_ * dz * dz
        det = invert3(A, B)
        ok = det != 0.0
        if ok:
            na = 0.0
            nb = 0.0
            for r in range(3):
                for c in range(3):
                    na += A[r, c] * A[r, c]
                    nb += B[r, c] * B[r, c]
            ok = np.sqrt(na) * np.sqrt(nb) <= COND_LIMIT
        if ok:
            for r in range(3):
                for c in range(3):
                    B_out[i, 3 * r + c] = B[r, c]
            fallback[i] = 0
        else:
            for r in range(3):
                for c in range(3):
                    B_out[i, 3 * r + c] = 1.0 if r == c else 0.0
            fallback[i] = 1
            n_fallback += 1
    return n_fallback


@njit(cache=True)
def _solid_pass(pos, vel, rho, p, m, S, B, adj_off, adj_partner, adj_edge,
                f, h, mu_shear, c0, beta1, beta2, gamma_ap, w_dp, nbar,
                drho, acc, dS, deps):
    """Fused rate evaluation over spring partners.

    Internal forces use the full stress sigma = S - p*I plus pairwise
    artificial viscosity and artificial pressure; kinematic rates come
    from the corrected velocity gradient of the same neighbor set.
    """
    eps_h2 = 0.01 * h * h
    n = adj_off.shape[0] - 1
    lm = np.empty((3, 3))
    sm = np.empty((3, 3))
    wm = np.empty((3, 3))
    for i in range(n):
        b00 = B[i, 0]
        b01 = B[i, 1]
        b02 = B[i, 2]
        b10 = B[i, 3]
        b11 = B[i, 4]
        b12 = B[i, 5]
        b20 = B[i, 6]
        b21 = B[i, 7]
        b22 = B[i, 8]
        rho_i = rho[i]
        p_i = p[i]
        inv_ri2 = 1.0 / (rho_i * rho_i)
        # sigma_i / rho_i^2 in tensor component order
        si0 = (S[i, 0] - p_i) * inv_ri2
        si1 = (S[i, 1] - p_i) * inv_ri2
        si2 = (S[i, 2] - p_i) * inv_ri2
        si3 = S[i, 3] * inv_ri2
        si4 = S[i, 4] * inv_ri2
        si5 = S[i, 5] * inv_ri2
        for r in range(3):
            for c in range(3):
                lm[r, c] = 0.0
        dr = 0.0
        ax = ay = az = 0.0
        for k in range(adj_off[i], adj_off[i + 1]):
            if f[adj_edge[k]] == 0:
                continue
            j = adj_partner[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            r_ = np.sqrt(r2)
            g = grad_w_factor(r_, h)
            if g == 0.0:
                continue
            gwx = g * dx
            gwy = g * dy
            gwz = g * dz
            # corrected gradient for row i
            wx = b00 * gwx + b01 * gwy + b02 * gwz
            wy = b10 * gwx + b11 * gwy + b12 * gwz
            wz = b20 * gwx + b21 * gwy + b22 * gwz
            dvx = vel[i, 0] - vel[j, 0]
            dvy = vel[i, 1] - vel[j, 1]
            dvz = vel[i, 2] - vel[j, 2]
            dr += m[j] * (dvx * wx + dvy * wy + dvz * wz)
            vol = m[j] / rho[j]
            lm[0, 0] -= vol * dvx * wx
            lm[0, 1] -= vol * dvx * wy
            lm[0, 2] -= vol * dvx * wz
            lm[1, 0] -= vol * dvy * wx
            lm[1, 1] -= vol * dvy * wy
            lm[1, 2] -= vol * dvy * wz
            lm[2, 0] -= vol * dvz * wx
            lm[2, 1] -= vol * dvz * wy
            lm[2, 2] -= vol * dvz * wz
            rho_j = rho[j]
            p_j = p[j]
            inv_rj2 = 1.0 / (rho_j * rho_j)
            pi_ij = 0.0
            vdotx = dvx * dx + dvy * dy + dvz * dz
            if vdotx <= 0.0:
                mu_ij = h * vdotx / (r2 + eps_h2)
                pi_ij = (-beta1 * c0 * mu_ij + beta2 * mu_ij * mu_ij) \
                    / (0.5 * (rho_i + rho_j))
            pa = _artificial_pressure_pair(p_i, p_j, rho_i, rho_j,
                                           w_scalar(r_, h), w_dp, nbar,
                                           gamma_ap)
            diag = -pi_ij - pa
            t0 = si0 + (S[j, 0] - p_j) * inv_rj2 + diag
            t1 = si1 + (S[j, 1] - p_j) * inv_rj2 + diag
            t2 = si2 + (S[j, 2] - p_j) * inv_rj2 + diag
            t3 = si3 + S[j, 3] * inv_rj2
            t4 = si4 + S[j, 4] * inv_rj2
            t5 = si5 + S[j, 5] * inv_rj2
            ax += m[j] * (t0 * wx + t3 * wy + t4 * wz)
            ay += m[j] * (t3 * wx + t1 * wy + t5 * wz)
            az += m[j] * (t4 * wx + t5 * wy + t2 * wz)
        drho[i] = dr
        acc[i, 0] = ax
        acc[i, 1] = ay
        acc[i, 2] = az
        # strain and spin rates, then the Jaumann deviatoric update
        e00 = lm[0, 0]
        e11 = lm[1, 1]
        e22 = lm[2, 2]
        e01 = 0.5 * (lm[0, 1] + lm[1, 0])
        e02 = 0.5 * (lm[0, 2] + lm[2, 0])
        e12 = 0.5 * (lm[1, 2] + lm[2, 1])
        deps[i, 0] = e00
        deps[i, 1] = e11
        deps[i, 2] = e22
        deps[i, 3] = e01
        deps[i, 4] = e02
        deps[i, 5] = e12
        sm[0, 0] = S[i, 0]
        sm[1, 1] = S[i, 1]
        sm[2, 2] = S[i, 2]
        sm[0, 1] = S[i, 3]
        sm[1, 0] = S[i, 3]
        sm[0, 2] = S[i, 4]
        sm[2, 0] = S[i, 4]
        sm[1, 2] = S[i, 5]
        sm[2, 1] = S[i, 5]
        wm[0, 0] = 0.0
        wm[1, 1] = 0.0
        wm[2, 2] = 0.0
        wm[0, 1] = 0.5 * (lm[0, 1] - lm[1, 0])
        wm[1, 0] = -wm[0, 1]
        wm[0, 2] = 0.5 * (lm[0, 2] - lm[2, 0])
        wm[2, 0] = -wm[0, 2]
        wm[1, 2] = 0.5 * (lm[1, 2] - lm[2, 1])
        wm[2, 1] = -wm[1, 2]
        tr3 = (e00 + e11 + e22) / 3.0
        for a in range(3):
            for b_ in range(a, 3):
                val = 0.0
                if a == b_:
                    val += 2.0 * mu_shear * (lm[a, a] - tr3)
                else:
                    ed = 0.5 * (lm[a, b_] + lm[b_, a])
                    val += 2.0 * mu_shear * ed
                rot = 0.0
                for gdx in range(3):
                    rot += sm[a, gdx] * wm[b_, gdx] + sm[gdx, b_] * wm[a, gdx]
                val += rot
                if a == 0 and b_ == 0:
                    dS[i, 0] = val
                elif a == 1 and b_ == 1:
                    dS[i, 1] = val
                elif a == 2 and b_ == 2:
                    dS[i, 2] = val
                elif a == 0 and b_ == 1:
                    dS[i, 3] = val
                elif a == 0 and b_ == 2:
                    dS[i, 4] = val
                else:
                    dS[i, 5] = val


def compute_correction_matrices(solid, net, h):
    """(n, 9) row-major B matrices over intact spring partners, plus the
    per-particle degenerate-support flags."""
    B = np.empty((solid.n, 9))
    fallback = np.zeros(solid.n, dtype=np.uint8)
    _correction_pass(solid.pos, solid.m, solid.rho, net.adj_off,
                     net.adj_partner, net.adj_edge, net.f, h, B, fallback)
    return B, fallback


def velocity_gradient(i, net, store, B, h):
    """Corrected velocity gradient tensor l for particle i.

    Exact for linear velocity fields whenever the correction did not
    fall back (intact, non-degenerate neighborhoods).
    """
    Bi = np.asarray(B, dtype=np.float64).reshape(3, 3)
    l = np.zeros((3, 3))
    for k in range(net.adj_off[i], net.adj_off[i + 1]):
        if net.f[net.adj_edge[k]] == 0:
            continue
        j = net.adj_partner[k]
        d = store.pos[i] - store.pos[j]
        r = float(np.sqrt(d @ d))
        g = grad_w_factor(r, h)
        if g == 0.0:
            continue
        w_hat = Bi @ (g * d)
        l += (store.m[j] / store.rho[j]) * np.outer(store.vel[j] - store.vel[i], w_hat)
    return l


def solid_rates(solid, net, mat, h, dp):
    """Internal rates for every solid particle (Eq.-of-motion terms from
    neighbor stress, artificial viscosity/pressure, and the corrected
    kinematic rates feeding the constitutive update)."""
    B, fallback = compute_correction_matrices(solid, net, h)
    drho = np.zeros(solid.n)
    acc = np.zeros((solid.n, 3))
    dS = np.zeros((solid.n, 6))
    deps = np.zeros((solid.n, 6))
    w_dp = w_scalar(dp, h)
    nbar = w_scalar(0.0, h) / w_dp
    _solid_pass(solid.pos, solid.vel, solid.rho, solid.p, solid.m, solid.S,
                B, net.adj_off, net.adj_partner, net.adj_edge, net.f, h,
                mat.shear_modulus, mat.c0, mat.beta1, mat.beta2,
                mat.gamma_ap, w_dp, nbar, drho, acc, dS, deps)
    return SolidRates(drho_dt=drho, dv_dt=acc, dS_dt=dS, deps_dt=deps,
                      fallback_count=int(fallback.sum()))


def von_mises(S):
    """Equivalent stress from packed deviatoric components (n, 6)."""
    S = np.asarray(S, dtype=np.float64)
    sq = (S[..., 0] ** 2 + S[..., 1] ** 2 + S[..., 2] ** 2
          + 2.0 * (S[..., 3] ** 2 + S[..., 4] ** 2 + S[..., 5] ** 2))
    return np.sqrt(1.5 * sq)


def crack_tip_speed(times, tips):
    """Tip speeds from a sampled tip trajectory; NaN where undefined.

    Returns an array aligned with `times`: entry k is the speed over
    (t_{k-1}, t_k], entry 0 is NaN (no preceding sample).
    """
    times = np.asarray(times, dtype=np.float64)
    tips = np.asarray(tips, dtype=np.float64).reshape(-1, 3)
    if times.shape[0] != tips.shape[0]:
        raise ValueError("times and tips must align")
    out = np.full(times.shape[0], np.nan)
    if times.shape[0] < 2:
        return out
    dt = np.diff(times)
    step = np.linalg.norm(np.diff(tips, axis=0), axis=1)
    out[1:] = step / dt
    return out
