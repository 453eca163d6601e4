"""Wendland C2 smoothing kernel and first-order gradient correction.

All interpolation in the package goes through this module: the scalar
kernel, its analytic gradient, and the renormalization matrix that
restores first-order consistency of gradients near free surfaces,
cracks and one-sided neighborhoods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# Support radius is SUPPORT * h; the Wendland C2 polynomial below is
# written for q = r/h on [0, 2].
SUPPORT = 2.0

# Fallback threshold for the renormalization matrix: above this Frobenius
# condition estimate the neighborhood is treated as degenerate.
COND_LIMIT = 1.0e8


@njit(cache=True, inline="always")
def _sigma3(h):
    return 21.0 / (16.0 * np.pi * h * h * h)


@njit(cache=True, inline="always")
def w_scalar(r, h):
    """Kernel value at separation r (3D normalization)."""
    q = r / h
    if q >= 2.0:
        return 0.0
    t = 1.0 - 0.5 * q
    return _sigma3(h) * t * t * t * t * (2.0 * q + 1.0)


@njit(cache=True, inline="always")
def grad_w_factor(r, h):
    """Scalar g(r) with grad_i W(x_i - x_j) = g * (x_i - x_j).

    Finite at r = 0, identically zero outside the support, so callers
    never special-case coincident or distant pairs.
    """
    q = r / h
    if q >= 2.0:
        return 0.0
    t = 1.0 - 0.5 * q
    return -5.0 * _sigma3(h) * t * t * t / (h * h)


@njit(cache=True, inline="always")
def invert3(a, out):
    """Adjugate inverse of a 3x3 matrix. Returns det; out is unchanged
    when det == 0."""
    c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    c01 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    c02 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    det = a[0, 0] * c00 + a[0, 1] * c01 + a[0, 2] * c02
    if det == 0.0:
        return 0.0
    inv = 1.0 / det
    out[0, 0] = c00 * inv
    out[1, 0] = c01 * inv
    out[2, 0] = c02 * inv
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) * inv
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) * inv
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) * inv
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) * inv
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) * inv
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) * inv
    return det


@njit(cache=True)
def _frob(a):
    s = 0.0
    for r in range(3):
        for c in range(3):
            s += a[r, c] * a[r, c]
    return np.sqrt(s)


def kernel_value(r, h):
    """W(r; h) for r >= 0. Compact support: zero for r >= 2h."""
    if h <= 0.0:
        raise ValueError(f"smoothing length must be positive, got {h}")
    if r < 0.0:
        raise ValueError(f"distance must be non-negative, got {r}")
    return w_scalar(r, h)


def kernel_gradient(rvec, h):
    """grad_i W(x_i - x_j; h) evaluated at separation rvec = x_i - x_j."""
    if h <= 0.0:
        raise ValueError(f"smoothing length must be positive, got {h}")
    rvec = np.asarray(rvec, dtype=np.float64)
    r = float(np.sqrt(rvec @ rvec))
    return grad_w_factor(r, h) * rvec


@dataclass
class CorrectionResult:
    """Renormalization matrix for one particle's neighborhood."""

    B: np.ndarray
    cond: float
    fallback: bool


def correction_matrix(i, neighbors, pos, volume, h):
    """Inverse renormalization matrix B for particle i.

    A = -sum_j V_j (x_i - x_j) (x) grad_i W_ij; since grad W is parallel
    to the pair separation, A is exactly symmetric and B = A^-1 makes
    corrected gradients reproduce linear fields on arbitrary (including
    one-sided) neighborhoods. Degenerate neighborhoods (fewer than three
    non-coplanar neighbors, or condition estimate beyond COND_LIMIT)
    fall back to the identity and are flagged rather than raising.
    """
    pos = np.asarray(pos, dtype=np.float64)
    volume = np.asarray(volume, dtype=np.float64)
    A = np.zeros((3, 3))
    xi = pos[i]
    for j in neighbors:
        if j == i:
            continue
        d = xi - pos[j]
        r = float(np.sqrt(d @ d))
        g = grad_w_factor(r, h)
        A -= volume[j] * g * np.outer(d, d)
    B = np.empty((3, 3))
    det = invert3(A, B)
    if det == 0.0:
        return CorrectionResult(np.eye(3), np.inf, True)
    cond = _frob(A) * _frob(B)
    if cond > COND_LIMIT:
        return CorrectionResult(np.eye(3), cond, True)
    return CorrectionResult(B, cond, False)
