import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sphfrac.kernel import (
    CorrectionResult,
    correction_matrix,
    kernel_gradient,
    kernel_value,
)


@pytest.mark.parametrize("h", [0.3, 1.0, 1.3e-3])
def test_unit_integral(h):
    # Independent radial quadrature of 4*pi*r^2*W over the support.
    val, err = quad(lambda r: 4.0 * np.pi * r * r * kernel_value(r, h), 0.0, 2.0 * h)
    assert err < 1e-12
    assert val == pytest.approx(1.0, abs=1e-10)


def test_peak_value():
    h = 0.65
    assert kernel_value(0.0, h) == pytest.approx(21.0 / (16.0 * np.pi * h**3), rel=1e-14)


def test_compact_support_and_continuity():
    h = 0.1
    assert kernel_value(2.0 * h, h) == 0.0
    assert kernel_value(5.0 * h, h) == 0.0
    assert kernel_value(2.0 * h - 1e-9, h) < 1e-6 * kernel_value(0.0, h)
    assert np.all(kernel_gradient([2.1 * h, 0.0, 0.0], h) == 0.0)


def test_monotone_decreasing():
    h = 0.04
    r = np.linspace(0.0, 2.0 * h, 400)
    w = np.array([kernel_value(x, h) for x in r])
    assert np.all(np.diff(w) <= 0.0)


def test_tensile_correction_ratio():
    # W(0)/W(dp) for h = 1.3 dp, the exponent used by the artificial
    # pressure term.
    dp = 0.002
    h = 1.3 * dp
    assert kernel_value(0.0, h) / kernel_value(dp, h) == pytest.approx(2.747, abs=5e-3)


@given(
    r=st.floats(min_value=0.0, max_value=10.0),
    h=st.floats(min_value=1e-3, max_value=10.0),
)
@settings(max_examples=200, deadline=None)
def test_nonnegative_everywhere(r, h):
    assert kernel_value(r, h) >= 0.0


def test_gradient_matches_finite_differences():
    h = 0.37
    rng = np.random.default_rng(7)
    eps = 1e-7
    for _ in range(25):
        x = rng.uniform(-2.0 * h, 2.0 * h, size=3)
        if np.linalg.norm(x) < 0.05 * h or np.linalg.norm(x) > 1.95 * h:
            continue
        g = kernel_gradient(x, h)
        for a in range(3):
            dx = np.zeros(3)
            dx[a] = eps
            num = (
                kernel_value(np.linalg.norm(x + dx), h)
                - kernel_value(np.linalg.norm(x - dx), h)
            ) / (2.0 * eps)
            assert g[a] == pytest.approx(num, rel=2e-6, abs=1e-6 * abs(g).max())


def test_gradient_zero_at_origin():
    assert np.all(kernel_gradient([0.0, 0.0, 0.0], 0.2) == 0.0)


def test_gradient_antisymmetric_in_separation():
    h = 0.5
    x = np.array([0.2, -0.1, 0.3])
    assert np.allclose(kernel_gradient(x, h), -kernel_gradient(-x, h))


def test_invalid_arguments():
    with pytest.raises(ValueError):
        kernel_value(-1e-9, 0.1)
    with pytest.raises(ValueError):
        kernel_value(0.1, 0.0)
    with pytest.raises(ValueError):
        kernel_gradient([0.1, 0.0, 0.0], -0.2)


def _lattice(n, dp):
    ax = (np.arange(n) - (n - 1) / 2.0) * dp
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    return pts


def test_correction_near_identity_on_full_lattice():
    dp = 0.01
    h = 1.3 * dp
    pos = _lattice(5, dp)
    center = int(np.argmin(np.linalg.norm(pos, axis=1)))
    vol = np.full(len(pos), dp**3)
    nbrs = [j for j in range(len(pos)) if j != center]
    res = correction_matrix(center, nbrs, pos, vol, h)
    assert isinstance(res, CorrectionResult)
    assert not res.fallback
    assert np.allclose(res.B, res.B.T, atol=1e-12)
    assert np.linalg.norm(res.B - np.eye(3)) < 0.05


@pytest.mark.parametrize("keep", ["half_space", "octant"])
def test_corrected_gradient_exact_for_linear_fields(keep):
    # The whole point of the renormalization: on truncated neighborhoods
    # the corrected gradient of a linear field is exact.
    dp = 0.01
    h = 1.5 * dp
    pos = _lattice(7, dp)
    if keep == "half_space":
        mask = pos[:, 0] <= 1e-12
    else:
        mask = np.all(pos <= 1e-12, axis=1)
    pos = pos[mask]
    center = int(np.argmin(np.linalg.norm(pos, axis=1)))
    vol = np.full(len(pos), dp**3)
    nbrs = [j for j in range(len(pos)) if j != center]
    res = correction_matrix(center, nbrs, pos, vol, h)
    assert not res.fallback

    L = np.array([[1.0, 2.0, -0.5], [0.3, -1.2, 4.0], [0.0, 0.7, 2.2]])
    f = pos @ L.T  # f(x) = L x
    grad = np.zeros((3, 3))
    for j in nbrs:
        d = pos[center] - pos[j]
        gw = kernel_gradient(d, h)
        grad += vol[j] * np.outer(f[j] - f[center], res.B @ gw)
    assert np.allclose(grad, L, atol=1e-9)


def test_degenerate_neighborhood_falls_back():
    # Coplanar neighbors cannot support a 3D gradient: flag, don't crash.
    dp = 0.01
    pos = np.array(
        [[0.0, 0.0, 0.0], [dp, 0.0, 0.0], [-dp, 0.0, 0.0], [0.0, dp, 0.0], [0.0, -dp, 0.0]]
    )
    vol = np.full(len(pos), dp**3)
    res = correction_matrix(0, [1, 2, 3, 4], pos, vol, 1.3 * dp)
    assert res.fallback
    assert np.array_equal(res.B, np.eye(3))


def test_near_coplanar_neighborhood_falls_back():
    # Tiny out-of-plane jitter makes A invertible but terribly
    # conditioned; the guard must treat it like the exact-coplanar case.
    dp = 0.01
    z = 0.01 * dp
    pos = np.array(
        [[0.0, 0.0, 0.0], [dp, 0.0, z], [-dp, 0.0, z], [0.0, dp, -z], [0.0, -dp, -z]]
    )
    vol = np.full(len(pos), dp**3)
    res = correction_matrix(0, [1, 2, 3, 4], pos, vol, 1.3 * dp)
    assert np.isfinite(res.cond)
    assert res.fallback
    assert np.array_equal(res.B, np.eye(3))


def test_no_neighbors_falls_back():
    pos = np.zeros((1, 3))
    res = correction_matrix(0, [], pos, np.ones(1), 0.01)
    assert res.fallback
