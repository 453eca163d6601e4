import numpy as np
import pytest
from scipy.spatial import cKDTree

from sphfrac.neighbors import (
    active_neighbors,
    build_spring_network,
    neighbor_table,
    rebuild_grid,
    update_springs,
)


def _cloud(n, seed, box=1.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, box, size=(n, 3))


def test_neighbor_table_matches_kdtree():
    pos = _cloud(400, 3)
    cutoff = 0.17
    grid = rebuild_grid(pos, cutoff)
    nbr, cnt = neighbor_table(grid, pos, (0, len(pos)), [(0, len(pos))], cutoff)
    tree = cKDTree(pos)
    for i in range(len(pos)):
        expect = sorted(j for j in tree.query_ball_point(pos[i], cutoff) if j != i)
        got = sorted(nbr[i, : cnt[i]])
        assert got == expect


def test_neighbor_table_range_filter():
    pos = _cloud(300, 5)
    cutoff = 0.2
    grid = rebuild_grid(pos, cutoff)
    # Rows 0..50 accepting only columns 100..200.
    nbr, cnt = neighbor_table(grid, pos, (0, 50), [(100, 200)], cutoff)
    tree = cKDTree(pos)
    for r in range(50):
        expect = sorted(
            j for j in tree.query_ball_point(pos[r], cutoff) if 100 <= j < 200
        )
        assert sorted(nbr[r, : cnt[r]]) == expect


def test_neighbor_table_two_ranges():
    pos = _cloud(300, 8)
    cutoff = 0.2
    grid = rebuild_grid(pos, cutoff)
    nbr, cnt = neighbor_table(grid, pos, (50, 80), [(0, 20), (200, 300)], cutoff)
    tree = cKDTree(pos)
    for k, r in enumerate(range(50, 80)):
        expect = sorted(
            j
            for j in tree.query_ball_point(pos[r], cutoff)
            if (j < 20 or 200 <= j < 300) and j != r
        )
        assert sorted(nbr[k, : cnt[k]]) == expect


def test_neighbor_table_grows_capacity():
    pos = _cloud(500, 11, box=0.3)
    cutoff = 0.25  # nearly everyone sees everyone
    grid = rebuild_grid(pos, cutoff)
    nbr, cnt = neighbor_table(grid, pos, (0, 500), [(0, 500)], cutoff, cap=4)
    assert cnt.max() > 4
    tree = cKDTree(pos)
    expect = len(tree.query_ball_point(pos[0], cutoff)) - 1
    assert cnt[0] == expect


def test_dry_rows_skipped():
    # Wall-like rows far from any accepted column report zero neighbors.
    pos = np.vstack([_cloud(100, 2), _cloud(100, 4) + 10.0])
    grid = rebuild_grid(pos, 0.2)
    nbr, cnt = neighbor_table(grid, pos, (100, 200), [(0, 100)], 0.2)
    assert np.all(cnt == 0)


def test_active_neighbors_sorted():
    pos = _cloud(200, 13)
    cutoff = 0.22
    grid = rebuild_grid(pos, cutoff)
    got = active_neighbors(grid, pos, 17, cutoff)
    tree = cKDTree(pos)
    expect = sorted(j for j in tree.query_ball_point(pos[17], cutoff) if j != 17)
    assert list(got) == expect


def test_grid_rejects_nonfinite():
    pos = _cloud(10, 1)
    pos[3, 1] = np.nan
    with pytest.raises(FloatingPointError, match="particle 3"):
        rebuild_grid(pos, 0.1)


def test_grid_rejects_blown_up_domain():
    pos = _cloud(10, 1)
    pos[0] = 1e9
    with pytest.raises(RuntimeError, match="blown up"):
        rebuild_grid(pos, 0.01)


def _lattice(nx, ny, nz, dp):
    ax = [np.arange(k) * dp for k in (nx, ny, nz)]
    g = np.meshgrid(*ax, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def test_spring_shell_counts():
    dp = 0.01
    pos = _lattice(3, 3, 3, dp)
    net = build_spring_network(pos, dp)
    deg = net.deg
    center = 13  # (1,1,1) in ij-ordered 3x3x3
    assert deg[center] == 26
    assert deg[0] == 7  # corner
    assert net.n_edges == deg.sum() // 2


def test_spring_rest_lengths_are_lattice_distances():
    dp = 0.01
    net = build_spring_network(_lattice(3, 3, 3, dp), dp)
    uniq = np.unique(np.round(net.rest / dp, 6))
    assert np.allclose(uniq, [1.0, np.sqrt(2.0), np.sqrt(3.0)])


def test_spring_cutoff_excludes_second_shell():
    dp = 0.01
    net = build_spring_network(_lattice(5, 1, 1, dp), dp)
    # A 1D chain: nearest neighbors only, no 2 dp springs.
    assert net.rest.max() < 1.5 * dp
    assert net.deg.max() == 2


def test_spring_omit_predicate_carves_seam():
    dp = 0.01
    pos = _lattice(4, 4, 4, dp)
    plane = 1.5 * dp

    def omit(a, b):
        return (a[:, 2] - plane) * (b[:, 2] - plane) < 0.0

    net = build_spring_network(pos, dp, omit=omit)
    crossing = (pos[net.edge_i][:, 2] - plane) * (pos[net.edge_j][:, 2] - plane)
    assert np.all(crossing > 0.0)


def test_spring_failure_is_tensile_and_one_way():
    dp = 0.01
    pos = _lattice(2, 1, 1, dp).astype(float)
    net = build_spring_network(pos, dp)
    assert net.n_edges == 1

    squeezed = pos.copy()
    squeezed[1, 0] = 0.5 * dp
    assert update_springs(net, squeezed, 0.05, step=1, time=1e-6) == 0
    assert net.f[0] == 1

    stretched = pos.copy()
    stretched[1, 0] = 1.06 * dp
    assert update_springs(net, stretched, 0.05, step=2, time=2e-6) == 1
    assert net.f[0] == 0
    assert net.fail_step[0] == 2
    assert net.fail_time[0] == pytest.approx(2e-6)
    assert net.first_failure_time == pytest.approx(2e-6)

    # Relaxing back does not heal, and refailing does not double-count.
    assert update_springs(net, pos, 0.05, step=3, time=3e-6) == 0
    assert net.n_failed == 1
    assert net.failed_count[0] == 1


def test_damage_fraction():
    dp = 0.01
    pos = _lattice(3, 1, 1, dp).astype(float)
    net = build_spring_network(pos, dp)
    stretched = pos.copy()
    stretched[2, 0] += 0.2 * dp
    update_springs(net, stretched, 0.05, step=1, time=1.0)
    dmg = net.damage()
    assert dmg[0] == 0.0
    assert dmg[1] == pytest.approx(0.5)
    assert dmg[2] == pytest.approx(1.0)


def test_infinite_strain_threshold_never_fails():
    dp = 0.01
    pos = _lattice(2, 1, 1, dp).astype(float)
    net = build_spring_network(pos, dp)
    far = pos.copy()
    far[1, 0] = 10 * dp
    assert update_springs(net, far, np.inf, step=1, time=1.0) == 0
    assert net.n_failed == 0


def test_adjacency_is_consistent():
    dp = 0.01
    pos = _lattice(3, 3, 2, dp)
    net = build_spring_network(pos, dp)
    for i in range(len(pos)):
        lo, hi = net.adj_off[i], net.adj_off[i + 1]
        assert hi - lo == net.deg[i]
        for p, e in zip(net.adj_partner[lo:hi], net.adj_edge[lo:hi]):
            assert {net.edge_i[e], net.edge_j[e]} == {i, p}
