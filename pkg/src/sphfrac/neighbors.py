"""Uniform-grid neighbor search and the pseudo-spring network.

The grid is rebuilt every step from scratch (particles move); spring
connectivity is built once from the reference lattice and only ever
loses pairs through failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# A diverged (finite but runaway) particle inflates the grid; cap the
# cell count so that failure mode surfaces as an error, not an OOM kill.
MAX_CELLS = 20_000_000

# Neighbor-shell cutoff for springs: reaches the 26 lattice neighbors
# (diagonal distance sqrt(3) dp) with a small tolerance, nothing further.
SPRING_CUTOFF_FACTOR = np.sqrt(3.0) + 0.01


@dataclass
class NeighborGrid:
    origin: np.ndarray
    cell_size: float
    dims: np.ndarray
    cell_ids: np.ndarray
    order: np.ndarray
    cell_start: np.ndarray

    @property
    def n_cells(self):
        return int(self.dims[0] * self.dims[1] * self.dims[2])


def rebuild_grid(pos, cell_size):
    """Bin positions into cubic cells of edge cell_size (the kernel
    support radius, so 27 cells cover any interaction)."""
    pos = np.asarray(pos)
    if not np.isfinite(pos).all():
        bad = int(np.argwhere(~np.isfinite(pos).all(axis=1))[0, 0])
        raise FloatingPointError(f"non-finite position for particle {bad}")
    if cell_size <= 0.0:
        raise ValueError(f"cell size must be positive, got {cell_size}")
    origin = pos.min(axis=0) - 0.5 * cell_size
    dims = np.floor((pos.max(axis=0) - origin) / cell_size).astype(np.int64) + 1
    n_cells = float(dims.astype(np.float64).prod())
    if n_cells > MAX_CELLS:
        raise RuntimeError(
            f"neighbor grid would need {n_cells:.3g} cells; the domain has "
            "likely blown up (diverged particles)"
        )
    n_cells = int(n_cells)
    cells = np.floor((pos - origin) / cell_size).astype(np.int64)
    ids = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    order = np.argsort(ids, kind="stable").astype(np.int32)
    counts = np.bincount(ids, minlength=n_cells)
    cell_start = np.zeros(n_cells + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    return NeighborGrid(origin=origin, cell_size=float(cell_size), dims=dims,
                        cell_ids=ids, order=order, cell_start=cell_start)


def cell_occupancy(grid, member_mask):
    """Per-cell count of particles selected by member_mask."""
    sel = grid.cell_ids[member_mask]
    return np.bincount(sel, minlength=grid.n_cells).astype(np.int64)


@njit(cache=True)
def _fill_table(pos, order, cell_start, dims, origin, cell_size, occ,
                row_start, row_stop, lo0, hi0, lo1, hi1, cutoff2,
                nbr, cnt):
    """Fixed-stride neighbor rows for global particles [row_start, row_stop).

    A column j is accepted when lo0 <= j < hi0 or lo1 <= j < hi1. Rows
    whose 27-cell stencil holds no accepted particles (per occ) are
    skipped without a walk; dry wall particles cost almost nothing.
    Returns the largest row population so callers can regrow `cap`.
    """
    cap = nbr.shape[1]
    d1 = dims[1]
    d2 = dims[2]
    max_needed = 0
    for gi in range(row_start, row_stop):
        r = gi - row_start
        cx = int((pos[gi, 0] - origin[0]) / cell_size)
        cy = int((pos[gi, 1] - origin[1]) / cell_size)
        cz = int((pos[gi, 2] - origin[2]) / cell_size)
        present = 0
        for ox in range(-1, 2):
            x = cx + ox
            if x < 0 or x >= dims[0]:
                continue
            for oy in range(-1, 2):
                y = cy + oy
                if y < 0 or y >= d1:
                    continue
                for oz in range(-1, 2):
                    z = cz + oz
                    if z < 0 or z >= d2:
                        continue
                    present += occ[(x * d1 + y) * d2 + z]
        if present == 0:
            cnt[r] = 0
            continue
        k = 0
        for ox in range(-1, 2):
            x = cx + ox
            if x < 0 or x >= dims[0]:
                continue
            for oy in range(-1, 2):
                y = cy + oy
                if y < 0 or y >= d1:
                    continue
                for oz in range(-1, 2):
                    z = cz + oz
                    if z < 0 or z >= d2:
                        continue
                    c = (x * d1 + y) * d2 + z
                    for s in range(cell_start[c], cell_start[c + 1]):
                        j = order[s]
                        if j == gi:
                            continue
                        if not ((lo0 <= j < hi0) or (lo1 <= j < hi1)):
                            continue
                        dx = pos[gi, 0] - pos[j, 0]
                        dy = pos[gi, 1] - pos[j, 1]
                        dz = pos[gi, 2] - pos[j, 2]
                        if dx * dx + dy * dy + dz * dz < cutoff2:
                            if k < cap:
                                nbr[r, k] = j
                            k += 1
        cnt[r] = k if k <= cap else cap
        if k > max_needed:
            max_needed = k
    return max_needed


def neighbor_table(grid, pos, row_range, accept_ranges, cutoff, cap=96,
                   occ=None):
    """(nbr, cnt) arrays for the rows in row_range, columns restricted to
    the accepted global index ranges. Grows cap on overflow."""
    row_start, row_stop = row_range
    n_rows = row_stop - row_start
    ranges = list(accept_ranges) + [(0, 0)] * (2 - len(accept_ranges))
    (lo0, hi0), (lo1, hi1) = ranges[0], ranges[1]
    if occ is None:
        mask = np.zeros(pos.shape[0], dtype=bool)
        for lo, hi in accept_ranges:
            mask[lo:hi] = True
        occ = cell_occupancy(grid, mask)
    while True:
        nbr = np.empty((n_rows, cap), dtype=np.int32)
        cnt = np.empty(n_rows, dtype=np.int32)
        needed = _fill_table(pos, grid.order, grid.cell_start, grid.dims,
                             grid.origin, grid.cell_size, occ,
                             row_start, row_stop, lo0, hi0, lo1, hi1,
                             cutoff * cutoff, nbr, cnt)
        if needed <= cap:
            return nbr, cnt
        cap = int(needed * 1.25) + 8


def active_neighbors(grid, pos, i, cutoff):
    """Indices within cutoff of particle i (excluding i), in index order."""
    nbr, cnt = neighbor_table(grid, pos, (i, i + 1), [(0, pos.shape[0])],
                              cutoff)
    out = np.sort(nbr[0, : cnt[0]])
    return out


@njit(cache=True)
def _collect_pairs(pos, order, cell_start, dims, origin, cell_size,
                   cutoff2, ei, ej):
    """All unordered pairs (i < j) within cutoff. Returns the count; the
    output arrays are only written up to their capacity."""
    cap = ei.shape[0]
    d1 = dims[1]
    d2 = dims[2]
    k = 0
    n = pos.shape[0]
    for gi in range(n):
        cx = int((pos[gi, 0] - origin[0]) / cell_size)
        cy = int((pos[gi, 1] - origin[1]) / cell_size)
        cz = int((pos[gi, 2] - origin[2]) / cell_size)
        for ox in range(-1, 2):
            x = cx + ox
            if x < 0 or x >= dims[0]:
                continue
            for oy in range(-1, 2):
                y = cy + oy
                if y < 0 or y >= d1:
                    continue
                for oz in range(-1, 2):
                    z = cz + oz
                    if z < 0 or z >= d2:
                        continue
                    c = (x * d1 + y) * d2 + z
                    for s in range(cell_start[c], cell_start[c + 1]):
                        j = order[s]
                        if j <= gi:
                            continue
                        dx = pos[gi, 0] - pos[j, 0]
                        dy = pos[gi, 1] - pos[j, 1]
                        dz = pos[gi, 2] - pos[j, 2]
                        if dx * dx + dy * dy + dz * dz < cutoff2:
                            if k < cap:
                                ei[k] = gi
                                ej[k] = j
                            k += 1
    return k


@dataclass
class SpringNetwork:
    """Pair springs on the initial solid lattice.

    f is the interaction coefficient per spring (1 intact, 0 failed);
    transitions are one-way. fail_step records when each spring broke
    (-1 while intact) so fracture chronology can be reconstructed after
    a run without streaming snapshots.
    """

    edge_i: np.ndarray
    edge_j: np.ndarray
    rest: np.ndarray
    f: np.ndarray
    fail_step: np.ndarray
    fail_time: np.ndarray
    adj_off: np.ndarray
    adj_partner: np.ndarray
    adj_edge: np.ndarray
    deg: np.ndarray
    failed_count: np.ndarray
    n_particles: int
    first_failure_time: float = np.nan

    @property
    def n_edges(self):
        return self.edge_i.shape[0]

    @property
    def n_failed(self):
        return int(self.n_edges - int(self.f.sum()))

    def damage(self):
        """Fraction of failed springs per particle (0 where isolated)."""
        d = np.zeros(self.n_particles)
        np.divide(self.failed_count, self.deg, out=d, where=self.deg > 0)
        return d


def build_spring_network(pos, dp, cutoff=None, omit=None):
    """Connect each particle to its immediate lattice shell.

    cutoff defaults to just beyond the sqrt(3) dp body diagonal, giving
    up to 26 springs per interior particle. `omit`, if given, is a
    vectorized predicate on (pos_i, pos_j) arrays used to carve seams
    (e.g. a starter notch) into the connectivity.
    """
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    n = pos.shape[0]
    if cutoff is None:
        cutoff = SPRING_CUTOFF_FACTOR * dp
    grid = rebuild_grid(pos, cutoff)
    cap = max(32 * n, 1024)
    while True:
        ei = np.empty(cap, dtype=np.int32)
        ej = np.empty(cap, dtype=np.int32)
        k = _collect_pairs(pos, grid.order, grid.cell_start, grid.dims,
                           grid.origin, grid.cell_size, cutoff * cutoff,
                           ei, ej)
        if k <= cap:
            ei, ej = ei[:k], ej[:k]
            break
        cap = int(k * 1.2) + 64
    if omit is not None and len(ei):
        drop = np.asarray(omit(pos[ei], pos[ej]), dtype=bool)
        ei, ej = ei[~drop], ej[~drop]
    order = np.lexsort((ej, ei))
    ei, ej = ei[order], ej[order]
    rest = np.sqrt(((pos[ei] - pos[ej]) ** 2).sum(axis=1))
    ne = len(ei)

    ends = np.concatenate([ei, ej])
    partners = np.concatenate([ej, ei])
    edges = np.concatenate([np.arange(ne, dtype=np.int32)] * 2)
    deg = np.bincount(ends, minlength=n).astype(np.int32)
    adj_off = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=adj_off[1:])
    srt = np.argsort(ends, kind="stable")
    return SpringNetwork(
        edge_i=ei, edge_j=ej, rest=rest,
        f=np.ones(ne, dtype=np.uint8),
        fail_step=np.full(ne, -1, dtype=np.int64),
        fail_time=np.full(ne, np.nan),
        adj_off=adj_off, adj_partner=partners[srt].astype(np.int32),
        adj_edge=edges[srt].astype(np.int32),
        deg=deg, failed_count=np.zeros(n, dtype=np.int32),
        n_particles=n,
    )


@njit(cache=True)
def _fail_pass(pos, edge_i, edge_j, rest, f, fail_step, fail_time,
               failed_count, eps_fail, step, time):
    broke = 0
    for e in range(edge_i.shape[0]):
        if f[e] == 0:
            continue
        i = edge_i[e]
        j = edge_j[e]
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        dz = pos[i, 2] - pos[j, 2]
        length = np.sqrt(dx * dx + dy * dy + dz * dz)
        # Tensile criterion only: compressed springs never fail.
        if (length - rest[e]) / rest[e] >= eps_fail:
            f[e] = 0
            fail_step[e] = step
            fail_time[e] = time
            failed_count[i] += 1
            failed_count[j] += 1
            broke += 1
    return broke


def update_springs(springs, pos, eps_fail, step, time):
    """One failure sweep; returns the number of springs that just broke."""
    if not np.isfinite(eps_fail):
        return 0
    broke = _fail_pass(pos, springs.edge_i, springs.edge_j, springs.rest,
                       springs.f, springs.fail_step, springs.fail_time,
                       springs.failed_count, eps_fail, step, time)
    if broke and np.isnan(springs.first_failure_time):
        springs.first_failure_time = time
    return broke
