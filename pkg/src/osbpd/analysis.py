"""Structural checks on damage fields: crack bands, branches, mirror symmetry."""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


def damaged_components(x: np.ndarray, phi: np.ndarray, dx: float,
                       threshold: float = 0.5, reach: float = 1.5) -> tuple[int, np.ndarray]:
    """Connected components of the nodes with phi >= threshold.

    Two damaged nodes are linked when they are at most ``reach * dx`` apart
    (1.5 links lattice diagonals). Returns (count, labels) with label -1 on
    undamaged nodes.
    """
    idx = np.flatnonzero(phi >= threshold)
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    if idx.size == 0:
        return 0, labels
    pairs = cKDTree(x[idx]).query_pairs(reach * dx * (1 + 1e-9), output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs)
                       else (np.zeros(0), (np.zeros(0, int), np.zeros(0, int))),
                       shape=(idx.size, idx.size))
    n, lab = connected_components(graph, directed=False)
    labels[idx] = lab
    return n, labels


def band_profile(x: np.ndarray, phi: np.ndarray, dx: float, along: int = 0,
                 across: int = 1, threshold: float = 0.5, gap: float = 2.0) -> dict:
    """Number of separate damaged bands met by each lattice line across the crack.

    For every distinct coordinate value along ``along``, the damaged nodes on
    that line are grouped into runs along ``across`` (runs split wherever the
    spacing exceeds ``gap * dx``). A branched crack shows up as lines that
    cross two or more runs.

    Returns:
        Mapping from line coordinate to the run count.
    """
    hit = phi >= threshold
    origin = x[:, along].min()
    keys = np.round((x[:, along] - origin) / dx).astype(np.int64)
    out = {}
    for k in np.unique(keys[hit]):
        on = hit & (keys == k)
        ys = np.sort(x[on, across])
        out[float(x[on, along].mean())] = int(1 + np.sum(np.diff(ys) > gap * dx))
    return out


def branch_count(x: np.ndarray, phi: np.ndarray, dx: float, start: float,
                 along: int = 0, across: int = 1, threshold: float = 0.5,
                 gap: float = 2.0, persist: int = 3) -> int:
    """Largest number of parallel damaged bands downstream of ``start``.

    A count must hold on ``persist`` consecutive lattice lines to be
    accepted, so isolated damaged specks do not read as branches.
    """
    prof = band_profile(x, phi, dx, along, across, threshold, gap)
    lines = sorted(k for k in prof if k > start)
    counts = [prof[k] for k in lines]
    best = 1 if lines else 0
    for level in range(2, 1 + max(counts, default=0)):
        run, prev = 0, None
        for k, c in zip(lines, counts):
            adjacent = prev is not None and abs(k - prev - dx) < 1e-6 * dx
            run = (run + 1 if adjacent else 1) if c >= level else 0
            prev = k
            if run >= persist:
                best = level
                break
    return best


def mirror_asymmetry(x: np.ndarray, phi: np.ndarray, volume: np.ndarray, axis: int,
                     centre: float, threshold: float = 0.5) -> float:
    """Mismatched damaged volume under reflection, as a fraction of the damaged volume.

    0 means the thresholded damage set maps onto itself under
    x_axis -> 2*centre - x_axis; 1 means no damaged node has a damaged mirror.
    Nodes without a lattice mirror count as mismatched.
    """
    damaged = phi >= threshold
    total = float(np.sum(volume[damaged]))
    if total == 0:
        return 0.0
    mirrored = x.copy()
    mirrored[:, axis] = 2.0 * centre - mirrored[:, axis]
    dist, j = cKDTree(x).query(mirrored)
    spacing = np.min(cKDTree(x).query(x[:2], k=2)[0][:, 1])
    has_mirror = dist <= 1e-6 * spacing
    partner = np.where(has_mirror, damaged[j], False)
    mismatch = np.sum(volume * np.abs(damaged.astype(float) - partner.astype(float)))
    return float(0.5 * mismatch / total)


def first_breaks_near(points: np.ndarray, broken_step: np.ndarray, midpoints: np.ndarray,
                      radius: float) -> list:
    """Step of the first dynamic bond failure within ``radius`` of each point.

    ``broken_step`` holds the step a bond failed at (0 for seeded cracks,
    -1 while intact). Returns one entry per point (None if no failure).
    """
    dyn = broken_step > 0
    out = []
    for p in np.atleast_2d(points):
        near = dyn & (np.linalg.norm(midpoints - p, axis=1) <= radius)
        out.append(int(broken_step[near].min()) if near.any() else None)
    return out


def first_break_location(broken_step: np.ndarray, midpoints: np.ndarray) -> np.ndarray | None:
    """Mean midpoint of the earliest batch of dynamically failed bonds."""
    dyn = broken_step > 0
    if not dyn.any():
        return None
    s = broken_step[dyn].min()
    return midpoints[broken_step == s].mean(axis=0)
