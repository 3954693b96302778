"""Uniform-grid discretization: nodes, bonds, weighted volumes, pre-cracks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .material import DimensionMode

HORIZON_RTOL = 1e-9


@dataclass(frozen=True)
class NodeSet:
    x: np.ndarray        # (N, d) coordinates [m]
    volume: np.ndarray   # (N,) [m^3]; dx^2 * thickness in 2D
    dx: float
    mode: DimensionMode
    thickness: float = 1.0

    @property
    def count(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class BondList:
    pairs: np.ndarray      # (Nb, 2) int64, i < j, lexicographic
    xi: np.ndarray         # (Nb, d) x_j - x_i
    length: np.ndarray     # (Nb,)
    direction: np.ndarray  # (Nb, d) unit vector from i to j

    @property
    def count(self) -> int:
        return self.pairs.shape[0]


@dataclass(frozen=True)
class PreCrack:
    """A segment in 2D or a planar polygon in 3D.

    With ``width == 0`` the crack is a zero-width cut. A positive width turns
    it into a slot of that thickness: every bond crossing the slot's rim is
    cut, so nodes inside the slot lose their links to the body.
    """

    points: np.ndarray
    width: float = 0.0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if self.width < 0:
            raise ValueError(f"pre-crack width must be non-negative, got {self.width}")


@dataclass
class DiscreteModel:
    nodes: NodeSet
    bonds: BondList
    m: np.ndarray          # weighted volume per node
    delta: float

    @property
    def dim(self) -> int:
        return self.nodes.dim

    @property
    def n_nodes(self) -> int:
        return self.nodes.count

    @property
    def n_bonds(self) -> int:
        return self.bonds.count

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.dim

    @property
    def mode(self) -> DimensionMode:
        return self.nodes.mode


def _cells(lo: float, hi: float, dx: float, axis: int) -> int:
    span = hi - lo
    if not span > 0:
        raise ValueError(f"box edge {axis} has non-positive length {span}")
    n = span / dx
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * n:
        raise ValueError(
            f"dx={dx} does not divide box edge {axis} (length {span}, ratio {n})"
        )
    return k


def build_grid(lower: Sequence[float], upper: Sequence[float], dx: float,
               mode: DimensionMode, thickness: float = 1.0) -> NodeSet:
    """Cell-centered lattice filling the box [lower, upper].

    Node order is x fastest, then y, then z.
    """
    mode = DimensionMode.parse(mode)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = mode.dim
    if lower.shape != (d,) or upper.shape != (d,):
        raise ValueError(f"box corners must have {d} components for {mode.value}")
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")
    counts = [_cells(lower[a], upper[a], dx, a) for a in range(d)]
    # Offsets are taken from the box centre so that a box symmetric about a
    # plane yields exactly mirrored coordinates (no rounding drift from lower).
    axes = [0.5 * (lower[a] + upper[a]) + (np.arange(counts[a]) - 0.5 * (counts[a] - 1)) * dx
            for a in range(d)]
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    x = np.stack([g.ravel() for g in grids[::-1]], axis=1)
    cell = dx ** d * (thickness if d == 2 else 1.0)
    return NodeSet(x=x, volume=np.full(x.shape[0], cell), dx=dx, mode=mode,
                   thickness=thickness if d == 2 else 1.0)


def select_nodes(nodes: NodeSet, keep: np.ndarray) -> NodeSet:
    """Restrict a lattice to a boolean mask (composite geometries)."""
    return NodeSet(x=nodes.x[keep], volume=nodes.volume[keep], dx=nodes.dx,
                   mode=nodes.mode, thickness=nodes.thickness)


def neighbor_search(nodes: NodeSet, delta: float) -> BondList:
    """All unordered pairs with |xi| <= delta (inclusive up to a 1e-9 relative slack)."""
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    x = nodes.x
    if nodes.count < 2:
        pairs = np.empty((0, 2), dtype=np.int64)
    else:
        tree = cKDTree(x)
        pairs = tree.query_pairs(delta * (1.0 + HORIZON_RTOL), output_type="ndarray")
        pairs = np.sort(pairs.astype(np.int64), axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        pairs = np.ascontiguousarray(pairs[order])
    xi = x[pairs[:, 1]] - x[pairs[:, 0]]
    length = np.linalg.norm(xi, axis=1)
    direction = xi / length[:, None] if len(length) else xi.copy()
    return BondList(pairs=pairs, xi=xi, length=length, direction=direction)


def weighted_volume(nodes: NodeSet, bonds: BondList) -> np.ndarray:
    """m_i = sum over the family of |xi|^2 V_j (w = 1), both bond directions."""
    i, j = bonds.pairs[:, 0], bonds.pairs[:, 1]
    V = nodes.volume
    x2 = bonds.length ** 2
    m = (np.bincount(i, weights=x2 * V[j], minlength=nodes.count)
         + np.bincount(j, weights=x2 * V[i], minlength=nodes.count))
    isolated = np.flatnonzero(m <= 0.0)
    if isolated.size:
        k = int(isolated[0])
        raise ValueError(
            f"node {k} at {nodes.x[k].tolist()} has no bonds (weighted volume 0); "
            f"{isolated.size} isolated node(s) in total"
        )
    return m


def build_model(nodes: NodeSet, delta: float) -> DiscreteModel:
    bonds = neighbor_search(nodes, delta)
    return DiscreteModel(nodes=nodes, bonds=bonds, m=weighted_volume(nodes, bonds),
                         delta=float(delta))


def _cross2(ax, ay, bx, by):
    return ax * by - ay * bx


def _seed_segment(p: np.ndarray, q: np.ndarray, crack: np.ndarray) -> np.ndarray:
    a, b = crack
    ab = b - a
    d1 = _cross2(ab[0], ab[1], p[:, 0] - a[0], p[:, 1] - a[1])
    d2 = _cross2(ab[0], ab[1], q[:, 0] - a[0], q[:, 1] - a[1])
    pq = q - p
    d3 = _cross2(pq[:, 0], pq[:, 1], a[0] - p[:, 0], a[1] - p[:, 1])
    d4 = _cross2(pq[:, 0], pq[:, 1], b[0] - p[:, 0], b[1] - p[:, 1])
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _seed_polygon(p: np.ndarray, q: np.ndarray, poly: np.ndarray) -> np.ndarray:
    origin = poly[0]
    normal = np.zeros(3)
    for k in range(1, len(poly) - 1):
        normal += np.cross(poly[k] - origin, poly[k + 1] - origin)
    area2 = np.linalg.norm(normal)
    scale = np.max(np.linalg.norm(poly - origin, axis=1))
    if area2 <= 1e-12 * scale ** 2:
        raise ValueError("degenerate pre-crack polygon (zero area)")
    normal /= area2
    off_plane = np.abs((poly - origin) @ normal)
    if np.max(off_plane) > 1e-9 * scale:
        raise ValueError("pre-crack polygon vertices are not coplanar")
    sp = (p - origin) @ normal
    sq = (q - origin) @ normal
    crossing = sp * sq < 0
    hit = np.zeros(len(p), dtype=bool)
    idx = np.flatnonzero(crossing)
    if idx.size == 0:
        return hit
    t = sp[idx] / (sp[idx] - sq[idx])
    point = p[idx] + t[:, None] * (q[idx] - p[idx])
    # in-plane frame
    e1 = poly[1] - origin
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    u = (point - origin) @ e1
    v = (point - origin) @ e2
    pu = (poly - origin) @ e1
    pv = (poly - origin) @ e2
    inside = np.zeros(idx.size, dtype=bool)
    on_edge = np.zeros(idx.size, dtype=bool)
    n = len(poly)
    for k in range(n):
        u0, v0, u1, v1 = pu[k], pv[k], pu[(k + 1) % n], pv[(k + 1) % n]
        straddle = (v0 > v) != (v1 > v)
        with np.errstate(divide="ignore", invalid="ignore"):
            ucross = u0 + (v - v0) * (u1 - u0) / (v1 - v0)
        inside ^= straddle & (u < ucross)
        cr = _cross2(u1 - u0, v1 - v0, u - u0, v - v0)
        within = ((u - u0) * (u - u1) <= 0) & ((v - v0) * (v - v1) <= 0)
        on_edge |= (np.abs(cr) <= 1e-12 * scale ** 2) & within
    hit[idx] = inside & ~on_edge
    return hit


def _polygon_normal(poly: np.ndarray) -> np.ndarray:
    normal = np.zeros(3)
    for k in range(1, len(poly) - 1):
        normal += np.cross(poly[k] - poly[0], poly[k + 1] - poly[0])
    norm = np.linalg.norm(normal)
    if norm == 0:
        raise ValueError("degenerate pre-crack polygon (zero area)")
    return normal / norm


def _slot_faces(pts: np.ndarray, width: float) -> list:
    """Rim of a slot of the given width around a segment (2D) or polygon (3D)."""
    h = 0.5 * width
    if pts.shape[1] == 2:
        t = pts[1] - pts[0]
        n = np.array([-t[1], t[0]]) / np.linalg.norm(t)
        c = [pts[0] - h * n, pts[1] - h * n, pts[1] + h * n, pts[0] + h * n]
        return [np.array([c[k], c[(k + 1) % 4]]) for k in range(4)]
    n = _polygon_normal(pts) * h
    faces = [pts - n, pts + n]
    for k in range(len(pts)):
        a, b = pts[k], pts[(k + 1) % len(pts)]
        faces.append(np.array([a - n, b - n, b + n, a + n]))
    return faces


def seed_precrack(nodes: NodeSet, bonds: BondList, crack: PreCrack) -> np.ndarray:
    """Indices of bonds whose segment strictly crosses the crack.

    Bonds that only touch the crack (an endpoint on it, or collinear with a
    2D crack) are kept.
    """
    pts = crack.points
    d = nodes.dim
    if pts.shape[1] != d:
        raise ValueError(f"pre-crack points must have {d} components")
    if d == 2:
        if pts.shape[0] != 2:
            raise ValueError("a 2D pre-crack is a segment with exactly two points")
        if np.linalg.norm(pts[1] - pts[0]) == 0:
            raise ValueError("degenerate (zero-length) pre-crack")
    elif pts.shape[0] < 3:
        raise ValueError("a 3D pre-crack is a polygon with at least three points")
    faces = [pts] if crack.width == 0 else _slot_faces(pts, crack.width)
    p = nodes.x[bonds.pairs[:, 0]]
    q = nodes.x[bonds.pairs[:, 1]]
    hit_all = np.zeros(bonds.count, dtype=bool)
    for face in faces:
        lo, hi = face.min(axis=0), face.max(axis=0)
        near = np.all((np.maximum(p, q) >= lo) & (np.minimum(p, q) <= hi), axis=1)
        cand = np.flatnonzero(near & ~hit_all)
        if cand.size == 0:
            continue
        if d == 2:
            hit = _seed_segment(p[cand], q[cand], face)
        else:
            hit = _seed_polygon(p[cand], q[cand], face)
        hit_all[cand[hit]] = True
    return np.flatnonzero(hit_all)


def dump_model_csv(model: DiscreteModel, directory) -> None:
    """Write nodes.csv (coordinates, volume, m) and bonds.csv (i, j, length)."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    d = model.dim
    names = ["x", "y", "z"][:d]
    node_table = np.column_stack([np.arange(model.n_nodes), model.nodes.x,
                                  model.nodes.volume, model.m])
    np.savetxt(out / "nodes.csv", node_table, delimiter=",",
               header=",".join(["id", *names, "volume", "m"]), comments="",
               fmt=["%d"] + ["%.17g"] * (d + 2))
    bond_table = np.column_stack([np.arange(model.n_bonds), model.bonds.pairs,
                                  model.bonds.length])
    np.savetxt(out / "bonds.csv", bond_table, delimiter=",",
               header="id,i,j,length", comments="", fmt=["%d", "%d", "%d", "%.17g"])
