"""Sparse operators of the linearized OSB-PD model.

For bond b = (i, j) with initial unit direction M (from i to j):

    e_b            = C_e[b, :] @ U            # [-M | +M] on the dofs of i, j
    theta          = C_theta @ e              # A w x (V_j/m_i, V_i/m_j)
    F_int          = K_theta @ theta + K_e @ e

K_theta's column for node n collects (K - G/3) w x V_i V_j (+-M / m_n) from
every bond touching n, so its entries are sums over bonds. Each bond keeps the
positions (and addends) of its entries so breakage is a local update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretize import DiscreteModel
from .material import PdConstants


@dataclass
class _Accumulated:
    """Contribution-to-entry bookkeeping for one assembled CSR matrix."""

    matrix: sp.csr_matrix
    position: np.ndarray        # data index of every contribution
    values: np.ndarray          # addend of every contribution
    by_position: np.ndarray     # contribution ids sorted by (position, id)
    position_ptr: np.ndarray    # CSR-style pointer into by_position


def _accumulate(rows, cols, vals, shape) -> _Accumulated:
    """Assemble COO triplets into CSR, summing duplicates in input order."""
    nrows, ncols = shape
    key = rows.astype(np.int64) * ncols + cols.astype(np.int64)
    uniq, inverse = np.unique(key, return_inverse=True)
    inverse = inverse.ravel()
    # bincount adds weights sequentially, so duplicates sum in contribution order
    data = np.bincount(inverse, weights=vals, minlength=uniq.size)
    indices = (uniq % ncols).astype(np.int32 if ncols < 2**31 else np.int64)
    counts = np.bincount(uniq // ncols, minlength=nrows)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    mat = sp.csr_matrix((data, indices, indptr), shape=shape)
    mat.has_sorted_indices = True
    by_position = np.argsort(inverse, kind="stable")
    position_ptr = np.concatenate([[0], np.cumsum(np.bincount(inverse, minlength=uniq.size))])
    return _Accumulated(mat, inverse, np.asarray(vals, dtype=float), by_position, position_ptr)


@dataclass
class PdOperators:
    """The four global operators plus per-bond entry maps.

    ``ce_slots[b]`` are the data indices of bond b's row in C_e; the other
    ``*_slots`` arrays hold, per bond, the data indices of its entries in
    C_theta, K_e and K_theta (K_theta positions may be shared between bonds).
    """

    Ce: sp.csr_matrix
    Ctheta: sp.csr_matrix
    Ktheta: sp.csr_matrix
    Ke: sp.csr_matrix
    ce_slots: np.ndarray
    ctheta_slots: np.ndarray
    ke_slots: np.ndarray
    ktheta_slots: np.ndarray
    intact: np.ndarray
    _ktheta_acc: _Accumulated

    @property
    def n_bonds(self) -> int:
        return self.Ce.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.Ce.shape[1]

    def copy(self) -> "PdOperators":
        acc = self._ktheta_acc
        return PdOperators(
            Ce=self.Ce.copy(), Ctheta=self.Ctheta.copy(), Ktheta=self.Ktheta.copy(),
            Ke=self.Ke.copy(), ce_slots=self.ce_slots, ctheta_slots=self.ctheta_slots,
            ke_slots=self.ke_slots, ktheta_slots=self.ktheta_slots,
            intact=self.intact.copy(), _ktheta_acc=acc,
        )


def assemble_operators(model: DiscreteModel, constants: PdConstants,
                       intact: np.ndarray | None = None) -> PdOperators:
    """Build C_e, C_theta, K_theta, K_e for every bond of ``model``.

    ``intact`` (bool per bond) lets a debug caller assemble a damaged model
    from scratch; broken bonds keep their sparsity slots but contribute zero.
    """
    m = model.m
    if np.any(m <= 0):
        raise ValueError(f"node {int(np.argmin(m))} has zero weighted volume")
    nb, nn, d = model.n_bonds, model.n_nodes, model.dim
    ndof = nn * d
    i = model.bonds.pairs[:, 0]
    j = model.bonds.pairs[:, 1]
    M = model.bonds.direction
    x = model.bonds.length
    V = model.nodes.volume
    alive = np.ones(nb) if intact is None else np.asarray(intact, dtype=float)
    w = 1.0
    A, K, G = constants.A, constants.K, constants.G

    dof_i = d * i[:, None] + np.arange(d)
    dof_j = d * j[:, None] + np.arange(d)

    # C_e: each row is [-M | +M]; i < j keeps the columns sorted
    ce_data = np.concatenate([-M, M], axis=1) * alive[:, None]
    ce_indices = np.concatenate([dof_i, dof_j], axis=1)
    Ce = sp.csr_matrix((ce_data.ravel(), ce_indices.ravel().astype(np.int32),
                        np.arange(0, 2 * d * nb + 1, 2 * d)), shape=(nb, ndof))
    Ce.has_sorted_indices = True
    ce_slots = np.arange(2 * d * nb).reshape(nb, 2 * d)

    bidx = np.arange(nb)
    ct_rows = np.stack([i, j], axis=1)
    ct_vals = (A * w * x)[:, None] * np.stack([V[j] / m[i], V[i] / m[j]], axis=1) * alive[:, None]
    ct = _accumulate(ct_rows.ravel(), np.repeat(bidx, 2), ct_vals.ravel(), (nn, nb))

    g = G * w * V[i] * V[j] * (1.0 / m[i] + 1.0 / m[j]) * alive
    ke_rows = np.concatenate([dof_i, dof_j], axis=1)
    ke_vals = np.concatenate([M, -M], axis=1) * g[:, None]
    ke = _accumulate(ke_rows.ravel(), np.repeat(bidx, 2 * d), ke_vals.ravel(), (ndof, nb))

    # K_theta: per bond a (2d x 2) block, columns theta_i and theta_j
    a = (K - G / 3.0) * w * x * V[i] * V[j] * alive
    inv_mi = (a / m[i])[:, None] * M
    inv_mj = (a / m[j])[:, None] * M
    kt_rows = np.concatenate([dof_i, dof_j, dof_i, dof_j], axis=1)
    kt_cols = np.concatenate([np.repeat(i[:, None], 2 * d, axis=1),
                              np.repeat(j[:, None], 2 * d, axis=1)], axis=1)
    kt_vals = np.concatenate([inv_mi, -inv_mi, inv_mj, -inv_mj], axis=1)
    kt = _accumulate(kt_rows.ravel(), kt_cols.ravel(), kt_vals.ravel(), (ndof, nn))

    return PdOperators(
        Ce=Ce, Ctheta=ct.matrix, Ktheta=kt.matrix, Ke=ke.matrix,
        ce_slots=ce_slots,
        ctheta_slots=ct.position.reshape(nb, 2),
        ke_slots=ke.position.reshape(nb, 2 * d),
        ktheta_slots=kt.position.reshape(nb, 4 * d),
        intact=(alive > 0),
        _ktheta_acc=kt,
    )


def break_bonds(ops: PdOperators, bond_ids) -> np.ndarray:
    """Remove bonds from the operators in place; returns the ids actually broken.

    Zeroing a bond's C_e row makes its extension vanish, which silences its
    C_theta and K_e columns. K_theta routes force through theta instead, so the
    shared K_theta entries touched by the bond are re-summed from the remaining
    intact addends in their original order (bitwise equal to a fresh assembly).
    """
    ids = np.unique(np.asarray(bond_ids, dtype=np.int64).ravel())
    if ids.size == 0:
        return ids
    ids = ids[ops.intact[ids]]
    if ids.size == 0:
        return ids
    ops.intact[ids] = False
    ops.Ce.data[ops.ce_slots[ids].ravel()] = 0.0

    acc = ops._ktheta_acc
    per_bond = ops.ktheta_slots.shape[1]
    positions = np.unique(ops.ktheta_slots[ids].ravel())
    starts = acc.position_ptr[positions]
    lengths = acc.position_ptr[positions + 1] - starts
    local = np.repeat(np.arange(positions.size), lengths)
    offsets = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    contrib = acc.by_position[np.repeat(starts, lengths) + offsets]
    weights = acc.values[contrib] * ops.intact[contrib // per_bond]
    ops.Ktheta.data[positions] = np.bincount(local, weights=weights, minlength=positions.size)
    return ids


def compose_stiffness(ops: PdOperators) -> sp.csr_matrix:
    """Global stiffness K_theta C_theta C_e + K_e C_e, so that F_int = K U.

    Verification/ADR-oracle use only; the force kernels never form it.
    """
    if ops.Ktheta.shape[1] != ops.Ctheta.shape[0] or ops.Ctheta.shape[1] != ops.Ce.shape[0]:
        raise RuntimeError("operator dimensions are inconsistent")
    Kv = ops.Ktheta @ (ops.Ctheta @ ops.Ce)
    Kd = ops.Ke @ ops.Ce
    K = (Kv + Kd).tocsr()
    K.sort_indices()
    return K


def stiffness_abs_rowsum(ops: PdOperators, exact: bool = False) -> np.ndarray:
    """sum_j |K_ij| per dof, for ADR fictitious densities.

    The default never forms K_glob: it applies the entrywise-absolute
    operators to a ones vector, which bounds the exact row sum from above
    (triangle inequality) and costs four matvecs.
    """
    if exact:
        return np.asarray(abs(compose_stiffness(ops)).sum(axis=1)).ravel()
    ones = np.ones(ops.n_dofs)
    ce = abs(ops.Ce) @ ones
    return abs(ops.Ktheta) @ (abs(ops.Ctheta) @ ce) + abs(ops.Ke) @ ce


def bond_based_stiffness(model: DiscreteModel, micromodulus: float = 1.0) -> sp.csr_matrix:
    """Linearized bond-based PD stiffness on the same bonds (sparsity reference)."""
    nb, d = model.n_bonds, model.dim
    i, j = model.bonds.pairs[:, 0], model.bonds.pairs[:, 1]
    V = model.nodes.volume
    c = micromodulus * V[i] * V[j] / model.bonds.length
    g_data = np.concatenate([model.bonds.direction, -model.bonds.direction], axis=1)
    g_cols = np.concatenate([d * i[:, None] + np.arange(d), d * j[:, None] + np.arange(d)], axis=1)
    Gm = sp.csr_matrix((g_data.ravel(), g_cols.ravel(), np.arange(0, 2 * d * nb + 1, 2 * d)),
                       shape=(nb, model.n_dofs))
    return (-(Gm.T @ sp.diags(c) @ Gm)).tocsr()


def write_matrix_market(ops: PdOperators, directory) -> list:
    """Dump the four operators in MatrixMarket coordinate format."""
    from pathlib import Path

    import scipy.io

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("Ce", "Ctheta", "Ktheta", "Ke"):
        path = out / f"{name}.mtx"
        scipy.io.mmwrite(str(path), getattr(ops, name), field="real", precision=17)
        written.append(path)
    return written
