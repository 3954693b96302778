"""Critical-stretch bond failure and the nodal damage field."""

from __future__ import annotations

import numpy as np

from .discretize import DiscreteModel

FRACTURE_DISABLED = np.inf


def update_bond_status(s: np.ndarray, s_c: float, intact: np.ndarray,
                       breakable: np.ndarray | None = None) -> np.ndarray:
    """Ids of intact bonds whose stretch reached s_c.

    A bond survives only while s < s_c, so s == s_c breaks. ``intact`` is not
    modified here; pass the returned ids to :func:`osbpd.assembly.break_bonds`.
    """
    hit = intact & (np.asarray(s) >= s_c)
    if breakable is not None:
        hit &= breakable
    return np.flatnonzero(hit)


def family_volume(model: DiscreteModel) -> np.ndarray:
    """sum_j V_j over each node's full initial family."""
    i, j = model.bonds.pairs[:, 0], model.bonds.pairs[:, 1]
    V = model.nodes.volume
    n = model.n_nodes
    return np.bincount(i, weights=V[j], minlength=n) + np.bincount(j, weights=V[i], minlength=n)


def damage(model: DiscreteModel, intact: np.ndarray, denominator: np.ndarray | None = None) -> np.ndarray:
    """phi_i = 1 - (intact family volume) / (initial family volume), in [0, 1]."""
    i, j = model.bonds.pairs[:, 0], model.bonds.pairs[:, 1]
    V = model.nodes.volume
    n = model.n_nodes
    alive = np.asarray(intact, dtype=float)
    num = (np.bincount(i, weights=alive * V[j], minlength=n)
           + np.bincount(j, weights=alive * V[i], minlength=n))
    den = family_volume(model) if denominator is None else denominator
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(den > 0, 1.0 - num / den, 0.0)
    return np.clip(phi, 0.0, 1.0)


def no_fail_bonds(model: DiscreteModel, protected_nodes: np.ndarray) -> np.ndarray:
    """Breakable mask: False for bonds with an endpoint in ``protected_nodes``."""
    flag = np.zeros(model.n_nodes, dtype=bool)
    flag[np.asarray(protected_nodes, dtype=np.int64)] = True
    pairs = model.bonds.pairs
    return ~(flag[pairs[:, 0]] | flag[pairs[:, 1]])
