"""Internal-force kernels.

``MATRIX`` evaluates F = K_theta (C_theta (C_e U)) + K_e (C_e U) with three
levels of sparse matvecs. The two loop kernels walk the bond list twice
(dilatation, then forces) in fixed bond order; they are compiled with numba
and single-threaded, which makes them a bitwise-reproducible oracle.

Sign convention: F_int is the assembled peridynamic force, so the lumped
equation of motion reads  M u'' = F_int + F_ext.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .assembly import PdOperators
from .discretize import DiscreteModel
from .material import PdConstants


class KernelMode(enum.Enum):
    MATRIX = "matrix"
    LOOP_LINEARIZED = "loop"
    LOOP_GEOMETRIC = "loop-geometric"

    @classmethod
    def parse(cls, value) -> "KernelMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"loop-linearized": cls.LOOP_LINEARIZED, "matrixpath": cls.MATRIX,
                   "geometric": cls.LOOP_GEOMETRIC}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown kernel {value!r}; expected matrix, loop "
                             "or loop-geometric") from None


@dataclass
class ForceState:
    U: np.ndarray
    F: np.ndarray
    e: np.ndarray
    theta: np.ndarray


@numba.njit(cache=True)
def _loop_extensions(U, pairs, xi, length, intact, geometric):
    nb, d = xi.shape
    e = np.zeros(nb)
    for b in range(nb):
        if not intact[b]:
            continue
        i = pairs[b, 0]
        j = pairs[b, 1]
        if geometric:
            s = 0.0
            for k in range(d):
                y = xi[b, k] + U[d * j + k] - U[d * i + k]
                s += y * y
            e[b] = np.sqrt(s) - length[b]
        else:
            s = 0.0
            for k in range(d):
                s += xi[b, k] * (U[d * j + k] - U[d * i + k])
            e[b] = s / length[b]
    return e


@numba.njit(cache=True)
def _loop_dilatation(e, pairs, length, vol, m, intact, A):
    nb = pairs.shape[0]
    theta = np.zeros(m.shape[0])
    for b in range(nb):
        if not intact[b]:
            continue
        i = pairs[b, 0]
        j = pairs[b, 1]
        c = A * length[b] * e[b]
        theta[i] += c * vol[j]
        theta[j] += c * vol[i]
    for n in range(m.shape[0]):
        theta[n] /= m[n]
    return theta


@numba.njit(cache=True)
def _loop_forces(e, theta, pairs, xi, length, vol, m, intact, K, G):
    nb, d = xi.shape
    F = np.zeros(m.shape[0] * d)
    kv = K - G / 3.0
    for b in range(nb):
        if not intact[b]:
            continue
        i = pairs[b, 0]
        j = pairs[b, 1]
        vv = vol[i] * vol[j]
        ft = kv * (theta[i] / m[i] + theta[j] / m[j]) * length[b] * vv
        fe = G * (e[b] / m[i] + e[b] / m[j]) * vv
        f = ft + fe
        for k in range(d):
            fk = f * (xi[b, k] / length[b])
            F[d * i + k] += fk
            F[d * j + k] -= fk
    return F


def _check_finite(U: np.ndarray) -> None:
    if not np.all(np.isfinite(U)):
        k = int(np.flatnonzero(~np.isfinite(U))[0])
        raise FloatingPointError(f"non-finite displacement at dof {k}: {U[k]}")


class ForceKernel:
    """Internal-force evaluator bound to one model and its operators.

    The loop kernels read bond status from ``ops.intact``; the matrix kernel
    reads the (already zeroed) operator entries, so both see the same damage
    pattern once :func:`osbpd.assembly.break_bonds` has been applied.
    """

    def __init__(self, model: DiscreteModel, ops: PdOperators, constants: PdConstants,
                 mode=KernelMode.MATRIX):
        self.model = model
        self.ops = ops
        self.constants = constants
        self.mode = KernelMode.parse(mode)
        self._pairs = np.ascontiguousarray(model.bonds.pairs)
        self._xi = np.ascontiguousarray(model.bonds.xi)
        self._length = np.ascontiguousarray(model.bonds.length)
        self._vol = np.ascontiguousarray(model.nodes.volume)
        self._m = np.ascontiguousarray(model.m)

    def extensions(self, U: np.ndarray, geometric: bool | None = None) -> np.ndarray:
        if geometric is None:
            geometric = self.mode is KernelMode.LOOP_GEOMETRIC
        if self.mode is KernelMode.MATRIX and not geometric:
            return self.ops.Ce @ U
        return _loop_extensions(U, self._pairs, self._xi, self._length,
                                self.ops.intact, bool(geometric))

    def dilatation(self, e: np.ndarray) -> np.ndarray:
        if self.mode is KernelMode.MATRIX:
            return self.ops.Ctheta @ e
        return _loop_dilatation(e, self._pairs, self._length, self._vol, self._m,
                                self.ops.intact, self.constants.A)

    def forces(self, e: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if self.mode is KernelMode.MATRIX:
            return self.ops.Ktheta @ theta + self.ops.Ke @ e
        return _loop_forces(e, theta, self._pairs, self._xi, self._length, self._vol,
                            self._m, self.ops.intact, self.constants.K, self.constants.G)

    def evaluate(self, U: np.ndarray, check: bool = True) -> ForceState:
        U = np.ascontiguousarray(U, dtype=float)
        if check:
            _check_finite(U)
        if self.mode is KernelMode.MATRIX:
            ops = self.ops
            e = ops.Ce @ U
            theta = ops.Ctheta @ e
            F = ops.Ktheta @ theta + ops.Ke @ e
        else:
            e = self.extensions(U)
            theta = self.dilatation(e)
            F = _loop_forces(e, theta, self._pairs, self._xi, self._length, self._vol,
                             self._m, self.ops.intact, self.constants.K, self.constants.G)
        return ForceState(U=U, F=F, e=e, theta=theta)

    def __call__(self, U: np.ndarray) -> np.ndarray:
        return self.evaluate(U).F


def bond_extensions(model, ops, U, mode=KernelMode.MATRIX, constants=None) -> np.ndarray:
    """Bond extensions e_b; zero on broken bonds."""
    mode = KernelMode.parse(mode)
    if mode is KernelMode.MATRIX:
        return ops.Ce @ np.asarray(U, dtype=float)
    k = ForceKernel(model, ops, constants or PdConstants(1.0, 1.0, 1.0, model.mode), mode)
    return k.extensions(np.asarray(U, dtype=float))


def dilatation(model, ops, e, constants, mode=KernelMode.MATRIX) -> np.ndarray:
    return ForceKernel(model, ops, constants, mode).dilatation(np.asarray(e, dtype=float))


def internal_force(model, ops, U, constants, mode=KernelMode.MATRIX) -> np.ndarray:
    return ForceKernel(model, ops, constants, mode).evaluate(U).F


def bond_stretches(model: DiscreteModel, e: np.ndarray, intact: np.ndarray | None = None) -> np.ndarray:
    """s_b = e_b / |xi_b|; broken bonds report 0."""
    s = np.asarray(e, dtype=float) / model.bonds.length
    if intact is not None:
        s = np.where(intact, s, 0.0)
    return s
