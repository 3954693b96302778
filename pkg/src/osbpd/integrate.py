"""Time marching: explicit central difference and adaptive dynamic relaxation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembly import PdOperators, break_bonds
from .discretize import DiscreteModel
from .failure import damage, family_volume, update_bond_status
from .kernels import ForceKernel, KernelMode
from .material import MaterialParams, stable_time_step


class NumericalInstability(RuntimeError):
    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"non-finite state at step {step}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class TimeFunction:
    """Scalar load history: constant, sin(omega t), or a linear ramp to 1."""

    kind: str = "constant"
    omega: float = 0.0
    ramp_time: float = 0.0

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return 1.0
        if self.kind == "sine":
            return math.sin(self.omega * t)
        if self.kind == "ramp":
            return 1.0 if self.ramp_time <= 0 else min(t / self.ramp_time, 1.0)
        raise ValueError(f"unknown time function {self.kind!r}")


@dataclass
class Load:
    name: str
    nodal_force: np.ndarray          # dense, full dof vector at unit time factor
    history: TimeFunction = field(default_factory=TimeFunction)


@dataclass
class BoundaryConditions:
    n_dofs: int
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    loads: list = field(default_factory=list)
    velocity_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    velocity_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    prescribed_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    prescribed_increment: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        self.velocity_dofs = np.asarray(self.velocity_dofs, dtype=np.int64)
        self.velocity_values = np.broadcast_to(
            np.asarray(self.velocity_values, dtype=float), self.velocity_dofs.shape).copy()
        self.prescribed_dofs = np.asarray(self.prescribed_dofs, dtype=np.int64)
        self.prescribed_increment = np.broadcast_to(
            np.asarray(self.prescribed_increment, dtype=float), self.prescribed_dofs.shape).copy()
        clash = np.intersect1d(self.fixed_dofs, self.prescribed_dofs)
        if clash.size:
            raise ValueError(f"dof {int(clash[0])} is both fixed and prescribed")

    @property
    def constrained_dofs(self) -> np.ndarray:
        return np.union1d(self.fixed_dofs, self.prescribed_dofs)

    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained_dofs] = False
        return mask


def traction_load(model: DiscreteModel, nodes: np.ndarray, direction: Sequence[float],
                  stress: float, area: float, history: TimeFunction | None = None,
                  name: str = "traction") -> Load:
    """Equal share of stress * area on every node of the load layer."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError(f"load region {name!r} contains no nodes")
    d = model.dim
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    F = np.zeros(model.n_dofs)
    per_node = stress * area / nodes.size
    for k in range(d):
        F[d * nodes + k] = per_node * direction[k]
    return Load(name, F, history or TimeFunction())


def body_load(model: DiscreteModel, nodes: np.ndarray, direction: Sequence[float],
              density: float, history: TimeFunction | None = None, name: str = "body") -> Load:
    """Force density b [N/m^3] integrated as b * V_i."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError(f"load region {name!r} contains no nodes")
    d = model.dim
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    F = np.zeros(model.n_dofs)
    V = model.nodes.volume[nodes]
    for k in range(d):
        F[d * nodes + k] = density * V * direction[k]
    return Load(name, F, history or TimeFunction())


def apply_external_loads(bc: BoundaryConditions, t: float) -> np.ndarray:
    F = np.zeros(bc.n_dofs)
    for load in bc.loads:
        factor = load.history(t)
        if factor != 0.0:
            F += factor * load.nodal_force
    return F


@dataclass
class FractureControl:
    s_c: float
    breakable: np.ndarray | None = None
    geometric: bool = False


@dataclass
class ExplicitState:
    U: np.ndarray
    V: np.ndarray
    A: np.ndarray
    t: float = 0.0
    step: int = 0

    @classmethod
    def at_rest(cls, n_dofs: int) -> "ExplicitState":
        return cls(np.zeros(n_dofs), np.zeros(n_dofs), np.zeros(n_dofs))


class ExplicitSolver:
    """Velocity-forward, displacement-backward central difference.

    Per step: loads, force, a = (F_int + F_ext) / M, v += dt a, u += dt v on
    free dofs, then the stretch/failure update on the new displacement.
    """

    def __init__(self, model: DiscreteModel, ops: PdOperators, kernel: ForceKernel,
                 bc: BoundaryConditions, dt: float, density: float,
                 fracture: FractureControl | None = None,
                 material: MaterialParams | None = None,
                 state: ExplicitState | None = None):
        if material is not None:
            bound = stable_time_step(material, model.delta)
            if not dt < bound:
                raise ValueError(f"dt={dt} violates the stability bound {bound:.6g}")
        self.model = model
        self.ops = ops
        self.kernel = kernel
        self.bc = bc
        self.dt = float(dt)
        self.mass = np.repeat(density * model.nodes.volume, model.dim)
        self.fracture = fracture
        self.state = state or ExplicitState.at_rest(model.n_dofs)
        self._free = bc.free_mask()
        self._family_volume = family_volume(model)
        self._cached_e = None
        self.last_force = None
        self.newly_broken = np.empty(0, dtype=np.int64)
        if bc.velocity_dofs.size:
            self.state.V[bc.velocity_dofs] = bc.velocity_values

    def damage(self) -> np.ndarray:
        return damage(self.model, self.ops.intact, self._family_volume)

    def _extensions(self, U):
        if self._cached_e is not None:
            e, self._cached_e = self._cached_e, None
            return e
        return self.kernel.extensions(U)

    def step(self) -> ExplicitState:
        st, bc, dt = self.state, self.bc, self.dt
        F_ext = apply_external_loads(bc, st.t)
        e = self._extensions(st.U)
        theta = self.kernel.dilatation(e)
        F_int = self.kernel.forces(e, theta)
        self.last_force = F_int
        st.A = (F_int + F_ext) / self.mass
        V = st.V + dt * st.A
        V[bc.fixed_dofs] = 0.0
        if bc.velocity_dofs.size:
            V[bc.velocity_dofs] = bc.velocity_values
        U = st.U
        U[self._free] += dt * V[self._free]
        if bc.prescribed_dofs.size:
            U[bc.prescribed_dofs] += bc.prescribed_increment
            V[bc.prescribed_dofs] = bc.prescribed_increment / dt
        st.V = V
        st.step += 1
        st.t = st.step * dt
        if not np.all(np.isfinite(U)):
            raise NumericalInstability(st.step)
        self.newly_broken = np.empty(0, dtype=np.int64)
        if self.fracture is not None and math.isfinite(self.fracture.s_c):
            self._fail(U)
        return st

    def _fail(self, U):
        fr = self.fracture
        e_next = self.kernel.extensions(U)
        kernel_geometric = self.kernel.mode is KernelMode.LOOP_GEOMETRIC
        if fr.geometric == kernel_geometric:
            e_test = e_next
        else:
            e_test = self.kernel.extensions(U, geometric=fr.geometric)
        s = e_test / self.model.bonds.length
        broken = update_bond_status(s, fr.s_c, self.ops.intact, fr.breakable)
        if broken.size:
            broken = break_bonds(self.ops, broken)
            e_next = e_next.copy()
            e_next[broken] = 0.0
        self.newly_broken = broken
        self._cached_e = e_next

    def run(self, steps: int, callback: Callable | None = None) -> ExplicitState:
        for _ in range(steps):
            self.step()
            if callback is not None:
                callback(self)
        return self.state

    def energies(self) -> tuple[float, float]:
        """(kinetic, strain) energy; strain energy is -U.F_int/2 for the linear model."""
        st = self.state
        kinetic = 0.5 * float(np.sum(self.mass * st.V ** 2))
        strain = -0.5 * float(st.U @ self.kernel(st.U))
        return kinetic, strain


def critical_time_step(model: DiscreteModel, ops: PdOperators, density: float) -> float:
    """Exact central-difference limit 2 / sqrt(max eig(-M^-1 K)) for the current operators.

    Diagnostic only (it forms K_glob); the configured step is validated
    against the closed-form wave-speed bound, which can be looser than this.
    """
    import scipy.sparse as sp
    from scipy.sparse.linalg import eigsh

    from .assembly import compose_stiffness

    K = compose_stiffness(ops)
    s = sp.diags(1.0 / np.sqrt(np.repeat(density * model.nodes.volume, model.dim)))
    A = -(s @ K @ s)
    lam = float(eigsh(A, k=1, which="LA", return_eigenvectors=False, tol=1e-8)[0])
    return math.inf if lam <= 0 else 2.0 / math.sqrt(lam)


def explicit_step(solver: ExplicitSolver) -> ExplicitState:
    return solver.step()


@dataclass
class AdrResult:
    U: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: list


class AdaptiveDynamicRelaxation:
    """Adaptive dynamic relaxation with a unit pseudo time step.

    Fictitious densities lambda_ii = f * dt^2/4 * sum_j |K_ij|; damping
    c = 2 sqrt(U' K1 U / U'U) with the diagonal secant stiffness
    K1_ii = -(F_i^n - F_i^{n-1}) / (lambda_ii dt v_i^{n-1/2}).

    Args:
        force: callable U -> F_int.
        stiffness_rowsum: sum_j |K_ij| per dof.
        external: constant external force vector.
        fixed_dofs: dofs held at zero displacement.
        prescribed_dofs, increment: dofs advanced by ``increment`` every
            iteration (displacement control).
        density_factor: f >= 1 in lambda_ii. f = 1 puts the stiffest mode
            exactly on the central-difference limit (a single spring then
            oscillates forever), so the default keeps a 10% margin.
    """

    def __init__(self, force: Callable[[np.ndarray], np.ndarray], stiffness_rowsum: np.ndarray,
                 external: np.ndarray | None = None, fixed_dofs=(), prescribed_dofs=(),
                 increment=0.0, dt: float = 1.0, U0: np.ndarray | None = None,
                 density_factor: float = 1.1):
        rowsum = np.asarray(stiffness_rowsum, dtype=float)
        n = rowsum.size
        self.force = force
        self.dt = float(dt)
        self.external = np.zeros(n) if external is None else np.asarray(external, dtype=float)
        self.fixed = np.asarray(fixed_dofs, dtype=np.int64)
        self.prescribed = np.asarray(prescribed_dofs, dtype=np.int64)
        self.increment = np.broadcast_to(np.asarray(increment, dtype=float), self.prescribed.shape).copy()
        self.free = np.ones(n, dtype=bool)
        self.free[self.fixed] = False
        self.free[self.prescribed] = False
        if density_factor < 1.0:
            raise ValueError(f"density_factor must be >= 1, got {density_factor}")
        lam = 0.25 * density_factor * self.dt ** 2 * rowsum
        if np.any(lam[self.free] <= 0):
            k = int(np.flatnonzero(self.free & (lam <= 0))[0])
            raise ValueError(f"dof {k} has zero stiffness; fictitious density would vanish")
        lam[~self.free] = 1.0
        self.lam = lam
        self.U = np.zeros(n) if U0 is None else np.asarray(U0, dtype=float).copy()
        self.U[self.fixed] = 0.0
        self.V = np.zeros(n)
        self._F_prev = None
        self.iteration = 0
        self.c = 0.0

    def residual(self, F_int: np.ndarray | None = None) -> np.ndarray:
        if F_int is None:
            F_int = self.force(self.U)
        return F_int + self.external

    def _damping(self, F):
        F_prev, V = self._F_prev, self.V
        free = self.free
        with np.errstate(divide="ignore", invalid="ignore"):
            k1 = -(F[free] - F_prev[free]) / (self.lam[free] * self.dt * V[free])
        k1 = np.where(np.isfinite(k1), k1, 0.0)
        Uf = self.U[free]
        uu = float(Uf @ Uf)
        if uu <= 0:
            return 0.0
        r = float(Uf @ (k1 * Uf)) / uu
        if not (r > 0 and math.isfinite(r)):
            return 0.0
        return 2.0 * math.sqrt(r)

    def _evaluate(self) -> tuple[np.ndarray, np.ndarray]:
        if self.prescribed.size:
            self.U[self.prescribed] += self.increment
        F_int = self.force(self.U)
        return F_int, F_int + self.external

    def _advance(self, F: np.ndarray) -> None:
        free, dt, lam = self.free, self.dt, self.lam
        V_new = np.zeros_like(self.V)
        if self._F_prev is None:
            self.c = 0.0
            V_new[free] = 0.5 * dt * F[free] / lam[free]
        else:
            self.c = c = self._damping(F)
            V_new[free] = ((2.0 - c * dt) * self.V[free]
                           + 2.0 * dt * F[free] / lam[free]) / (2.0 + c * dt)
        self.V = V_new
        self.U[free] += dt * V_new[free]
        self._F_prev = F
        self.iteration += 1
        if not np.all(np.isfinite(self.U)):
            raise NumericalInstability(self.iteration, "ADR diverged")

    def step(self) -> float:
        """One iteration; returns the free-dof residual norm before the update."""
        _, R = self._evaluate()
        self._advance(R)
        return float(np.linalg.norm(R[self.free]))

    def reference_force(self, F_int: np.ndarray) -> float:
        ext = float(np.linalg.norm(self.external))
        if ext > 0:
            return ext
        return float(np.linalg.norm((F_int + self.external)[~self.free]))

    def solve(self, max_iter: int, tol: float = 1e-10, check_every: int = 1,
              callback: Callable | None = None) -> AdrResult:
        """Iterate until ||R_free|| <= tol * reference or ``max_iter`` is reached.

        With tol <= 0 all ``max_iter`` iterations run (displacement control
        without an equilibrium exit). A zero reference with zero residual
        counts as converged.
        """
        history = []
        res = math.inf
        for _ in range(max_iter):
            F_int, R = self._evaluate()
            res = float(np.linalg.norm(R[self.free]))
            history.append(res)
            if tol > 0 and self.iteration % check_every == 0:
                ref = self.reference_force(F_int)
                if res <= tol * ref or res == 0.0:
                    return AdrResult(self.U.copy(), self.iteration, res, True, history)
            self._advance(R)
            if callback is not None:
                callback(self)
        return AdrResult(self.U.copy(), self.iteration, res, False, history)


def adr_step(adr: AdaptiveDynamicRelaxation) -> float:
    return adr.step()


def reactions(F_int: np.ndarray, F_ext: np.ndarray, dofs: np.ndarray) -> np.ndarray:
    """Support reactions -(F_int + F_ext) at constrained dofs."""
    return -(F_int + F_ext)[dofs]
