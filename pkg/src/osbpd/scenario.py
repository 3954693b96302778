"""Scenario orchestration: pre-processing once, then the solver loop and writers."""

from __future__ import annotations

import logging
import math
import resource
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .assembly import PdOperators, assemble_operators, break_bonds, stiffness_abs_rowsum
from .config import ConfigError, ScenarioConfig
from .discretize import DiscreteModel, PreCrack, build_grid, build_model, seed_precrack, select_nodes
from .failure import damage, family_volume, no_fail_bonds, update_bond_status
from .integrate import (
    AdaptiveDynamicRelaxation,
    BoundaryConditions,
    ExplicitSolver,
    FractureControl,
    NumericalInstability,
    TimeFunction,
    apply_external_loads,
    body_load,
    traction_load,
)
from .io import ProbeWriter, write_report, write_snapshot
from .kernels import ForceKernel, KernelMode
from .material import PdConstants, critical_stretch, derive_pd_constants

log = logging.getLogger(__name__)


@dataclass
class Prepared:
    """Everything built by pre-processing."""

    config: ScenarioConfig
    model: DiscreteModel
    constants: PdConstants
    ops: PdOperators
    bc: BoundaryConditions
    fracture: FractureControl | None
    probe_nodes: np.ndarray
    seeded: np.ndarray
    timings: dict = field(default_factory=dict)


@dataclass
class RunResult:
    report: dict
    prepared: Prepared
    U: np.ndarray
    damage: np.ndarray
    broken_step: np.ndarray          # -1 intact, 0 seeded, n > 0 failed at step n
    probe_path: Path | None
    damage_history: list = field(default_factory=list)


def build_nodes(cfg: ScenarioConfig):
    """Cell-centred lattice over the union of the main and ``add`` boxes, minus ``remove``."""
    boxes = [(cfg.lower, cfg.upper)] + [(b.lower, b.upper) for b in cfg.add]
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    nodes = build_grid(lo, hi, cfg.dx, cfg.mode, cfg.thickness)
    if not cfg.add and not cfg.remove:
        return nodes
    x = nodes.x
    keep = np.all((x >= np.asarray(cfg.lower)) & (x <= np.asarray(cfg.upper)), axis=1)
    for b in cfg.add:
        keep |= b.contains(x)
    for b in cfg.remove:
        keep &= ~b.contains(x)
    return select_nodes(nodes, keep)


def _dofs(nodes: np.ndarray, components, d: int) -> np.ndarray:
    comps = np.asarray(components, dtype=np.int64)
    return (d * np.asarray(nodes, dtype=np.int64)[:, None] + comps[None, :]).ravel()


def _select(region, x, dx, label):
    idx = region.select(x, 1e-6 * dx)
    if idx.size == 0:
        raise ConfigError([f"boundary {label!r}: region selects no nodes"])
    return idx


def build_boundary(cfg: ScenarioConfig, model: DiscreteModel) -> BoundaryConditions:
    x, d, dx = model.nodes.x, model.dim, cfg.dx
    fixed = [_dofs(_select(f.region, x, dx, f.name), f.components, d) for f in cfg.fixed]
    loads = []
    for t in cfg.tractions:
        nodes = _select(t.region, x, dx, t.name)
        loads.append(traction_load(model, nodes, t.direction, t.stress, t.area,
                                   TimeFunction(t.time.kind, t.time.omega, t.time.ramp_time), t.name))
    for b in cfg.body_forces:
        nodes = _select(b.region, x, dx, b.name)
        loads.append(body_load(model, nodes, b.direction, b.density,
                               TimeFunction(b.time.kind, b.time.omega, b.time.ramp_time), b.name))
    vdofs, vvals = [], []
    for v in cfg.velocities:
        dofs = _dofs(_select(v.region, x, dx, v.name), v.components, d)
        vdofs.append(dofs)
        vvals.append(np.full(dofs.size, v.value))
    pdofs, pinc = [], []
    for p in cfg.prescribed:
        dofs = _dofs(_select(p.region, x, dx, p.name), p.components, d)
        pdofs.append(dofs)
        pinc.append(np.full(dofs.size, p.value))
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.empty(0, dt)
    return BoundaryConditions(
        model.n_dofs, fixed_dofs=cat(fixed, np.int64), loads=loads,
        velocity_dofs=cat(vdofs, np.int64), velocity_values=cat(vvals, float),
        prescribed_dofs=cat(pdofs, np.int64), prescribed_increment=cat(pinc, float))


def prepare(cfg: ScenarioConfig) -> Prepared:
    """Grid, bonds, weighted volumes, operators, pre-cracks and boundary conditions."""
    timings = {}
    t0 = time.perf_counter()
    nodes = build_nodes(cfg)
    timings["grid"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = build_model(nodes, cfg.delta)
    timings["bonds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    constants = derive_pd_constants(cfg.material, cfg.mode)
    ops = assemble_operators(model, constants)
    timings["operators"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seeded = []
    for pc in cfg.precracks:
        seeded.append(seed_precrack(nodes, model.bonds, PreCrack(np.array(pc.points), pc.width)))
    seeded = np.unique(np.concatenate(seeded)) if seeded else np.empty(0, dtype=np.int64)
    break_bonds(ops, seeded)
    timings["precrack"] = time.perf_counter() - t0

    bc = build_boundary(cfg, model)
    fracture = None
    if cfg.fracture:
        s_c = critical_stretch(cfg.material, cfg.delta, cfg.mode).s_c
        breakable = None
        if cfg.no_fail is not None:
            protected = cfg.no_fail.select(nodes.x, 1e-6 * cfg.dx)
            breakable = no_fail_bonds(model, protected)
        fracture = FractureControl(s_c=s_c, breakable=breakable, geometric=cfg.geometric_stretch)
    probes = np.empty(0, dtype=np.int64)
    if cfg.output.probes:
        _, probes = cKDTree(nodes.x).query(np.array(cfg.output.probes))
        probes = np.atleast_1d(probes).astype(np.int64)
    return Prepared(cfg, model, constants, ops, bc, fracture, probes, seeded, timings)


def _operator_bytes(ops: PdOperators) -> int:
    total = 0
    for m in (ops.Ce, ops.Ctheta, ops.Ktheta, ops.Ke):
        total += m.data.nbytes + m.indices.nbytes + m.indptr.nbytes
    return total


def _base_report(p: Prepared) -> dict:
    cfg, model = p.config, p.model
    report = {
        "name": cfg.name,
        "source": cfg.source,
        "mode": cfg.mode.value,
        "nodes": model.n_nodes,
        "bonds": model.n_bonds,
        "dofs": model.n_dofs,
        "dx": cfg.dx,
        "horizon": cfg.delta,
        "m_ratio": cfg.m_ratio,
        "kernel": cfg.kernel.value,
        "integrator": cfg.integrator.kind,
        "seeded_bonds": int(p.seeded.size),
        "preprocess_seconds": dict(p.timings),
        "memory_estimate_bytes": {
            "operators": _operator_bytes(p.ops),
            "model": int(model.nodes.x.nbytes + model.bonds.xi.nbytes * 2
                         + model.bonds.pairs.nbytes + model.bonds.length.nbytes),
            "state_vectors": int(8 * (5 * model.n_dofs + 2 * model.n_bonds + 3 * model.n_nodes)),
        },
    }
    if cfg.integrator.kind == "explicit":
        report["dt"] = cfg.integrator.dt
        report["dt_bound"] = cfg.time_step_bound
    if p.fracture is not None:
        report["critical_stretch"] = p.fracture.s_c
    return report


def _peak_rss_bytes() -> int:
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss) * 1024


def run_scenario(cfg: ScenarioConfig, output_dir=None, write_files: bool = True,
                 progress: bool = False, keep_damage_history: int = 0,
                 max_steps: int | None = None) -> RunResult:
    """Pre-process once, then run the configured integrator.

    ``keep_damage_history`` > 0 stores the damage field at step 0 and every
    that many steps in :attr:`RunResult.damage_history` (True means every step).

    Writes ``probes.csv``, ``snapshots/step_NNNNNN.{vtk,csv}`` and
    ``report.json`` under the output directory. On a numerical blow-up the
    report is still written (status "instability") and the
    :class:`NumericalInstability` is re-raised.
    """
    t_start = time.perf_counter()
    p = prepare(cfg)
    out = Path(output_dir if output_dir is not None else cfg.output.directory)
    report = _base_report(p)
    log.info("%s: %d nodes, %d bonds, %d seeded", cfg.name, p.model.n_nodes, p.model.n_bonds,
             p.seeded.size)
    broken_step = np.full(p.model.n_bonds, -1, dtype=np.int64)
    broken_step[p.seeded] = 0
    runner = _run_explicit if cfg.integrator.kind == "explicit" else _run_adr
    try:
        result = runner(p, out, write_files, report, broken_step, progress,
                        keep_damage_history, max_steps)
    except NumericalInstability as exc:
        report["status"] = "instability"
        report["failed_step"] = exc.step
        if write_files:
            write_report(out / "report.json", report)
        raise
    report["wall_seconds"] = time.perf_counter() - t_start
    report["peak_rss_bytes"] = _peak_rss_bytes()
    if write_files:
        write_report(out / "report.json", report)
    return result


def _probe_values(U, probes, d):
    u = U.reshape(-1, d)
    return u[probes].ravel()


def _run_explicit(p: Prepared, out: Path, write_files, report, broken_step, progress,
                  keep_history, max_steps):
    cfg, model = p.config, p.model
    kern = ForceKernel(model, p.ops, p.constants, cfg.kernel)
    solver = ExplicitSolver(model, p.ops, kern, p.bc, cfg.integrator.dt, cfg.material.density,
                            fracture=p.fracture, material=cfg.material)
    steps = cfg.integrator.steps if max_steps is None else min(max_steps, cfg.integrator.steps)
    o = cfg.output
    d = model.dim
    names = [f"p{k}" for k in range(p.probe_nodes.size)]
    probe_path = out / "probes.csv" if write_files else None
    writer = ProbeWriter(probe_path, names, d) if write_files else None
    history = []
    fam = family_volume(model)

    def snapshot(step):
        if write_files and o.snapshot_every > 0:
            write_snapshot(out / "snapshots" / f"step_{step:06d}", model.nodes.x, solver.state.U,
                           damage(model, p.ops.intact, fam), o.formats)

    if writer:
        writer.write(0, 0.0, _probe_values(solver.state.U, p.probe_nodes, d))
    snapshot(0)
    if keep_history:
        history.append(damage(model, p.ops.intact, fam))
    solver_time = 0.0
    status = "completed"
    try:
        for n in range(1, steps + 1):
            t0 = time.perf_counter()
            solver.step()
            solver_time += time.perf_counter() - t0
            if solver.newly_broken.size:
                broken_step[solver.newly_broken] = n
            if writer and n % o.probe_every == 0:
                writer.write(n, solver.state.t, _probe_values(solver.state.U, p.probe_nodes, d))
            if o.snapshot_every > 0 and (n % o.snapshot_every == 0 or n == steps):
                snapshot(n)
            if keep_history and n % int(keep_history) == 0:
                history.append(damage(model, p.ops.intact, fam))
            if progress and n % 1000 == 0:
                log.info("step %d/%d", n, steps)
    except NumericalInstability:
        report["steps"] = solver.state.step
        raise
    finally:
        if writer:
            writer.close()
    report.update(status=status, steps=steps, simulated_time=solver.state.t,
                  solver_seconds=solver_time,
                  seconds_per_1000_steps=1000.0 * solver_time / max(steps, 1),
                  broken_bonds=int((broken_step > 0).sum()))
    return RunResult(report, p, solver.state.U.copy(), damage(model, p.ops.intact, fam),
                     broken_step, probe_path, history)


def _run_adr(p: Prepared, out: Path, write_files, report, broken_step, progress,
             keep_history, max_steps):
    cfg, model = p.config, p.model
    ic = cfg.integrator
    if p.bc.velocity_dofs.size:
        raise ConfigError(["boundary.velocity: not defined for the adr integrator"])
    kern = ForceKernel(model, p.ops, p.constants, cfg.kernel)
    rowsum = stiffness_abs_rowsum(p.ops)
    external = apply_external_loads(p.bc, 0.0)
    adr = AdaptiveDynamicRelaxation(kern, rowsum, external=external, fixed_dofs=p.bc.fixed_dofs,
                                    prescribed_dofs=p.bc.prescribed_dofs,
                                    increment=p.bc.prescribed_increment,
                                    density_factor=ic.density_factor)
    iterations = ic.iterations if max_steps is None else min(max_steps, ic.iterations)
    d = model.dim
    o = cfg.output
    names = [f"p{k}" for k in range(p.probe_nodes.size)]
    probe_path = out / "probes.csv" if write_files else None
    extra = ("reaction",) if p.bc.prescribed_dofs.size else ()
    writer = ProbeWriter(probe_path, names, d, extra) if write_files else None
    fam = family_volume(model)
    fr = p.fracture
    history = []
    last_force = {"F": np.zeros(model.n_dofs)}

    def force(U):
        F = kern(U)
        last_force["F"] = F
        return F

    adr.force = force

    def after(a: AdaptiveDynamicRelaxation):
        n = a.iteration
        if fr is not None and math.isfinite(fr.s_c) and n % ic.failure_every == 0:
            e = kern.extensions(a.U, geometric=fr.geometric)
            s = e / model.bonds.length
            broken = update_bond_status(s, fr.s_c, p.ops.intact, fr.breakable)
            if broken.size:
                broken = break_bonds(p.ops, broken)
                broken_step[broken] = n
        if writer and n % o.probe_every == 0:
            R = -(last_force["F"] + external)[p.bc.prescribed_dofs].sum() if extra else None
            writer.write(n, float(n), _probe_values(a.U, p.probe_nodes, d),
                         (R,) if extra else ())
        if write_files and o.snapshot_every > 0 and n % o.snapshot_every == 0:
            write_snapshot(out / "snapshots" / f"step_{n:06d}", model.nodes.x, a.U,
                           damage(model, p.ops.intact, fam), o.formats)
        if keep_history and n % int(keep_history) == 0:
            history.append(damage(model, p.ops.intact, fam))
        if progress and n % 1000 == 0:
            log.info("iteration %d/%d", n, iterations)

    if writer:
        writer.write(0, 0.0, _probe_values(adr.U, p.probe_nodes, d), (0.0,) if extra else ())
    if write_files and o.snapshot_every > 0:
        write_snapshot(out / "snapshots" / "step_000000", model.nodes.x, adr.U,
                       damage(model, p.ops.intact, fam), o.formats)
    if keep_history:
        history.append(damage(model, p.ops.intact, fam))
    t0 = time.perf_counter()
    try:
        res = adr.solve(iterations, tol=ic.tol, check_every=ic.check_every, callback=after)
    finally:
        if writer:
            writer.close()
    solver_time = time.perf_counter() - t0
    phi = damage(model, p.ops.intact, fam)
    if write_files and o.snapshot_every > 0:
        write_snapshot(out / "snapshots" / f"step_{res.iterations:06d}", model.nodes.x, res.U,
                       phi, o.formats)
    report.update(status="converged" if res.converged else "max_iterations",
                  steps=res.iterations, residual=res.residual, solver_seconds=solver_time,
                  seconds_per_1000_steps=1000.0 * solver_time / max(res.iterations, 1),
                  broken_bonds=int((broken_step > 0).sum()))
    return RunResult(report, p, res.U, phi, broken_step, probe_path, history)


def run_benchmark(cfg: ScenarioConfig, kernels=("matrix", "loop"), iterations: int = 1000,
                  warmup: int | None = None, case: str | None = None) -> list[dict]:
    """Time the solver loop of one scenario under each kernel.

    Fracture is disabled; every kernel starts from the same state and runs
    the same number of steps. One warm-up block (default min(100, N) steps,
    which also triggers JIT compilation) is excluded from the timing, and
    pre-processing is never timed.
    """
    cfg = replace(cfg, fracture=False)
    p = prepare(cfg)
    model = p.model
    warmup = min(100, iterations) if warmup is None else warmup
    dt = cfg.integrator.dt if cfg.integrator.kind == "explicit" else 0.5 * cfg.time_step_bound
    rows = []
    for name in kernels:
        mode = KernelMode.parse(name)
        ops = p.ops.copy()
        kern = ForceKernel(model, ops, p.constants, mode)
        solver = ExplicitSolver(model, ops, kern, p.bc, dt, cfg.material.density)
        solver.run(warmup)
        t0 = time.perf_counter()
        solver.run(iterations)
        seconds = time.perf_counter() - t0
        rows.append({"case": case or cfg.name, "kernel": mode.value, "nodes": model.n_nodes,
                     "bonds": model.n_bonds, "iterations": iterations, "seconds": seconds})
    loop = next((r["seconds"] for r in rows if r["kernel"] == KernelMode.LOOP_LINEARIZED.value), None)
    for r in rows:
        r["speedup_vs_loop"] = (loop / r["seconds"]) if loop is not None and r["seconds"] > 0 else math.nan
    return rows


BENCH_COLUMNS = ("case", "kernel", "nodes", "bonds", "iterations", "seconds", "speedup_vs_loop")


def write_benchmark_csv(path, rows: list[dict]) -> Path:
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in BENCH_COLUMNS})
    return path


def time_force_evaluations(model: DiscreteModel, ops: PdOperators, constants: PdConstants,
                           mode, evaluations: int = 1000, warmup: int = 20, seed: int = 0) -> float:
    """Seconds for ``evaluations`` internal-force evaluations on a fixed random field."""
    kern = ForceKernel(model, ops, constants, mode)
    U = 1e-6 * np.random.default_rng(seed).standard_normal(model.n_dofs)
    for _ in range(warmup):
        kern.evaluate(U, check=False)
    t0 = time.perf_counter()
    for _ in range(evaluations):
        kern.evaluate(U, check=False)
    return time.perf_counter() - t0
