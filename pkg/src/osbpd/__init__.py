"""Linearized ordinary state-based peridynamics with sparse-operator and loop force kernels."""

from .assembly import PdOperators, assemble_operators, break_bonds, compose_stiffness
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .discretize import DiscreteModel, NodeSet, PreCrack, build_grid, build_model, seed_precrack
from .failure import damage, update_bond_status
from .integrate import (
    AdaptiveDynamicRelaxation,
    BoundaryConditions,
    ExplicitSolver,
    NumericalInstability,
)
from .kernels import ForceKernel, KernelMode, internal_force
from .material import (
    DimensionMode,
    MaterialParams,
    critical_stretch,
    derive_pd_constants,
    stable_time_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveDynamicRelaxation", "BoundaryConditions", "ConfigError", "DimensionMode",
    "DiscreteModel", "ExplicitSolver", "ForceKernel", "KernelMode", "MaterialParams",
    "NodeSet", "NumericalInstability", "PdOperators", "PreCrack", "ScenarioConfig",
    "assemble_operators", "break_bonds", "build_grid", "build_model", "compose_stiffness",
    "critical_stretch", "damage", "derive_pd_constants", "internal_force", "load_config",
    "parse_config", "seed_precrack", "stable_time_step", "update_bond_status",
]
