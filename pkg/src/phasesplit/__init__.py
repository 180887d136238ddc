"""Phase-field design of periodic two-phase microstructures.

Each phase is an isotropic material occupying the region where the phase
field ``v`` is near ``+1`` (phase 0) or ``-1`` (phase 1).  The design
minimizes an aggregate of the per-phase effective stiffness under a set of
macroscopic strains plus a Modica-Mortola perimeter penalty.
"""
from .config import ConfigError, ExperimentConfig, parse_config, preset
from .elasticity import CGNotConverged, LoadCase, assemble_operator, solve_corrector
from .homogenize import EffectiveTensor, effective_component, effective_table, load_case
from .material import IsotropicMaterial, from_young_poisson
from .mesh import PeriodicMesh, build_mesh, prolongate
from .objective import CostParams, Objective
from .optimizer import OptimizerConfig, Projector, continuation_run, minimize, project

__all__ = [
    "CGNotConverged", "ConfigError", "CostParams", "EffectiveTensor", "ExperimentConfig",
    "IsotropicMaterial", "LoadCase", "Objective", "OptimizerConfig", "PeriodicMesh", "Projector",
    "assemble_operator", "build_mesh", "continuation_run", "effective_component", "effective_table",
    "from_young_poisson", "load_case", "minimize", "parse_config", "preset", "project", "prolongate",
    "solve_corrector",
]
