"""Coarse-embedding elastodynamics with intersection-free frictional contact."""

from .contact import ContactPair, ContactParams, FrictionDatum, SurfaceTopology
from .energy import Material, MODEL_COROTATIONAL, MODEL_ORTHOGONALITY
from .mesh import Binding, CollisionMesh, EmbeddingMesh, MassModel, bind, embed, jacobian, lump_masses
from .reduction import BodyAssembly, SimState, System
from .scene import Scene, TrajectoryLog, build_scene, error_metric, load_scene, run
from .solver import SolverConfig, StepStats, step

__all__ = [
    "Binding",
    "BodyAssembly",
    "CollisionMesh",
    "ContactPair",
    "ContactParams",
    "EmbeddingMesh",
    "FrictionDatum",
    "MassModel",
    "Material",
    "MODEL_COROTATIONAL",
    "MODEL_ORTHOGONALITY",
    "Scene",
    "SimState",
    "SolverConfig",
    "StepStats",
    "SurfaceTopology",
    "System",
    "TrajectoryLog",
    "bind",
    "build_scene",
    "embed",
    "error_metric",
    "jacobian",
    "load_scene",
    "lump_masses",
    "run",
    "step",
]

__version__ = "0.1.0"
