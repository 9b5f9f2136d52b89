"""codimsim: contact-safe implicit simulation of particles, rods, shells and
volumes with thickness offsets, constitutive strain limiting and a
conservative-advancement CCD line-search filter."""

from .accd import CcdQuery, accd_query, max_step, toi_lower_bound
from .barrier import BarrierParams
from .distance import (
    DistanceResult,
    PairKind,
    PrimitivePair,
    dist_sq_edge_edge,
    dist_sq_point_edge,
    dist_sq_point_point,
    dist_sq_point_triangle,
)
from .solver import StepConfig, System, friction_outer_loop, newton_step
from .strain_limit import StrainLimitParams, sl_barrier, sl_barrier_normalized
from .world import MaterialParams, SimMesh, WorldState

__version__ = "0.1.0"

__all__ = [
    "BarrierParams",
    "CcdQuery",
    "DistanceResult",
    "MaterialParams",
    "PairKind",
    "PrimitivePair",
    "SimMesh",
    "StepConfig",
    "StrainLimitParams",
    "System",
    "WorldState",
    "accd_query",
    "dist_sq_edge_edge",
    "dist_sq_point_edge",
    "dist_sq_point_point",
    "dist_sq_point_triangle",
    "friction_outer_loop",
    "max_step",
    "newton_step",
    "sl_barrier",
    "sl_barrier_normalized",
    "toi_lower_bound",
]
