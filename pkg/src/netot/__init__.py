"""Dynamic optimal transport on metric networks with vertex mass storage."""

from .netgraph import (
    Network,
    NetworkMeasure,
    build_network,
    incidence_sign,
    total_mass,
)
from .grid import (
    GridSpec,
    TrajectoryField,
    CEResidual,
    ce_residual,
    coupled_vertex_rates,
    linear_seed,
    velocity_field,
    weak_form_residual,
    SpaceTimeTest,
    VertexTest,
)
from .action import (
    ActionBreakdown,
    ParaboloidSet,
    action_density,
    action_eval,
    project_paraboloid,
    project_vertex_set,
    prox_action,
)
from .solver import (
    DualPotentials,
    SolveReport,
    SolverParams,
    eval_dual_objective,
    hj_residual,
    optimality_residual,
    solve_geodesic,
)
from .metrics import (
    KappaSweep,
    bl_constant,
    bl_distance_edge,
    bl_distance_vertex,
    bl_path_estimate,
    fisher_rao,
    fisher_rao_program,
    kirchhoff_report,
    sweep_kappa,
    w_zero,
    wasserstein_edge_1d,
    wasserstein_edges_kirchhoff,
)
from .gradflow import (
    EnergySpec,
    FlowState,
    FlowTrajectory,
    energy_eval,
    entropy_vertex_energy,
    flow_step,
    quadratic_vertex_energy,
    simulate,
)
from .acceptance import CriterionResult, run_acceptance
from .exceptions import (
    CFLError,
    DanglingVertexError,
    DisconnectedNetworkError,
    MassMismatchError,
    NetotError,
    NonpositiveLengthError,
    SchemaError,
    SelfLoopError,
    ShapeMismatchError,
    ValidationError,
    ZeroDensityFluxError,
)

__version__ = "0.1.0"

__all__ = [
    "Network",
    "NetworkMeasure",
    "build_network",
    "incidence_sign",
    "total_mass",
    "GridSpec",
    "TrajectoryField",
    "CEResidual",
    "ce_residual",
    "coupled_vertex_rates",
    "linear_seed",
    "velocity_field",
    "weak_form_residual",
    "SpaceTimeTest",
    "VertexTest",
    "ActionBreakdown",
    "ParaboloidSet",
    "action_density",
    "action_eval",
    "project_paraboloid",
    "project_vertex_set",
    "prox_action",
    "DualPotentials",
    "SolveReport",
    "SolverParams",
    "eval_dual_objective",
    "hj_residual",
    "optimality_residual",
    "solve_geodesic",
    "KappaSweep",
    "bl_constant",
    "bl_distance_edge",
    "bl_distance_vertex",
    "bl_path_estimate",
    "fisher_rao",
    "fisher_rao_program",
    "kirchhoff_report",
    "sweep_kappa",
    "w_zero",
    "wasserstein_edge_1d",
    "wasserstein_edges_kirchhoff",
    "EnergySpec",
    "FlowState",
    "FlowTrajectory",
    "energy_eval",
    "entropy_vertex_energy",
    "flow_step",
    "quadratic_vertex_energy",
    "simulate",
    "CriterionResult",
    "run_acceptance",
    "NetotError",
    "ValidationError",
    "DisconnectedNetworkError",
    "SelfLoopError",
    "DanglingVertexError",
    "NonpositiveLengthError",
    "MassMismatchError",
    "ShapeMismatchError",
    "ZeroDensityFluxError",
    "CFLError",
    "SchemaError",
    "__version__",
]
