"""Physics-informed graph network solver for PDEs on scattered 2-D nodes.

The package has two solution paths over the same discretization: a classical
explicit time stepper built from local RBF-FD Laplacian weights (the oracle),
and a message-passing network trained so that its one-step predictions zero
the same discrete update residual — no labeled solution data involved.
"""

from .assembly import (
    ResidualSystem,
    Trajectory,
    WaveSystem,
    analytic_trajectory,
    assemble_heat,
    assemble_wave,
    direct_step,
    residual,
    rollout_direct,
    stability_indicator,
    wave_direct_step,
    wave_residual,
)
from .config import RunConfig, load_config, parse_config
from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    DivergenceError,
    DuplicateNodeError,
    GeometryError,
    InstabilityError,
    RbfMgnError,
    SamplingCapacityError,
    StencilConditioningError,
    StencilError,
)
from .estimators import NotFittedError, RbfLaplacian, RbfMgnRegressor
from .geometry import (
    DomainSpec,
    Graph,
    NodeSet,
    build_graph,
    domain_area,
    graph_from_json,
    graph_to_json,
    mesh_domain,
    point_in_domain,
    sample_nodes,
    triangulate,
)
from .gnn import (
    AdamState,
    GnnModel,
    adam_step,
    build_model,
    checkpoint_from_json,
    checkpoint_to_json,
    graph_hash,
    predict_next,
)
from .problems import (
    MissingAnalyticError,
    ProblemSpec,
    amoeba_heat_problem,
    analytic_solution,
    boundary_values,
    butterfly_heat_problem,
    initial_condition,
    lshape_wave_problem,
    problem_from_config,
    source_term,
    square_source_problem,
)
from .stencils import (
    RbfKernel,
    StencilSet,
    apply_operator,
    build_stencil_set,
    kernel_laplacian,
    kernel_value,
    stencil_set_from_json,
    stencil_set_to_json,
    stencil_weights,
)
from .training import (
    TrainConfig,
    TrainResult,
    max_abs_error,
    pde_loss,
    relative_l2,
    rollout_model,
    rollout_model_reversed,
    teacher_trajectory,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConfigurationError",
    "DegenerateGeometryError",
    "DivergenceError",
    "DomainSpec",
    "DuplicateNodeError",
    "GeometryError",
    "GnnModel",
    "Graph",
    "InstabilityError",
    "MissingAnalyticError",
    "NodeSet",
    "NotFittedError",
    "ProblemSpec",
    "RbfKernel",
    "RbfLaplacian",
    "RbfMgnError",
    "RbfMgnRegressor",
    "ResidualSystem",
    "RunConfig",
    "SamplingCapacityError",
    "StencilConditioningError",
    "StencilError",
    "StencilSet",
    "TrainConfig",
    "TrainResult",
    "Trajectory",
    "WaveSystem",
    "adam_step",
    "amoeba_heat_problem",
    "analytic_solution",
    "analytic_trajectory",
    "apply_operator",
    "assemble_heat",
    "assemble_wave",
    "boundary_values",
    "build_graph",
    "build_model",
    "build_stencil_set",
    "butterfly_heat_problem",
    "checkpoint_from_json",
    "checkpoint_to_json",
    "direct_step",
    "domain_area",
    "graph_from_json",
    "graph_hash",
    "graph_to_json",
    "initial_condition",
    "kernel_laplacian",
    "kernel_value",
    "load_config",
    "lshape_wave_problem",
    "max_abs_error",
    "mesh_domain",
    "parse_config",
    "pde_loss",
    "point_in_domain",
    "predict_next",
    "problem_from_config",
    "relative_l2",
    "residual",
    "rollout_direct",
    "rollout_model",
    "rollout_model_reversed",
    "sample_nodes",
    "source_term",
    "square_source_problem",
    "stability_indicator",
    "stencil_set_from_json",
    "stencil_set_to_json",
    "stencil_weights",
    "teacher_trajectory",
    "train",
    "triangulate",
    "wave_direct_step",
    "wave_residual",
]
