"""Similarity of orbits between discrete dynamical systems.

A numpy library for finding the linear transformation that maps one
system's orbit onto another's, quantified by the similarity degree
log(1 + omega) / omega of the mean squared misfit omega. Supports staged
alignment of observed orbit pairs, stagewise dynamic programming when the
second orbit is generated from y_0 = A x_0, and joint optimization of the
matrix with the embedding parameters of homotopy hybrid systems.
"""

from .errors import (
    CatalogError,
    ConfigurationError,
    RankDeficiencyError,
    SimulationOverflowError,
)
from .homotopy import (
    HomotopyAlignment,
    PipelineResult,
    hybrid_alignment_pipeline,
    kkt_residual,
    solve_joint,
)
from .integrate import (
    StepTangent,
    Trajectory,
    propagate_sensitivity,
    rk4_step,
    simulate,
    simulate_with_sensitivity,
    step_tangent,
    verify_trajectory,
)
from .similarity import (
    SimilarityMatrix,
    closed_form_align,
    cost,
    coupled_residual,
    decoupled_gradient,
    mean_sq_misfit,
    similarity_degree,
)
from .staging import (
    SolveDiagnostics,
    StagePlan,
    StageReport,
    bellman_dp,
    cumulative_similarity,
    pontryagin_align,
    solve_coupled,
)
from .systems import (
    CATALOG_NAMES,
    HybridFamily,
    SystemSpec,
    chua_nonlinearity,
    make_hybrid,
    make_system,
)

__all__ = [
    "CATALOG_NAMES",
    "CatalogError",
    "ConfigurationError",
    "HomotopyAlignment",
    "HybridFamily",
    "PipelineResult",
    "RankDeficiencyError",
    "SimilarityMatrix",
    "SimulationOverflowError",
    "SolveDiagnostics",
    "StagePlan",
    "StageReport",
    "StepTangent",
    "SystemSpec",
    "Trajectory",
    "bellman_dp",
    "chua_nonlinearity",
    "closed_form_align",
    "cost",
    "coupled_residual",
    "cumulative_similarity",
    "decoupled_gradient",
    "hybrid_alignment_pipeline",
    "kkt_residual",
    "make_hybrid",
    "make_system",
    "mean_sq_misfit",
    "pontryagin_align",
    "propagate_sensitivity",
    "rk4_step",
    "similarity_degree",
    "simulate",
    "simulate_with_sensitivity",
    "solve_coupled",
    "solve_joint",
    "step_tangent",
    "verify_trajectory",
]
