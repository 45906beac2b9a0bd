"""Cooperative edge-assisted federated learning simulator and solver.

Thin Python surface over the C++ core: network generation, the closed-form
delay/energy model, convergence-bound utilities, consensus primitives, the
distributed orchestration solver and the per-round experiment loop.
"""

from ._cefl import (  # noqa: F401
    ConfigError,
    SetupError,
    SolverError,
    accumulation_weights,
    apply_offload_plan,
    consensus_run,
    consensus_weights,
    downlink_rate,
    e2e_rate_matrix,
    generate_network_files,
    project_simplex,
    run_experiment,
    selftest,
    sgd_variance_bound,
    solve_orchestration,
    step_size_check,
    uplink_rate,
)

__all__ = [
    "ConfigError",
    "SetupError",
    "SolverError",
    "accumulation_weights",
    "apply_offload_plan",
    "consensus_run",
    "consensus_weights",
    "downlink_rate",
    "e2e_rate_matrix",
    "generate_network_files",
    "project_simplex",
    "run_experiment",
    "selftest",
    "sgd_variance_bound",
    "solve_orchestration",
    "step_size_check",
    "uplink_rate",
]
