"""Optimal lockdown for a controlled SIRD epidemic: dynamics, cost, closed-form
Hamiltonian, semi-Lagrangian value iteration, feedback synthesis and property
verification."""
from .config import RunConfig, load_config, parse_control
from .cost import evaluate_J, evaluate_J_tilde, running_cost_f, truncation_horizon
from .dynamics import (
    DEFAULT_PARAMS,
    ControlSignal,
    ModelParams,
    MortalityCurve,
    Trajectory,
    constants,
    integrate_backward,
    integrate_forward,
    integrate_full,
    vector_field_b,
)
from .estimator import LockdownPolicyEstimator
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DomainError,
    LockdownHJBError,
    StepSizeError,
    UndefinedThresholdError,
)
from .hamiltonian import Costate, MinimizerSet, Region, classify, h_cv, hamiltonian_H, psi
from .hjb_solver import (
    TriangularGrid,
    ValueField,
    bellman_update,
    build_grid,
    fd_costate,
    hjb_residual,
    interpolate,
    solve_value_function,
)
from .policy import (
    PolicyReport,
    feedback_law,
    simulate_closed_loop,
    simulate_closed_loop_batch,
    thresholds_k,
)
from .verify import (
    CheckResult,
    SuiteReport,
    VerificationError,
    VerifyConfig,
    check_dpp,
    check_gronwall,
    check_output_identity,
    oracle_hamiltonian,
    run_all,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
