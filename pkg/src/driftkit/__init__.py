"""driftkit: maximize how long a drifting system stays inside shifting limits.

The pipeline: describe a constrained discrete-time system (`DcocProblem`),
transcribe the exit-time objective into a smooth weighted-slack program
(`build_nlp`), solve it with the bundled SQP method (`solve`), and read the
achieved time before exit back off the trajectory (`extract`). Exact or
certified reference values come from the `oracle` module; a spacecraft
attitude case study lives in `attitude`.
"""

from .attitude import (
    AttitudeParams,
    GimbalSingularityError,
    attitude_problem,
    continuous_dynamics,
    continuous_jacobians,
    discretize_step,
    srp_torque,
    wheel_momentum,
)
from .config import (
    BUNDLED_SCENARIOS,
    ConfigError,
    ScenarioConfig,
    build_problem,
    load_bundled,
    load_config,
    parse_config,
    resolve_config,
    save_config,
)
from .core import (
    ControlSet,
    DcocError,
    DcocProblem,
    EvaluationError,
    InvalidInitialStateError,
    SimulationDivergedError,
    StageConstraint,
    Trajectory,
    box_constraint,
    finite_difference_jacobian,
    simulate,
    time_before_exit,
)
from .oracle import (
    OracleOptions,
    OracleReport,
    kappa_star_grid_dp,
    kappa_star_sweep,
)
from .solver import (
    STATUS_INFEASIBLE_QP,
    STATUS_LINE_SEARCH,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    SolverOptions,
    SolverSolution,
    kkt_residual,
    multi_start,
    solve,
)
from .transcription import (
    NlpInstance,
    SolutionExtract,
    build_feasibility_nlp,
    build_nlp,
    extract,
    feasible_point,
    initial_guess,
    seeded_guess,
    nlp_gradients_check,
)

__version__ = "0.1.0"

__all__ = [
    "AttitudeParams",
    "BUNDLED_SCENARIOS",
    "ConfigError",
    "ControlSet",
    "DcocError",
    "DcocProblem",
    "EvaluationError",
    "GimbalSingularityError",
    "InvalidInitialStateError",
    "NlpInstance",
    "OracleOptions",
    "OracleReport",
    "STATUS_INFEASIBLE_QP",
    "STATUS_LINE_SEARCH",
    "STATUS_MAX_ITER",
    "STATUS_OPTIMAL",
    "ScenarioConfig",
    "SimulationDivergedError",
    "SolutionExtract",
    "SolverOptions",
    "SolverSolution",
    "StageConstraint",
    "Trajectory",
    "attitude_problem",
    "box_constraint",
    "build_feasibility_nlp",
    "build_nlp",
    "build_problem",
    "continuous_dynamics",
    "continuous_jacobians",
    "discretize_step",
    "extract",
    "feasible_point",
    "seeded_guess",
    "finite_difference_jacobian",
    "initial_guess",
    "kappa_star_grid_dp",
    "kappa_star_sweep",
    "kkt_residual",
    "load_bundled",
    "load_config",
    "multi_start",
    "nlp_gradients_check",
    "parse_config",
    "resolve_config",
    "save_config",
    "simulate",
    "solve",
    "srp_torque",
    "time_before_exit",
    "wheel_momentum",
]
