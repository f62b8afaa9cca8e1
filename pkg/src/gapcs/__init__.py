"""Adaptive GAP and AIT sparse recovery, RIP-based convergence theory, and a
desk-scale experiment harness."""
from .core import (
    ProblemInstance,
    SensingOperator,
    apply_gram_inverse,
    build_operator,
    load_matrix,
    make_problem,
    rip_constant_exact,
    rip_constant_sampled,
    rip_invariance_check,
    save_matrix,
    shared_spectrum_check,
)
from .errors import (
    DimensionError,
    DomainError,
    GapcsError,
    NotOrthonormal,
    ParseError,
    SingularGram,
    TooManySubsets,
)
from .solvers import (
    Algorithm,
    IterateTrace,
    SolverConfig,
    StopReason,
    ait_step,
    estimate_noise,
    gap_step,
    run_solver,
    select_lambda,
    shrink,
)

__version__ = "0.1.0"
