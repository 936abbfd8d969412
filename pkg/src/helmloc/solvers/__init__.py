from .core import (
    ALGORITHMS,
    ContinuationStep,
    SolveReport,
    SolverSettings,
    TraceEntry,
    continuation,
    duality_gap,
    gcg_step_size,
    gcg_update,
    insert_candidate,
    objective,
    run,
)
from .prune import PruneError, prune_coeffs, prune_support
from .subproblem import (
    SubproblemResult,
    group_shrink,
    prox_coeff_step,
    solve_subproblem,
    spectral_norm_sq,
)
