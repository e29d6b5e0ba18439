"""Solver library and benchmark tools for nonsmooth sum-of-ratios
maximization with block structure."""

from .core import (
    AssumptionReport,
    BlockVector,
    Box,
    Coupling,
    CustomSet,
    DimensionMismatch,
    FeasibleSet,
    FractionalProblem,
    NegativeNumerator,
    NonpositiveDenominator,
    OracleFailure,
    RatioTerm,
    SparsitySet,
    Sphere,
    SphereSparsity,
    compute_w,
    compute_y,
    evaluate_F,
    evaluate_H,
    problem_to_json,
    validate_assumptions,
)
from .prox import (
    ProxResult,
    brute_force_prox,
    project_box,
    project_sphere,
    project_sparsity,
    project_sphere_sparsity,
    prox_l0_sphere,
)
from .solver import (
    STATUS_MAX_ITER,
    STATUS_STEP_TOL,
    DescentReport,
    InfeasibleBlock,
    IterateRecord,
    SolverConfig,
    SolverResult,
    SolverState,
    TauBelowBound,
    check_descent,
    iterate,
    solve,
    step_tau,
    write_trace_csv,
)
from .instances import (
    InstanceSpec,
    SfdaData,
    build_ep,
    build_fqp,
    build_gep,
    build_geps,
    build_random_fqp,
    generate_sfda,
    problem_from_json,
    sparse_uniform_x0,
)
from .baseline import TrfmConfig, trfm_solve, trfm_step
from .diagnostics import (
    RateFit,
    fit_rate,
    iterate_distances,
    merit_G,
    sparsity_level,
    stationarity_residual,
    summarize_trial_set,
)

__version__ = "0.1.0"
