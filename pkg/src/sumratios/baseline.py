"""Truncated Rayleigh-flow baseline for the sparsity-constrained
generalized eigenvalue problem.

The update is a reconstruction of the standard truncated Rayleigh ascent:
a normalized Rayleigh-quotient gradient step followed by the exact
projection onto the sparse unit sphere. The original method's step-size
schedule and truncation order are not fixed by the comparison it serves,
so results are comparative, never bit-exact against other codes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import NonpositiveDenominator
from .prox import project_sphere_sparsity
from .solver import (
    STATUS_MAX_ITER,
    STATUS_STEP_TOL,
    IterateRecord,
    SolverResult,
)
from .core import BlockVector

__all__ = ["TrfmConfig", "trfm_step", "trfm_solve"]


@dataclass
class TrfmConfig:
    """Step size, sparsity level and the shared termination criteria."""

    r: int
    eta: float = 1.0
    max_iter: int = 6000
    step_tol: float = 1e-6

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta={self.eta} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _rayleigh(V_b, V_w, x) -> tuple[float, float, float]:
    num = float(x @ V_b @ x)
    den = float(x @ V_w @ x)
    if not den > 0.0:
        raise NonpositiveDenominator(0, den)
    return num, den, num / den


def trfm_step(V_b, V_w, x, config: TrfmConfig, lam_max_w: float | None = None) -> np.ndarray:
    """One truncated Rayleigh ascent step from a feasible sparse unit vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if lam_max_w is None:
        lam_max_w = float(np.linalg.eigvalsh(V_w)[-1])
    num, den, rho = _rayleigh(V_b, V_w, x)
    grad = (2.0 / den) * (V_b @ x - rho * (V_w @ x))
    return project_sphere_sparsity(x + (config.eta / lam_max_w) * grad, config.r).point


def trfm_solve(V_b, V_w, x0, config: TrfmConfig, keep_iterates: bool = False) -> SolverResult:
    """Iterate the truncated Rayleigh ascent with the shared termination rule.

    The trace reuses the solver's record schema: F is the Rayleigh quotient,
    theta coincides with F (no inertia budget), and the step weights are NaN.
    No monotonicity of the quotient is guaranteed or asserted.
    """
    V_b = np.asarray(V_b, dtype=float)
    V_w = np.asarray(V_w, dtype=float)
    x = np.asarray(x0, dtype=float).reshape(-1)
    lam_max_w = float(np.linalg.eigvalsh(V_w)[-1])
    t_start = time.perf_counter()
    rho0 = _rayleigh(V_b, V_w, x)[2]
    trace = [IterateRecord(0, rho0, 0.0, rho0, math.nan, math.nan, 0.0)]
    iterates = [x.copy()] if keep_iterates else None
    status = STATUS_MAX_ITER
    for n in range(config.max_iter):
        x_next = trfm_step(V_b, V_w, x, config, lam_max_w)
        step = float(np.linalg.norm(x_next - x))
        rho = _rayleigh(V_b, V_w, x_next)[2]
        trace.append(IterateRecord(n + 1, rho, step, rho, math.nan, math.nan,
                                   time.perf_counter() - t_start))
        x = x_next
        if keep_iterates:
            iterates.append(x.copy())
        if step < config.step_tol:
            status = STATUS_STEP_TOL
            break
    residual = float(np.linalg.norm(trfm_step(V_b, V_w, x, config, lam_max_w) - x))
    return SolverResult(BlockVector([x]), status, trace, residual, iterates)
