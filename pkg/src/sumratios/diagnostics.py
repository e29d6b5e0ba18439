"""Merit function, stationarity residuals, convergence-rate classification
and trial aggregation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BlockVector, FractionalProblem, compute_w, evaluate_F

__all__ = [
    "RateFit",
    "TooFewPoints",
    "EmptyInput",
    "merit_G",
    "stationarity_residual",
    "fit_rate",
    "summarize_trial_set",
    "iterate_distances",
    "SPARSITY_CUTOFF",
]

# entries larger than this in absolute value count towards the sparsity level
SPARSITY_CUTOFF = 1e-6

# classification thresholds of the empirical rate fit
LINEAR_SLOPE_MAX = -1e-4
FIT_R2_MIN = 0.95
DISTANCE_FLOOR = 1e-14
TAIL_GUARD = 0.15


class TooFewPoints(ValueError):
    """Not enough positive tail points to fit a rate."""


class EmptyInput(ValueError):
    """An aggregate was requested over zero trials."""


def merit_G(problem: FractionalProblem, x: BlockVector, u: BlockVector,
            nu_bar: float) -> float:
    """Merit value ``-F(x) + nu_bar * ||x - u||^2`` with an infeasibility sentinel.

    Returns ``+inf`` when ``x`` leaves the feasible set. Along solver traces
    the paired values ``merit_G(x_{n+1}, x_n)`` are nonincreasing, with a
    decrease of at least ``(delta - 2 nu_bar) ||x_{n+2} - x_{n+1}||^2`` per
    step.
    """
    if not problem.is_feasible(x):
        return math.inf
    return -evaluate_F(problem, x) + nu_bar * x.distance(u) ** 2


def stationarity_residual(problem: FractionalProblem, x: BlockVector, tau: float,
                          w_convention: str = "step1") -> float:
    """Fixed-point residual of the inertia-free block update at ``x``.

    The maximum over blocks of ``||x_i - prox_i(x_i + w_i / (2 tau))||``
    with all other blocks frozen at ``x``; zero exactly at points the block
    sweep cannot improve.
    """
    w = compute_w(problem, x, convention=w_convention)
    frozen = [b.copy() for b in x.blocks]
    worst = 0.0
    for i in range(problem.m):
        center = x.blocks[i] + w.blocks[i] / (2.0 * tau)
        updated = problem.block_prox(i, frozen, center, tau)
        worst = max(worst, float(np.linalg.norm(updated - x.blocks[i])))
    return worst


@dataclass(frozen=True)
class RateFit:
    """Empirical convergence-rate classification of a distance sequence.

    ``slope`` is the fitted slope of ``log d_n`` versus n for the Linear
    class, and versus ``log n`` for the Sublinear class; NaN when no fit
    was selected.
    """

    classification: str  # "Finite" | "Linear" | "Sublinear" | "Inconclusive"
    slope: float
    r_squared: float
    tail_start: int


def _least_squares_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), min(max(r2, 0.0), 1.0)


def fit_rate(distances, tail_fraction: float = 0.5,
             tail_guard: float = TAIL_GUARD) -> RateFit:
    """Classify the decay of ``||x_n - x*||`` on the tail of a run.

    The trailing zero run (the reference point's own distance) is stripped
    first. Exact zeros inside the remaining tail mean the iterates reached
    the reference point in finitely many steps. Otherwise a geometric model
    (``log d`` linear in n, slope below -1e-4, R^2 >= 0.95) is compared with
    a power-law model (``log d`` linear in ``log n``) and the better
    qualifying model is reported; ``Inconclusive`` when neither qualifies.

    ``tail_guard`` drops that trailing fraction from the fitted window:
    when the reference point is the run's own final iterate, the last
    stretch of distances is dominated by the reference's residual error and
    bends the log curve downward.
    """
    d = np.asarray(distances, dtype=float).reshape(-1)
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    if not 0.0 <= tail_guard < 1.0:
        raise ValueError("tail_guard must lie in [0, 1)")
    last = d.size
    while last > 0 and d[last - 1] == 0.0:
        last -= 1
    main = d[:last]
    tail_start = int(math.floor(main.size * (1.0 - tail_fraction)))
    # a single trailing zero is the reference iterate's own distance; any
    # longer zero run means the sequence reached the reference and stayed
    if d.size - last >= 2 or np.any(main[tail_start:] == 0.0):
        return RateFit("Finite", math.nan, math.nan, tail_start)
    tail_end = main.size - int(math.floor(main.size * tail_guard))
    tail = main[tail_start:tail_end]
    idx = np.arange(tail_start, tail_end, dtype=float)
    mask = tail > DISTANCE_FLOOR
    if int(np.count_nonzero(mask)) < 10:
        raise TooFewPoints(f"only {int(np.count_nonzero(mask))} usable tail points")
    log_d = np.log(tail[mask])
    n_pts = idx[mask]
    lin_slope, lin_r2 = _least_squares_line(n_pts, log_d)
    pow_slope, pow_r2 = _least_squares_line(np.log(n_pts + 1.0), log_d)
    lin_ok = lin_slope < LINEAR_SLOPE_MAX and lin_r2 >= FIT_R2_MIN
    pow_ok = pow_slope < 0.0 and pow_r2 >= FIT_R2_MIN
    if lin_ok and (not pow_ok or lin_r2 >= pow_r2):
        return RateFit("Linear", lin_slope, lin_r2, tail_start)
    if pow_ok:
        return RateFit("Sublinear", pow_slope, pow_r2, tail_start)
    return RateFit("Inconclusive", lin_slope, lin_r2, tail_start)


def sparsity_level(x) -> int:
    """Number of entries with absolute value above the reporting cutoff."""
    flat = x.flatten() if isinstance(x, BlockVector) else np.asarray(x, dtype=float)
    return int(np.count_nonzero(np.abs(flat) > SPARSITY_CUTOFF))


def summarize_trial_set(results) -> dict:
    """Aggregate a list of solver results into one benchmark table row.

    Sparsity and iteration means are rounded to the nearest integer;
    objective and cpu seconds stay floating point.
    """
    results = list(results)
    if not results:
        raise EmptyInput("no trials to summarize")
    sparsities = [sparsity_level(res.x_final) for res in results]
    objectives = [res.trace[-1].F for res in results]
    cpu = [res.trace[-1].elapsed for res in results]
    iters = [res.trace[-1].n for res in results]
    return {
        "trials": len(results),
        "sparsity": int(round(float(np.mean(sparsities)))),
        "objective": float(np.mean(objectives)),
        "cpu_seconds": float(np.mean(cpu)),
        "iterations": int(round(float(np.mean(iters)))),
    }


def iterate_distances(result, reference=None) -> np.ndarray:
    """Distances of stored iterates to a reference point (default: the final
    iterate). Requires the run to have kept its iterates."""
    if result.iterates is None:
        raise ValueError("run did not keep iterates; solve with keep_iterates=True")
    ref = np.asarray(reference, dtype=float).reshape(-1) if reference is not None \
        else result.iterates[-1]
    return np.array([float(np.linalg.norm(it - ref)) for it in result.iterates])
