import math

import numpy as np
import pytest

from sumratios import (
    BlockVector,
    SolverConfig,
    build_ep,
    build_geps,
    fit_rate,
    iterate_distances,
    merit_G,
    solve,
    stationarity_residual,
    summarize_trial_set,
)
from sumratios.diagnostics import EmptyInput, TooFewPoints, sparsity_level
from sumratios.solver import IterateRecord, step_tau
from sumratios.core import compute_y

from conftest import brute_sparse_gep_opt, sfda_solver_config


# ---------------------------------------------------------------------------
# merit function


def test_merit_zero_penalty_at_same_point():
    prob = build_ep(2, 10.0)
    x = BlockVector([[1.0], [1.0]])
    assert merit_G(prob, x, x, 0.4) == pytest.approx(-6.0, abs=1e-12)


def test_merit_infeasible_sentinel():
    prob = build_ep(1, 10.0)
    assert merit_G(prob, BlockVector([[12.0]]), BlockVector([[1.0]]), 0.4) == math.inf


def test_merit_nonincreasing_along_trace(rng):
    prob = build_geps(np.diag([3.0, 2.0, 1.0, 0.5, 0.1]), np.eye(5), r=2)
    cfg = sfda_solver_config(step_tol=1e-10)
    x0 = BlockVector([prob.sets[0].sample(rng)])
    res = solve(prob, x0, cfg, keep_iterates=True)
    nb = cfg.nu_bar_effective
    its = [BlockVector([f]) for f in res.iterates]
    merits = [merit_G(prob, its[k + 1], its[k], nb) for k in range(len(its) - 1)]
    drop = cfg.delta - 2 * nb
    for k in range(len(merits) - 2):
        step_next = res.trace[k + 2].step_norm
        slack = 1e-10 * max(1.0, abs(merits[k]))
        assert merits[k + 1] + drop * step_next**2 <= merits[k] + slack


# ---------------------------------------------------------------------------
# stationarity residual


def test_residual_near_zero_at_ep_solution():
    prob = build_ep(2, 10.0)
    x = BlockVector([[1.0], [1.0]])
    tau = step_tau(prob, compute_y(prob, x), SolverConfig(delta=1.0))
    assert stationarity_residual(prob, x, tau) <= 1e-8


def test_residual_near_zero_at_brute_force_geps_optimum(rng):
    W = rng.standard_normal((10, 10))
    V_w = W @ W.T / 10 + 0.5 * np.eye(10)
    U = rng.standard_normal((10, 2))
    V_b = U @ U.T / 2
    _, x_star = brute_sparse_gep_opt(V_b, V_w, r=2)
    prob = build_geps(V_b, V_w, r=2)
    x = BlockVector([x_star])
    tau = step_tau(prob, compute_y(prob, x), SolverConfig(delta=1.0))
    assert stationarity_residual(prob, x, tau) <= 1e-8


def test_residual_positive_off_stationary(rng):
    prob = build_ep(2, 10.0)
    x = BlockVector([[7.0], [3.0]])
    tau = step_tau(prob, compute_y(prob, x), SolverConfig(delta=1.0))
    assert stationarity_residual(prob, x, tau) > 1e-3


# ---------------------------------------------------------------------------
# rate classification


def test_fit_rate_geometric_is_linear():
    d = 3.0 * 0.9 ** np.arange(300)
    fit = fit_rate(d)
    assert fit.classification == "Linear"
    assert fit.slope == pytest.approx(math.log(0.9), abs=1e-9)
    assert fit.r_squared >= 0.999


def test_fit_rate_harmonic_is_sublinear():
    d = 1.0 / np.arange(1, 301)
    fit = fit_rate(d)
    assert fit.classification == "Sublinear"
    assert fit.slope == pytest.approx(-1.0, abs=1e-6)


def test_fit_rate_finite_detection():
    d = np.concatenate([0.5 ** np.arange(30), np.zeros(40)])
    assert fit_rate(d).classification == "Finite"
    # a single trailing zero is just the reference point's own distance
    d = np.concatenate([0.9 ** np.arange(100), [0.0]])
    assert fit_rate(d).classification == "Linear"


def test_fit_rate_too_few_points():
    with pytest.raises(TooFewPoints):
        fit_rate([1.0, 0.5, 0.25, 0.0])


def test_fit_rate_scaling_invariance():
    d = 2.0 * 0.95 ** np.arange(200)
    base = fit_rate(d)
    scaled = fit_rate(1e6 * d)
    assert base.classification == scaled.classification == "Linear"
    assert base.slope == pytest.approx(scaled.slope, rel=1e-12)
    assert base.r_squared == pytest.approx(scaled.r_squared, abs=1e-12)


def test_fit_rate_inconclusive_on_noise(rng):
    d = np.exp(rng.standard_normal(200) * 0.5)
    assert fit_rate(d).classification == "Inconclusive"


def test_iterate_distances_requires_kept_iterates():
    prob = build_ep(1, 10.0)
    res = solve(prob, BlockVector([[5.0]]), SolverConfig(max_iter=5, step_tol=0.0))
    with pytest.raises(ValueError):
        iterate_distances(res)


# ---------------------------------------------------------------------------
# trial aggregation


def _fake_result(x, F, cpu, n):
    rec = IterateRecord(n, F, 0.0, F, math.nan, math.nan, cpu)
    class R:
        pass
    r = R()
    r.x_final = BlockVector([x])
    r.trace = [rec]
    return r


def test_summarize_single_trial_is_identity():
    res = _fake_result([0.5, 0.0, -2e-7], F=1.25, cpu=0.75, n=12)
    row = summarize_trial_set([res])
    assert row == {"trials": 1, "sparsity": 1, "objective": 1.25,
                   "cpu_seconds": 0.75, "iterations": 12}


def test_summarize_zero_vector_sparsity():
    res = _fake_result([0.0, 0.0], F=0.0, cpu=0.0, n=0)
    assert summarize_trial_set([res])["sparsity"] == 0


def test_summarize_rounds_means():
    rows = [_fake_result([1.0, 1.0], 2.0, 0.5, 10),
            _fake_result([1.0, 0.0], 3.0, 1.5, 11)]
    agg = summarize_trial_set(rows)
    assert agg["sparsity"] == 2  # mean 1.5 rounds to nearest even
    assert agg["iterations"] == 10  # mean 10.5 rounds to nearest even
    assert agg["objective"] == pytest.approx(2.5)


def test_summarize_empty_raises():
    with pytest.raises(EmptyInput):
        summarize_trial_set([])


def test_sparsity_cutoff_is_strict():
    assert sparsity_level(np.array([1e-6, 2e-6, 0.0])) == 1
