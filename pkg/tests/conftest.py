"""Shared builders and independent oracles for the test suite."""

import itertools

import numpy as np
import pytest
import scipy.linalg

from sumratios import (
    BlockVector,
    SolverConfig,
    build_gep,
    build_geps,
    build_random_fqp,
)
from sumratios.instances import generate_sfda, sparse_uniform_x0


def sfda_solver_config(**overrides) -> SolverConfig:
    """Canonical configuration of the quadratic-ratio experiments."""
    kwargs = dict(delta=1.0, nu_bar=0.4999, nu_rule="cap", tau_rule="sfda",
                  max_iter=6000, step_tol=1e-6)
    kwargs.update(overrides)
    return SolverConfig(**kwargs)


def desk_geps(seed: int, d: int = 200, r: int = 10, p: int = 100):
    data = generate_sfda(d, p, p, seed)
    return build_geps(data.V_b, data.V_w, r), sparse_uniform_x0(d, r), data


def desk_gep(seed: int, lam: float, d: int = 200, r: int = 10, p: int = 100):
    data = generate_sfda(d, p, p, seed)
    return build_gep(data.V_b, data.V_w, lam), sparse_uniform_x0(d, r), data


def grid_max_scalar(fn, lo: float, hi: float, step: float = 1e-4) -> float:
    """Independent oracle: argmax of a scalar function on a uniform grid."""
    grid = np.arange(lo, hi + step / 2, step)
    vals = np.array([fn(t) for t in grid])
    return float(grid[int(np.argmax(vals))])


def brute_sparse_gep_opt(V_b, V_w, r: int):
    """Independent oracle: global max of the sparse generalized Rayleigh
    quotient by enumerating supports and taking the top generalized
    eigenpair on each."""
    d = V_b.shape[0]
    best_val, best_x = -np.inf, None
    for size in range(1, r + 1):
        for support in itertools.combinations(range(d), size):
            idx = list(support)
            evals, vecs = scipy.linalg.eigh(V_b[np.ix_(idx, idx)], V_w[np.ix_(idx, idx)])
            if evals[-1] > best_val:
                best_val = float(evals[-1])
                x = np.zeros(d)
                v = vecs[:, -1]
                x[idx] = v / np.linalg.norm(v)
                best_x = x
    return best_val, best_x


def random_unit(rng, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
