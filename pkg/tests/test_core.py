import math

import numpy as np
import pytest

from sumratios import (
    BlockVector,
    Box,
    Coupling,
    CustomSet,
    FractionalProblem,
    NonpositiveDenominator,
    RatioTerm,
    Sphere,
    build_ep,
    build_geps,
    build_random_fqp,
    compute_w,
    compute_y,
    evaluate_F,
    evaluate_H,
    problem_to_json,
    validate_assumptions,
)
from sumratios.core import DimensionMismatch, set_from_json


def scalar_ratio_problem(f, fs, g, gs, lo=-5.0, hi=5.0, alpha=0.0, beta=0.0):
    term = RatioTerm(
        f_value=lambda x: f(float(x[0])),
        f_subgrad=lambda x: np.array([fs(float(x[0]))]),
        g_value=lambda x: g(float(x[0])),
        g_subgrad=lambda x: np.array([gs(float(x[0]))]),
        alpha=alpha,
        beta=beta,
    )
    return FractionalProblem([term], [Box([lo], [hi])], Coupling.zero())


# ---------------------------------------------------------------------------
# BlockVector


def test_blockvector_flatten_roundtrip(rng):
    for _ in range(50):
        dims = rng.integers(1, 6, size=rng.integers(1, 4))
        blocks = [rng.standard_normal(d) for d in dims]
        bv = BlockVector(blocks)
        back = BlockVector.from_flat(bv.flatten(), bv.dims)
        for a, b in zip(bv.blocks, back.blocks):
            np.testing.assert_array_equal(a, b)


def test_blockvector_rejects_nonfinite():
    with pytest.raises(ValueError):
        BlockVector([[1.0, np.nan]])
    with pytest.raises(ValueError):
        BlockVector([[np.inf]])


def test_blockvector_distance_and_dims():
    a = BlockVector([[0.0, 0.0], [1.0]])
    b = BlockVector([[3.0, 4.0], [1.0]])
    assert a.distance(b) == pytest.approx(5.0)
    assert a.dims == (2, 1)
    assert a.dim == 3
    with pytest.raises(DimensionMismatch):
        a.distance(BlockVector([[1.0], [1.0]]))


# ---------------------------------------------------------------------------
# objective evaluation


def test_evaluate_F_ep_at_solution():
    prob = build_ep(2, 10.0)
    assert evaluate_F(prob, BlockVector([[1.0], [1.0]])) == pytest.approx(6.0, abs=1e-12)


def test_evaluate_F_zero_numerators():
    prob = scalar_ratio_problem(lambda t: 0.0, lambda t: 0.0,
                                lambda t: t * t + 1.0, lambda t: 2 * t)
    assert evaluate_F(prob, BlockVector([[2.0]])) == 0.0


def test_evaluate_F_rayleigh_quotient_by_hand():
    prob = build_geps(np.diag([2.0, 0.0]), np.eye(2), r=2)
    assert evaluate_F(prob, BlockVector([[1.0, 0.0]])) == pytest.approx(2.0, abs=1e-14)


def test_evaluate_F_nonpositive_denominator():
    prob = scalar_ratio_problem(lambda t: 1.0, lambda t: 0.0,
                                lambda t: t, lambda t: 1.0)
    with pytest.raises(NonpositiveDenominator):
        evaluate_F(prob, BlockVector([[-1.0]]))


def test_evaluate_F_dimension_mismatch():
    prob = build_ep(2, 10.0)
    with pytest.raises(DimensionMismatch):
        evaluate_F(prob, BlockVector([[1.0]]))


# ---------------------------------------------------------------------------
# multipliers y


def test_compute_y_zero_numerator():
    prob = scalar_ratio_problem(lambda t: 0.0, lambda t: 0.0,
                                lambda t: 1.0, lambda t: 0.0)
    assert compute_y(prob, BlockVector([[0.5]]))[0] == 0.0


def test_compute_y_ep_scalar():
    prob = build_ep(1, 10.0)
    y = compute_y(prob, BlockVector([[1.0]]))
    assert y[0] == pytest.approx(math.sqrt(20.0) / 8.0, rel=1e-15)


def test_compute_y_constant_ratio_on_sphere(rng):
    prob = build_geps(np.eye(3), np.eye(3), r=3)
    for _ in range(10):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        y = compute_y(prob, BlockVector([v]))
        assert y[0] == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# ascent direction w


def test_compute_w_zero_numerator_branch():
    prob = scalar_ratio_problem(lambda t: 0.0, lambda t: 3.0,
                                lambda t: 1.0, lambda t: 0.0)
    w = compute_w(prob, BlockVector([[0.5]]))
    np.testing.assert_array_equal(w.blocks[0], [0.0])


def test_compute_w_constant_ratio_is_zero():
    # f = g = x^T x at e_1: y = 1 and the two terms cancel
    term = RatioTerm(
        f_value=lambda x: float(x @ x),
        f_subgrad=lambda x: 2.0 * x,
        g_value=lambda x: float(x @ x),
        g_subgrad=lambda x: 2.0 * x,
    )
    prob = FractionalProblem([term], [Sphere(2)], Coupling.zero())
    w = compute_w(prob, BlockVector([[1.0, 0.0]]))
    np.testing.assert_allclose(w.blocks[0], [0.0, 0.0], atol=1e-15)


def test_compute_w_scalar_calculus():
    # f = x^2, g = x^2 + 1 at x = 1: d/dx (f/g) = 2/2 - (1/4)*2 = 0.5
    prob = scalar_ratio_problem(lambda t: t * t, lambda t: 2 * t,
                                lambda t: t * t + 1.0, lambda t: 2 * t)
    w = compute_w(prob, BlockVector([[1.0]]))
    assert w.blocks[0][0] == pytest.approx(0.5, rel=1e-14)


def test_compute_w_section6_convention_halves():
    prob = build_geps(np.diag([3.0, 1.0]), np.eye(2), r=2)
    x = BlockVector([[0.6, 0.8]])
    w1 = compute_w(prob, x, convention="step1")
    w2 = compute_w(prob, x, convention="section6")
    np.testing.assert_allclose(w2.blocks[0], 0.5 * w1.blocks[0], rtol=1e-15)
    with pytest.raises(ValueError):
        compute_w(prob, x, convention="nope")


def test_compute_w_matches_finite_differences(rng):
    prob = build_random_fqp((4, 3), seed=5)
    for _ in range(10):
        x = BlockVector([s.sample(rng) for s in prob.sets])
        w = compute_w(prob, x)
        h = 1e-6
        for i, x_i in enumerate(x.blocks):
            term = prob.terms[i]
            ratio = lambda v: term.f_value(v) / term.g_value(v)
            for j in range(x_i.size):
                e = np.zeros(x_i.size)
                e[j] = h
                fd = (ratio(x_i + e) - ratio(x_i - e)) / (2 * h)
                assert w.blocks[i][j] == pytest.approx(fd, abs=1e-5)


# ---------------------------------------------------------------------------
# lifted surrogate H


def test_evaluate_H_zero_y():
    prob = build_ep(2, 10.0)
    assert evaluate_H(prob, BlockVector([[1.0], [2.0]]), [0.0, 0.0]) == 0.0


def test_evaluate_H_scalar_value():
    prob = scalar_ratio_problem(lambda t: 4.0, lambda t: 0.0,
                                lambda t: 2.0, lambda t: 0.0)
    val = evaluate_H(prob, BlockVector([[0.0]]), [0.5])
    assert val == pytest.approx(2 * 0.5 * 2.0 - 0.25 * 2.0, abs=1e-15)


def test_h_plus_H_reproduces_F(rng):
    problems = [build_ep(3, 10.0), build_random_fqp((4, 3), seed=2),
                build_geps(np.diag([1.0, 2.0, 3.0]), np.eye(3), r=2)]
    for prob in problems:
        for _ in range(50):
            x = BlockVector([s.sample(rng) for s in prob.sets])
            f_val = evaluate_F(prob, x)
            lifted = float(prob.coupling.h_value(x)) + evaluate_H(prob, x, compute_y(prob, x))
            assert abs(lifted - f_val) <= 1e-12 * max(1.0, abs(f_val))


# ---------------------------------------------------------------------------
# sampled validation of the curvature constants


def test_validate_assumptions_clean_for_quadratics():
    prob = build_geps(np.diag([2.0, 1.0, 0.5]), np.diag([1.0, 2.0, 3.0]), r=2)
    report = validate_assumptions(prob, n_pairs=300, seed=7)
    assert report.ok
    assert report.violations == []
    assert "sampled" in report.note


def test_validate_assumptions_flags_missing_curvature():
    # sqrt of gamma*(x+1) is strictly concave on the box, so alpha = 0 must
    # be falsified by sampling
    base = build_ep(1, 10.0)
    t = base.terms[0]
    stripped = RatioTerm(t.f_value, t.f_subgrad, t.g_value, t.g_subgrad,
                         alpha=0.0, beta=t.beta)
    prob = FractionalProblem([stripped], base.sets, base.coupling)
    report = validate_assumptions(prob, n_pairs=300, seed=7)
    assert not report.ok
    assert any(v.inequality == "sqrt-numerator" for v in report.violations)


def test_validate_assumptions_denominator_beta():
    # g = x^T B x has curvature bound beta = 2 lam_max(B); beta = 0 fails
    prob_ok = build_geps(np.eye(2), np.diag([1.0, 4.0]), r=2)
    assert validate_assumptions(prob_ok, n_pairs=200, seed=3).ok
    t = prob_ok.terms[0]
    bad = RatioTerm(t.f_value, t.f_subgrad, t.g_value, t.g_subgrad, alpha=0.0, beta=0.0)
    prob_bad = FractionalProblem([bad], prob_ok.sets, prob_ok.coupling)
    report = validate_assumptions(prob_bad, n_pairs=200, seed=3)
    assert any(v.inequality == "denominator" for v in report.violations)


# ---------------------------------------------------------------------------
# serialization


def test_problem_to_json_structure():
    prob = build_ep(2, 10.0)
    doc = problem_to_json(prob)
    assert doc["m"] == 2
    assert doc["blocks"][0]["set"]["kind"] == "box"
    assert doc["blocks"][0]["alpha"] == 0.25
    assert doc["coupling"]["kind"] == "ep"
    assert doc["bounds"][0] == [110.0, 5.0]


def test_set_json_roundtrip(rng):
    sets = [Box([0.0], [10.0]),
            set_from_json({"kind": "sphere", "dim": 4}),
            set_from_json({"kind": "sparsity", "dim": 5, "r": 2}),
            set_from_json({"kind": "sphere_sparsity", "dim": 5, "r": 2})]
    for s in sets:
        rebuilt = set_from_json(s.to_json())
        for _ in range(5):
            p = s.sample(rng)
            assert rebuilt.contains(p)
            np.testing.assert_allclose(rebuilt.project(p + 0.01).point,
                                       s.project(p + 0.01).point, atol=1e-15)


def test_custom_set_projection_membership():
    half = CustomSet(2, projector=lambda a: np.maximum(a, 0.0))
    assert half.contains([1.0, 0.0])
    assert not half.contains([-1.0, 0.0])
    np.testing.assert_array_equal(half.project([-1.0, 2.0]).point, [0.0, 2.0])
