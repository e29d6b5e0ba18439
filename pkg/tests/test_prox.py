import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sumratios.prox import (
    BRUTE_FORCE_DIM_CAP,
    DimensionTooLarge,
    brute_force_prox,
    project_box,
    project_sparsity,
    project_sphere,
    project_sphere_sparsity,
    prox_l0_sphere,
)


def l0_objective(a, x, mu):
    return float(a @ x) - mu * np.count_nonzero(x)


# ---------------------------------------------------------------------------
# boxes


def test_box_clamps_mixed():
    out = project_box([-1.0, 5.0, 12.0], 0.0, 10.0)
    np.testing.assert_array_equal(out, [0.0, 5.0, 10.0])


def test_box_identity_inside():
    a = np.array([0.5, 9.9, 3.0])
    np.testing.assert_array_equal(project_box(a, 0.0, 10.0), a)


def test_box_upper_clamp_all():
    out = project_box(np.full(4, 11.0), 0.0, 10.0)
    np.testing.assert_array_equal(out, np.full(4, 10.0))


def test_box_vector_bounds_and_empty():
    out = project_box([0.0, 5.0], [1.0, -1.0], [2.0, 1.0])
    np.testing.assert_array_equal(out, [1.0, 1.0])
    with pytest.raises(ValueError):
        project_box([0.0], [1.0], [0.0])


# ---------------------------------------------------------------------------
# sphere


def test_sphere_normalizes():
    res = project_sphere([3.0, 4.0])
    np.testing.assert_allclose(res.point, [0.6, 0.8])
    assert not res.tie_broken


def test_sphere_identity_on_sphere():
    a = np.array([0.6, 0.8])
    np.testing.assert_array_equal(project_sphere(a).point, a)


def test_sphere_zero_input_documented_selection():
    res = project_sphere(np.zeros(3))
    np.testing.assert_array_equal(res.point, [1.0, 0.0, 0.0])
    assert res.tie_broken


def test_sphere_scaling_covariance(rng):
    for _ in range(50):
        a = rng.standard_normal(6)
        c = float(rng.uniform(0.1, 100.0))
        np.testing.assert_allclose(project_sphere(c * a).point,
                                   project_sphere(a).point, atol=1e-12)


# ---------------------------------------------------------------------------
# sparsity


def test_sparsity_keeps_largest_magnitudes():
    res = project_sparsity([3.0, -4.0, 1.0], 2)
    np.testing.assert_array_equal(res.point, [3.0, -4.0, 0.0])
    assert not res.tie_broken


def test_sparsity_identity_when_already_sparse():
    a = np.array([0.0, 2.0, 0.0, -1.0])
    res = project_sparsity(a, 3)
    np.testing.assert_array_equal(res.point, a)


def test_sparsity_lowest_index_tie():
    res = project_sparsity([1.0, 1.0], 1)
    np.testing.assert_array_equal(res.point, [1.0, 0.0])
    assert res.tie_broken


def test_sphere_sparsity_known_point():
    res = project_sphere_sparsity([3.0, -4.0, 1.0], 2)
    np.testing.assert_allclose(res.point, [0.6, -0.8, 0.0])


def test_sphere_sparsity_identity_on_set():
    a = np.array([0.6, 0.0, -0.8])
    np.testing.assert_allclose(project_sphere_sparsity(a, 2).point, a, atol=1e-15)


def test_sphere_sparsity_zero_input():
    res = project_sphere_sparsity(np.zeros(4), 1)
    np.testing.assert_array_equal(res.point, [1.0, 0.0, 0.0, 0.0])
    assert res.tie_broken


# ---------------------------------------------------------------------------
# cardinality-penalized sphere prox


def test_l0_sphere_mu_zero_is_normalization():
    a = np.array([3.0, 4.0, 0.1])
    np.testing.assert_allclose(prox_l0_sphere(a, 0.0).point, a / np.linalg.norm(a))


def test_l0_sphere_drops_small_entry():
    # support scores: k=1 -> 3.1, k=2 -> 3.2, k=3 -> ~2.301
    res = prox_l0_sphere([3.0, 4.0, 0.1], 0.9)
    np.testing.assert_allclose(res.point, [0.6, 0.8, 0.0])


def test_l0_sphere_smallest_support_tie():
    # k=1 and k=2 both score 3.0; the smaller support wins
    res = prox_l0_sphere([3.0, 4.0, 0.1], 1.0)
    np.testing.assert_allclose(res.point, [0.0, 1.0, 0.0])
    assert res.tie_broken


def test_l0_sphere_zero_input():
    res = prox_l0_sphere(np.zeros(3), 0.5)
    np.testing.assert_array_equal(res.point, [1.0, 0.0, 0.0])
    assert res.tie_broken


def test_l0_sphere_support_monotone_in_mu(rng):
    for _ in range(100):
        a = rng.standard_normal(10)
        mus = np.sort(rng.uniform(0.0, 2.0, size=5))
        sizes = [np.count_nonzero(prox_l0_sphere(a, mu).point) for mu in mus]
        assert all(s1 >= s2 for s1, s2 in zip(sizes, sizes[1:]))


# ---------------------------------------------------------------------------
# sampled projection optimality: no random feasible point is closer


def test_projection_optimality_sampled(rng):
    d, r, n_samples = 8, 3, 10_000
    for _ in range(5):
        a = 3.0 * rng.standard_normal(d)

        samples = rng.uniform(-4.0, 4.0, size=(n_samples, d))
        box_out = project_box(a, -1.0, 1.0)
        feas = np.clip(samples, -1.0, 1.0)
        assert np.linalg.norm(box_out - a) <= np.linalg.norm(feas - a, axis=1).min() + 1e-12

        sphere_out = project_sphere(a).point
        feas = samples / np.linalg.norm(samples, axis=1, keepdims=True)
        assert np.linalg.norm(sphere_out - a) <= np.linalg.norm(feas - a, axis=1).min() + 1e-12

        sp_out = project_sparsity(a, r).point
        feas = samples.copy()
        order = np.argsort(-np.abs(feas), axis=1)
        for row, idx in zip(feas, order):
            row[idx[r:]] = 0.0
        assert np.linalg.norm(sp_out - a) <= np.linalg.norm(feas - a, axis=1).min() + 1e-12

        ss_out = project_sphere_sparsity(a, r).point
        feas = feas / np.maximum(np.linalg.norm(feas, axis=1, keepdims=True), 1e-30)
        assert np.linalg.norm(ss_out - a) <= np.linalg.norm(feas - a, axis=1).min() + 1e-12


# ---------------------------------------------------------------------------
# brute-force agreement (small sweep; the full acceptance sweep is separate)


def test_brute_force_agreement_small(rng):
    for d in (6, 10):
        for _ in range(100):
            a = rng.standard_normal(d)
            r = int(rng.integers(1, d + 1))
            mu = float(rng.uniform(0.0, 2.0))

            res = project_sparsity(a, r)
            ref = brute_force_prox("sparsity", a, r=r)
            assert abs(np.linalg.norm(res.point - a) - np.linalg.norm(ref - a)) <= 1e-12
            if not res.tie_broken:
                np.testing.assert_allclose(res.point, ref, atol=1e-12)

            res = project_sphere_sparsity(a, r)
            ref = brute_force_prox("sphere_sparsity", a, r=r)
            assert abs(np.linalg.norm(res.point - a) - np.linalg.norm(ref - a)) <= 1e-12
            if not res.tie_broken:
                np.testing.assert_allclose(res.point, ref, atol=1e-12)

            res = prox_l0_sphere(a, mu)
            ref = brute_force_prox("l0_sphere", a, mu=mu)
            assert abs(l0_objective(a, res.point, mu) - l0_objective(a, ref, mu)) <= 1e-12
            if not res.tie_broken:
                np.testing.assert_allclose(res.point, ref, atol=1e-12)


def test_brute_force_dimension_cap():
    with pytest.raises(DimensionTooLarge):
        brute_force_prox("sparsity", np.ones(BRUTE_FORCE_DIM_CAP + 1), r=2)


# ---------------------------------------------------------------------------
# hypothesis invariants


finite_vectors = arrays(
    np.float64,
    st.integers(min_value=1, max_value=12),
    elements=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, width=64),
)


@settings(max_examples=150, deadline=None)
@given(a=finite_vectors, data=st.data())
def test_sphere_sparsity_feasibility_invariant(a, data):
    r = data.draw(st.integers(min_value=1, max_value=a.size))
    out = project_sphere_sparsity(a, r).point
    assert abs(np.linalg.norm(out) - 1.0) <= 1e-12
    assert np.count_nonzero(out) <= r


@settings(max_examples=150, deadline=None)
@given(a=finite_vectors, mu=st.floats(min_value=0.0, max_value=3.0, allow_nan=False))
def test_l0_sphere_feasibility_invariant(a, mu):
    out = prox_l0_sphere(a, mu).point
    assert abs(np.linalg.norm(out) - 1.0) <= 1e-12
    assert np.count_nonzero(out) >= 1
