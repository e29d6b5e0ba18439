"""Builders for the structured test problems and the synthetic SFDA data.

Four instance families are provided:

- ``ep``: m scalar blocks on the box [0, 10] coupled by
  ``(m + 1 - sum x_i) * prod x_i`` plus penalized ratios
  ``gamma (x_i + 1) / (x_i^2 + 2 x_i + 5)``; the global maximizer is the
  all-ones vector with value ``1 + m gamma / 4``.
- ``fqp``: sum of a quadratic coupling and per-block Rayleigh quotients over
  unit spheres.
- ``gep``: single-block generalized Rayleigh quotient on the unit sphere
  with cardinality penalty ``-lam * nnz(x)``.
- ``geps``: the same quotient constrained to the sparse unit sphere.

Each builder wires the exact closed-form block prox where one exists. The
SFDA generator samples two Gaussian classes with a block-Toeplitz
covariance and returns the within-/between-class covariance matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import (
    BlockVector,
    Box,
    Coupling,
    FractionalProblem,
    RatioTerm,
    Sphere,
    SphereSparsity,
    set_from_json,
)
from .prox import project_box, project_sphere, prox_l0_sphere

__all__ = [
    "InstanceSpec",
    "SfdaData",
    "NotPositiveDefinite",
    "NotPSD",
    "InvalidShape",
    "build_ep",
    "build_gep",
    "build_geps",
    "build_fqp",
    "build_random_fqp",
    "generate_sfda",
    "sparse_uniform_x0",
    "lam_for_dim",
    "PRESETS",
    "problem_from_json",
    "max_quadratic_over_sphere",
]


class NotPositiveDefinite(ValueError):
    """A matrix required to be positive definite is not."""


class NotPSD(ValueError):
    """A matrix required to be positive semidefinite is not."""


class InvalidShape(ValueError):
    """Data generation parameters are inconsistent."""


@dataclass(frozen=True)
class SfdaPreset:
    d: int
    r: int
    p1: int
    p2: int
    lam: float


def lam_for_dim(d: int) -> float:
    # cardinality penalty scaled so that lam * d stays constant across sizes;
    # a heuristic extrapolation of the reference value 0.035 at d = 2000
    return 70.0 / d


PRESETS = {
    "desk": SfdaPreset(d=200, r=10, p1=100, p2=100, lam=lam_for_dim(200)),
    "paper-scale": SfdaPreset(d=2000, r=50, p1=500, p2=500, lam=lam_for_dim(2000)),
}


def _symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def _check_spd(mat: np.ndarray, name: str) -> tuple[float, float]:
    """Eigenvalue range of a symmetric matrix meant to be positive definite.

    Accepts positive semidefinite matrices whose smallest eigenvalue is zero
    within roundoff (empirical covariances of fewer samples than dimensions
    are structurally rank-deficient); genuinely indefinite input raises.
    """
    evals = np.linalg.eigvalsh(mat)
    lam_min, lam_max = float(evals[0]), float(evals[-1])
    if lam_max <= 0 or lam_min < -1e-8 * max(1.0, lam_max):
        raise NotPositiveDefinite(f"{name}: eigenvalues in [{lam_min}, {lam_max}]")
    return lam_min, lam_max


def _check_psd(mat: np.ndarray, name: str) -> float:
    evals = np.linalg.eigvalsh(mat)
    lam_min, lam_max = float(evals[0]), float(evals[-1])
    if lam_min < -1e-8 * max(1.0, abs(lam_max)):
        raise NotPSD(f"{name}: smallest eigenvalue {lam_min}")
    return lam_max


def _quadratic_term(A: np.ndarray, B: np.ndarray, alpha: float, beta: float) -> RatioTerm:
    return RatioTerm(
        f_value=lambda x, A=A: float(x @ A @ x),
        f_subgrad=lambda x, A=A: 2.0 * (A @ x),
        g_value=lambda x, B=B: float(x @ B @ x),
        g_subgrad=lambda x, B=B: 2.0 * (B @ x),
        alpha=alpha,
        beta=beta,
    )


# ---------------------------------------------------------------------------
# analytic box-constrained example


def build_ep(m: int, gamma: float) -> FractionalProblem:
    """Coupled scalar-block instance with known global maximizer (1, ..., 1).

    Ratio terms ``gamma (x + 1) / (x^2 + 2x + 5)`` with curvature constants
    alpha = 1/4 and beta = 2, coupling ``(m + 1 - sum x_j) prod x_j`` on the
    box [0, 10]^m. The block subproblem is a concave scalar quadratic and is
    solved exactly by clamping its vertex.
    """
    if m < 1:
        raise ValueError(f"block count m={m} must be >= 1")
    if not gamma > 0:
        raise ValueError(f"gamma={gamma} must be positive")

    def f_value(x, g=gamma):
        return g * (float(x[0]) + 1.0)

    def f_subgrad(x, g=gamma):
        return np.array([g])

    def g_value(x):
        t = float(x[0])
        return t * t + 2.0 * t + 5.0

    def g_subgrad(x):
        return np.array([2.0 * float(x[0]) + 2.0])

    terms = [RatioTerm(f_value, f_subgrad, g_value, g_subgrad, alpha=0.25, beta=2.0)
             for _ in range(m)]
    sets = [Box(np.zeros(1), np.full(1, 10.0)) for _ in range(m)]

    def h_value(x: BlockVector, m=m) -> float:
        vals = np.array([float(b[0]) for b in x.blocks])
        return (m + 1.0 - vals.sum()) * float(np.prod(vals))

    def block_prox(i, blocks, center, tau, m=m):
        others = [float(blocks[j][0]) for j in range(m) if j != i]
        s = sum(others)
        p = float(np.prod(others)) if others else 1.0
        c = float(np.asarray(center).reshape(-1)[0])
        denom = 2.0 * tau + 2.0 * p
        if denom > 0.0:
            vertex = (2.0 * tau * c + (m + 1.0 - s) * p) / denom
            return project_box(np.array([vertex]), 0.0, 10.0)
        # defensive: cannot happen for tau > 0 and p >= 0 on the box, but a
        # nonconcave quadratic would be maximized at an endpoint
        candidates = np.array([0.0, 10.0])
        obj = candidates * (m + 1.0 - candidates - s) * p - tau * (candidates - c) ** 2
        return np.array([candidates[int(np.argmax(obj))]])

    coupling = Coupling(h_value, block_prox, descriptor={"kind": "ep"})
    bounds = [(gamma * 11.0, 5.0)] * m
    meta = {"kind": "ep", "m": m, "gamma": gamma, "solution": [1.0] * m,
            "optimal_value": 1.0 + m * gamma / 4.0}
    return FractionalProblem(terms, sets, coupling, bounds=bounds, meta=meta)


# ---------------------------------------------------------------------------
# generalized Rayleigh quotients with sparsity


def build_gep(A, B, lam: float) -> FractionalProblem:
    """Cardinality-penalized generalized Rayleigh quotient on the unit sphere.

    Objective ``x^T A x / x^T B x - lam * nnz(x)`` with A positive
    semidefinite and B positive definite (rank-deficient empirical
    covariances are accepted up to roundoff). The block prox is the
    closed-form cardinality-penalized sphere maximizer.
    """
    A = _symmetrize(A)
    B = _symmetrize(B)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidShape(f"A {A.shape} and B {B.shape} must be square and equal")
    if not lam > 0:
        raise ValueError(f"lam={lam} must be positive")
    _check_psd(A, "A")
    lam_min_b, lam_max_b = _check_spd(B, "B")
    d = A.shape[0]
    term = _quadratic_term(A, B, alpha=0.0, beta=2.0 * lam_max_b)

    def h_value(x: BlockVector, lam=lam) -> float:
        return -lam * float(np.count_nonzero(x.blocks[0]))

    def block_prox(i, blocks, center, tau, lam=lam):
        return prox_l0_sphere(2.0 * tau * np.asarray(center, dtype=float), lam).point

    coupling = Coupling(h_value, block_prox, descriptor={"kind": "cardinality", "lam": lam})
    bounds = None
    if lam_min_b > 0:
        bounds = [(_check_psd(A, "A"), lam_min_b)]
    meta = {"kind": "gep", "A": A.tolist(), "B": B.tolist(), "lam": lam}
    return FractionalProblem([term], [Sphere(d)], coupling, bounds=bounds, meta=meta)


def build_geps(A, B, r: int) -> FractionalProblem:
    """Generalized Rayleigh quotient on the sparse unit sphere.

    Objective ``x^T A x / x^T B x`` over ``{||x|| = 1, nnz(x) <= r}``; the
    block prox reduces to the exact projection onto that set.
    """
    A = _symmetrize(A)
    B = _symmetrize(B)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidShape(f"A {A.shape} and B {B.shape} must be square and equal")
    d = A.shape[0]
    if not 1 <= r <= d:
        raise ValueError(f"sparsity level r={r} outside 1..{d}")
    _check_psd(A, "A")
    lam_min_b, lam_max_b = _check_spd(B, "B")
    term = _quadratic_term(A, B, alpha=0.0, beta=2.0 * lam_max_b)
    bounds = None
    if lam_min_b > 0:
        bounds = [(_check_psd(A, "A"), lam_min_b)]
    meta = {"kind": "geps", "A": A.tolist(), "B": B.tolist(), "r": int(r)}
    return FractionalProblem([term], [SphereSparsity(d, r)], Coupling.zero(),
                             bounds=bounds, meta=meta)


# ---------------------------------------------------------------------------
# fractional quadratic programs on products of spheres


def max_quadratic_over_sphere(Q, b) -> np.ndarray:
    """Global maximizer of ``x^T Q x + b^T x`` over the unit sphere.

    Solved through the eigendecomposition of Q and the secular equation for
    the multiplier sigma >= lambda_max(Q) in the stationarity system
    ``(sigma I - Q) x = b / 2``. When b has no component on the top
    eigenspace the multiplier is pinned at lambda_max and the slack goes to
    the first top eigenvector (deterministic selection).
    """
    Q = _symmetrize(Q)
    b = np.asarray(b, dtype=float).reshape(-1)
    d = b.size
    if Q.shape != (d, d):
        raise InvalidShape(f"Q {Q.shape} incompatible with b of size {d}")
    evals, vecs = np.linalg.eigh(Q)
    bt = vecs.T @ b
    lam_top = float(evals[-1])
    scale = max(1.0, float(np.linalg.norm(b)), float(np.max(np.abs(evals))))
    top = evals >= lam_top - 1e-12 * scale
    rest = ~top

    if np.all(np.abs(bt[top]) <= 1e-13 * scale):
        coeff = np.zeros(d)
        coeff[rest] = bt[rest] / (2.0 * (lam_top - evals[rest]))
        nb2 = float(coeff @ coeff)
        if nb2 <= 1.0:
            slot = int(np.nonzero(top)[0][0])
            coeff[slot] = np.sqrt(max(0.0, 1.0 - nb2))
            x = vecs @ coeff
            return x / np.linalg.norm(x)
        bt = bt.copy()
        bt[top] = 0.0  # interior secular root exists using the rest coordinates

    def sq_norm(sigma: float) -> float:
        with np.errstate(divide="ignore", over="ignore"):
            c = bt / (2.0 * (sigma - evals))
            return float(c @ c)

    lo = max(lam_top + 1e-16 * scale, float(np.nextafter(lam_top, np.inf)))
    hi = lam_top + 0.5 * float(np.linalg.norm(bt)) + 1e-12 * scale
    for _ in range(200):
        if sq_norm(hi) < 1.0:
            break
        hi = lam_top + 2.0 * (hi - lam_top)
    for _ in range(200):
        if sq_norm(lo) > 1.0:
            break
        lo = lam_top + 0.5 * (lo - lam_top)
    sigma = brentq(lambda s: sq_norm(s) - 1.0, lo, hi, xtol=1e-15, rtol=8.9e-16,
                   maxiter=200)
    x = vecs @ (bt / (2.0 * (sigma - evals)))
    return x / np.linalg.norm(x)


def build_fqp(A0, a0, A_list, B_list) -> FractionalProblem:
    """Quadratic coupling plus per-block Rayleigh quotients on unit spheres.

    ``h(x) = x^T A0 x + a0^T x`` over the concatenated variable; each block
    subproblem is a (possibly indefinite) quadratic maximization on its
    sphere, solved exactly by ``max_quadratic_over_sphere``.
    """
    A_list = [_symmetrize(A) for A in A_list]
    B_list = [_symmetrize(B) for B in B_list]
    if len(A_list) != len(B_list) or not A_list:
        raise InvalidShape("need matching nonempty lists of numerator/denominator matrices")
    dims = [A.shape[0] for A in A_list]
    d = sum(dims)
    A0 = _symmetrize(A0) if A0 is not None else np.zeros((d, d))
    a0 = np.asarray(a0, dtype=float).reshape(-1) if a0 is not None else np.zeros(d)
    if A0.shape != (d, d) or a0.size != d:
        raise InvalidShape(f"coupling shapes {A0.shape}, {a0.size} do not match total dim {d}")
    offsets = np.cumsum([0, *dims])
    slices = [slice(offsets[i], offsets[i + 1]) for i in range(len(dims))]

    terms = []
    bounds = []
    for i, (A, B) in enumerate(zip(A_list, B_list)):
        if B.shape != A.shape:
            raise InvalidShape(f"block {i}: A {A.shape} vs B {B.shape}")
        lam_min_a = float(np.linalg.eigvalsh(A)[0])
        if lam_min_a <= 0:
            raise NotPositiveDefinite(f"numerator matrix of block {i} (lam_min={lam_min_a})")
        lam_min_b, lam_max_b = _check_spd(B, f"denominator matrix of block {i}")
        if lam_min_b <= 0:
            raise NotPositiveDefinite(f"denominator matrix of block {i}")
        terms.append(_quadratic_term(A, B, alpha=0.0, beta=2.0 * lam_max_b))
        bounds.append((float(np.linalg.eigvalsh(A)[-1]), lam_min_b))

    def h_value(x: BlockVector) -> float:
        flat = x.flatten()
        return float(flat @ A0 @ flat + a0 @ flat)

    def block_prox(i, blocks, center, tau):
        sl = slices[i]
        Q = A0[sl, sl]
        lin = a0[sl].copy()
        for j, other in enumerate(blocks):
            if j != i:
                lin += 2.0 * (A0[sl, slices[j]] @ other)
        c = np.asarray(center, dtype=float).reshape(-1)
        # on the sphere the -tau||x||^2 part of the prox penalty is constant
        return max_quadratic_over_sphere(Q, lin + 2.0 * tau * c)

    coupling = Coupling(h_value, block_prox,
                        descriptor={"kind": "quadratic", "A0": A0.tolist(), "a0": a0.tolist()})
    meta = {"kind": "fqp", "dims": dims, "A0": A0.tolist(), "a0": a0.tolist(),
            "A_list": [A.tolist() for A in A_list], "B_list": [B.tolist() for B in B_list]}
    sets = [Sphere(di) for di in dims]
    return FractionalProblem(terms, sets, coupling, bounds=bounds, meta=meta)


def build_random_fqp(dims, seed: int, coupling_scale: float = 0.5) -> FractionalProblem:
    """Reproducible random instance of the spherical fractional quadratic
    program, with well-conditioned positive definite ratio matrices."""
    rng = np.random.Generator(np.random.Philox(seed))
    d = sum(dims)
    A0 = coupling_scale * _symmetrize(rng.standard_normal((d, d)))
    a0 = coupling_scale * rng.standard_normal(d)
    A_list, B_list = [], []
    for di in dims:
        for target in (A_list, B_list):
            W = rng.standard_normal((di, di))
            target.append(W @ W.T / di + 0.5 * np.eye(di))
    return build_fqp(A0, a0, A_list, B_list)


# ---------------------------------------------------------------------------
# synthetic two-class data for the sparse discriminant instances


@dataclass(frozen=True)
class SfdaData:
    """Within-/between-class covariance pair from two Gaussian classes."""

    V_w: np.ndarray
    V_b: np.ndarray
    seed: int
    d: int
    p1: int
    p2: int
    mu_hat1: np.ndarray
    mu_hat2: np.ndarray


def _covariance_block(size: int) -> np.ndarray:
    idx = np.arange(size)
    return 0.8 ** np.abs(idx[:, None] - idx[None, :])


def _sample_class(rng, mean, chol_block, n, d, block_size):
    raw = rng.standard_normal((n, d)).reshape(n, d // block_size, block_size)
    correlated = raw @ chol_block.T
    return mean[None, :] + correlated.reshape(n, d)


def generate_sfda(d: int, p1: int, p2: int, seed: int,
                  max_resample: int = 20) -> SfdaData:
    """Simulate the two-class Gaussian data and return covariance matrices.

    Class means are 0 and a vector with 0.5 on coordinates 2, 4, ..., 40
    (1-based); the population covariance is block diagonal with five
    identical Toeplitz blocks whose (j, j') entry is 0.8^|j - j'|.
    Sampling uses the counter-based Philox generator, so results are
    bit-reproducible per seed across platforms.

    The within-class matrix is verified to be positive definite; draws
    failing the check are resampled (deterministically, continuing the
    stream). With fewer than d + 2 observations the matrix is structurally
    rank-deficient, and positive semidefiniteness within roundoff is
    accepted instead.
    """
    if d % 5 != 0 or d < 40:
        raise InvalidShape(f"d={d} must be a multiple of 5 and at least 40")
    if p1 < 1 or p2 < 1:
        raise InvalidShape("both classes need at least one observation")
    block_size = d // 5
    mu1 = np.zeros(d)
    mu2 = np.zeros(d)
    mu2[1:40:2] = 0.5  # 1-based coordinates 2, 4, ..., 40
    chol = np.linalg.cholesky(_covariance_block(block_size))
    rng = np.random.Generator(np.random.Philox(seed))
    p = p1 + p2
    structurally_singular = p < d + 2
    for _ in range(max_resample):
        z1 = _sample_class(rng, mu1, chol, p1, d, block_size)
        z2 = _sample_class(rng, mu2, chol, p2, d, block_size)
        mu_hat1 = z1.mean(axis=0)
        mu_hat2 = z2.mean(axis=0)
        c1 = z1 - mu_hat1
        c2 = z2 - mu_hat2
        V_w = _symmetrize((c1.T @ c1 + c2.T @ c2) / p)
        V_b = _symmetrize((p1 * np.outer(mu_hat1, mu_hat1)
                           + p2 * np.outer(mu_hat2, mu_hat2)) / p)
        evals = np.linalg.eigvalsh(V_w)
        lam_min, lam_max = float(evals[0]), float(evals[-1])
        if lam_min > 0.0:
            break
        if structurally_singular and lam_min >= -1e-10 * max(1.0, lam_max):
            break
    else:
        raise NotPositiveDefinite(
            f"within-class covariance not positive definite after {max_resample} draws")
    return SfdaData(V_w=V_w, V_b=V_b, seed=seed, d=d, p1=p1, p2=p2,
                    mu_hat1=mu_hat1, mu_hat2=mu_hat2)


def sparse_uniform_x0(d: int, r: int) -> BlockVector:
    """Canonical start: 1/sqrt(r) on the first r coordinates, 0 elsewhere."""
    x0 = np.zeros(d)
    x0[:r] = 1.0 / np.sqrt(r)
    return BlockVector([x0])


# ---------------------------------------------------------------------------
# selection and JSON round trip


@dataclass
class InstanceSpec:
    """Instance selector: a family name plus its parameters."""

    kind: str
    params: dict

    def build(self) -> FractionalProblem:
        kind = self.kind
        p = self.params
        if kind == "ep":
            return build_ep(int(p.get("m", 2)), float(p.get("gamma", 10.0)))
        if kind in ("gep", "geps"):
            if "A" in p and "B" in p:
                A, B = np.asarray(p["A"], dtype=float), np.asarray(p["B"], dtype=float)
            else:
                data = generate_sfda(int(p["d"]), int(p["p1"]), int(p["p2"]),
                                     int(p.get("data_seed", 0)))
                A, B = data.V_b, data.V_w
            if kind == "gep":
                return build_gep(A, B, float(p["lam"]))
            return build_geps(A, B, int(p["r"]))
        if kind == "fqp":
            if "A_list" in p:
                return build_fqp(p.get("A0"), p.get("a0"),
                                 [np.asarray(A, dtype=float) for A in p["A_list"]],
                                 [np.asarray(B, dtype=float) for B in p["B_list"]])
            return build_random_fqp(tuple(p.get("dims", (5, 5))), int(p.get("seed", 0)))
        raise ValueError(f"unknown instance kind {kind!r}")


def problem_from_json(doc: dict) -> FractionalProblem:
    """Rebuild an exported instance from its JSON document."""
    meta = doc.get("meta") or {}
    kind = meta.get("kind")
    if kind == "ep":
        return build_ep(int(meta["m"]), float(meta["gamma"]))
    if kind == "gep":
        return build_gep(np.asarray(meta["A"], dtype=float),
                         np.asarray(meta["B"], dtype=float), float(meta["lam"]))
    if kind == "geps":
        return build_geps(np.asarray(meta["A"], dtype=float),
                          np.asarray(meta["B"], dtype=float), int(meta["r"]))
    if kind == "fqp":
        return build_fqp(np.asarray(meta["A0"], dtype=float),
                         np.asarray(meta["a0"], dtype=float),
                         [np.asarray(A, dtype=float) for A in meta["A_list"]],
                         [np.asarray(B, dtype=float) for B in meta["B_list"]])
    # generic documents without builder metadata cannot carry their oracles
    raise ValueError("document lacks reconstructible instance metadata")


# kept for callers that only need the standard feasible sets
rebuild_feasible_set = set_from_json
