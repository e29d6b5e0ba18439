"""Projection toolbox for the block subproblems.

Exact Euclidean projections onto boxes, the unit sphere, sparsity sets
(at most ``r`` nonzeros), the sparse unit sphere, and the closed-form
maximizer of ``<a, x> - mu * nnz(x)`` over the unit sphere.

All operations are pure functions. Projections onto the nonconvex sets
are set-valued in general; a deterministic selection (lowest index,
smallest support size) is applied and flagged via ``ProxResult.tie_broken``
so that runs are reproducible. A brute-force support-enumeration oracle
is provided for cross-checking at small dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProxResult",
    "DimensionMismatch",
    "DimensionTooLarge",
    "project_box",
    "project_sphere",
    "project_sparsity",
    "project_sphere_sparsity",
    "prox_l0_sphere",
    "brute_force_prox",
]

# inputs with Euclidean norm at or below this are treated as the zero vector
ZERO_NORM_FLOOR = 1e-300

# brute_force_prox enumerates all 2^d - 1 supports; refuse beyond this
BRUTE_FORCE_DIM_CAP = 20


class DimensionMismatch(ValueError):
    """Operands have incompatible shapes."""


class DimensionTooLarge(ValueError):
    """Support enumeration requested above the brute-force dimension cap."""


@dataclass(frozen=True)
class ProxResult:
    """Projection output plus a tie-break indicator.

    ``tie_broken`` is True when the target set admitted more than one
    nearest point (or argmax) and the documented deterministic rule chose
    among them. The flag is conservative: it may be set when the competing
    selections happen to coincide numerically (e.g. zero boundary entries).
    """

    point: np.ndarray
    tie_broken: bool = False


def _as_vector(a) -> np.ndarray:
    return np.asarray(a, dtype=float).reshape(-1)


def _first_basis_vector(d: int) -> np.ndarray:
    out = np.zeros(d)
    out[0] = 1.0
    return out


def project_box(a, lo, hi) -> np.ndarray:
    """Componentwise clamp of ``a`` onto the box ``[lo, hi]``.

    ``lo`` and ``hi`` may be scalars or vectors matching ``a``.
    """
    a = _as_vector(a)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    for bound in (lo, hi):
        if bound.ndim > 0 and bound.reshape(-1).size != a.size:
            raise DimensionMismatch(
                f"box bound of size {bound.size} does not match vector of size {a.size}"
            )
    lo = np.broadcast_to(lo.reshape(-1) if lo.ndim else lo, a.shape)
    hi = np.broadcast_to(hi.reshape(-1) if hi.ndim else hi, a.shape)
    if np.any(lo > hi):
        raise ValueError("box is empty: lo > hi on some coordinate")
    return np.minimum(np.maximum(a, lo), hi)


def project_sphere(a) -> ProxResult:
    """Nearest point of the unit sphere: ``a / ||a||``.

    The zero vector is equidistant from the whole sphere; the first
    standard basis vector is returned with ``tie_broken=True``.
    """
    a = _as_vector(a)
    nrm = float(np.linalg.norm(a))
    if nrm <= ZERO_NORM_FLOOR:
        return ProxResult(_first_basis_vector(a.size), tie_broken=True)
    return ProxResult(a / nrm, tie_broken=False)


def _top_magnitude_order(a: np.ndarray) -> np.ndarray:
    # stable sort on descending |a|: equal magnitudes keep ascending index order
    return np.argsort(-np.abs(a), kind="stable")


def project_sparsity(a, r: int) -> ProxResult:
    """Keep the ``r`` largest entries of ``a`` in absolute value, zero the rest.

    Ties at the selection boundary are broken towards the lowest index and
    flagged.
    """
    a = _as_vector(a)
    d = a.size
    if not 1 <= r <= d:
        raise ValueError(f"sparsity level r={r} outside 1..{d}")
    if r == d:
        return ProxResult(a.copy(), tie_broken=False)
    order = _top_magnitude_order(a)
    out = np.zeros(d)
    keep = order[:r]
    out[keep] = a[keep]
    tie = bool(np.abs(a[order[r - 1]]) == np.abs(a[order[r]]))
    return ProxResult(out, tie_broken=tie)


def project_sphere_sparsity(a, r: int) -> ProxResult:
    """Nearest point of the sparse unit sphere {x : ||x|| = 1, nnz(x) <= r}.

    Computed by normalizing the sparsity projection of ``a``. For the zero
    vector every member of the set is nearest; the first basis vector is
    returned with ``tie_broken=True``.
    """
    a = _as_vector(a)
    if not 1 <= r <= a.size:
        raise ValueError(f"sparsity level r={r} outside 1..{a.size}")
    sparse = project_sparsity(a, r)
    nrm = float(np.linalg.norm(sparse.point))
    if nrm <= ZERO_NORM_FLOOR:
        return ProxResult(_first_basis_vector(a.size), tie_broken=True)
    return ProxResult(sparse.point / nrm, tie_broken=sparse.tie_broken)


def prox_l0_sphere(a, mu: float) -> ProxResult:
    """Maximize ``<a, x> - mu * nnz(x)`` over the unit sphere.

    With the top-k magnitudes of ``a`` denoted by their cumulative squared
    sums S_k, the optimal support size maximizes ``sqrt(S_k) - mu * k``;
    the maximizer keeps those k entries of ``a`` and normalizes. The
    smallest support size wins score ties, lowest index wins magnitude
    ties at the selection boundary; both are flagged.
    """
    a = _as_vector(a)
    if mu < 0:
        raise ValueError(f"penalty mu={mu} must be nonnegative")
    d = a.size
    if float(np.linalg.norm(a)) <= ZERO_NORM_FLOOR:
        # every 1-sparse unit vector attains the optimum -mu
        return ProxResult(_first_basis_vector(d), tie_broken=True)
    order = _top_magnitude_order(a)
    sorted_vals = a[order]
    cumsq = np.cumsum(sorted_vals**2)
    scores = np.sqrt(cumsq) - mu * np.arange(1, d + 1)
    k = int(np.argmax(scores))  # first maximum -> smallest support size
    best = scores[k]
    tie = bool(np.count_nonzero(scores == best) > 1)
    if k + 1 < d and abs(sorted_vals[k]) == abs(sorted_vals[k + 1]):
        tie = True
    out = np.zeros(d)
    keep = order[: k + 1]
    out[keep] = a[keep]
    out /= np.linalg.norm(out)
    return ProxResult(out, tie_broken=tie)


def _support_masks(d: int) -> np.ndarray:
    # all nonempty supports as a (2^d - 1, d) boolean matrix, ascending bitmask
    codes = np.arange(1, 2**d, dtype=np.int64)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def brute_force_prox(kind: str, a, r: int | None = None, mu: float | None = None) -> np.ndarray:
    """Exact optimum by enumerating all supports; test oracle only.

    ``kind`` selects the target problem:

    - ``"sparsity"``: nearest point with at most ``r`` nonzeros;
    - ``"sphere_sparsity"``: nearest point of the sparse unit sphere;
    - ``"l0_sphere"``: argmax of ``<a, x> - mu * nnz(x)`` on the sphere.

    Within a fixed support the optimum is closed-form; over supports the
    first optimum in ascending bitmask order is returned. Refuses
    dimensions above ``BRUTE_FORCE_DIM_CAP``.
    """
    a = _as_vector(a)
    d = a.size
    if d > BRUTE_FORCE_DIM_CAP:
        raise DimensionTooLarge(f"dimension {d} exceeds enumeration cap {BRUTE_FORCE_DIM_CAP}")
    masks = _support_masks(d)
    sizes = masks.sum(axis=1)

    if kind == "sparsity":
        if r is None:
            raise ValueError("kind 'sparsity' requires r")
        masks = masks[sizes <= r]
        # within support T the nearest point is a restricted to T
        kept_sq = masks @ (a**2)
        best = int(np.argmax(kept_sq))
        out = np.where(masks[best], a, 0.0)
        return out

    if kind == "sphere_sparsity":
        if r is None:
            raise ValueError("kind 'sphere_sparsity' requires r")
        masks = masks[sizes <= r]
        norms = np.sqrt(masks @ (a**2))
        # ||x - a||^2 = ||a||^2 + 1 - 2||a_T|| for x = a_T/||a_T||; degenerate
        # all-zero supports fall back to a basis vector e_j, giving -2 a_j
        first_idx = np.argmax(masks, axis=1)
        gain = np.where(norms > 0.0, norms, a[first_idx])
        best = int(np.argmax(gain))
        if norms[best] > 0.0:
            out = np.where(masks[best], a, 0.0)
            return out / norms[best]
        out = np.zeros(d)
        out[first_idx[best]] = 1.0
        return out

    if kind == "l0_sphere":
        if mu is None:
            raise ValueError("kind 'l0_sphere' requires mu")
        norms = np.sqrt(masks @ (a**2))
        nnz = masks @ (a != 0.0).astype(np.int64)
        first_idx = np.argmax(masks, axis=1)
        # x = a_T/||a_T|| scores ||a_T|| - mu*nnz(a_T); an all-zero support
        # collapses to a single basis vector scoring a_j - mu
        obj = np.where(norms > 0.0, norms - mu * nnz, a[first_idx] - mu)
        best = int(np.argmax(obj))
        if norms[best] > 0.0:
            out = np.where(masks[best], a, 0.0)
            return out / norms[best]
        out = np.zeros(d)
        out[first_idx[best]] = 1.0
        return out

    raise ValueError(f"unknown brute-force kind {kind!r}")
