"""Problem model for block-structured sum-of-ratios maximization.

The decision variable ``x = (x_1, ..., x_m)`` is partitioned into blocks and
the objective

    F(x) = h(x_1, ..., x_m) + sum_i f_i(x_i) / g_i(x_i)

is maximized over a product of closed feasible sets, with ``f_i >= 0`` and
``g_i > 0`` on the corresponding set. Each ratio term carries two curvature
constants: ``alpha`` (weak-convexity modulus of ``sqrt(f_i)``) and ``beta``
(a lower curvature bound for ``g_i``); the solver's step-size rule is built
from them. The coupling term ``h`` contributes a per-block proximal oracle
used by the Gauss-Seidel sweep.

Numerators, denominators and their subgradients are supplied as plain
callables on the block vector; no differentiation is performed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .prox import (
    DimensionMismatch,
    ProxResult,
    ZERO_NORM_FLOOR,
    project_box,
    project_sparsity,
    project_sphere,
    project_sphere_sparsity,
)

__all__ = [
    "BlockVector",
    "RatioTerm",
    "FeasibleSet",
    "Box",
    "Sphere",
    "SparsitySet",
    "SphereSparsity",
    "CustomSet",
    "Coupling",
    "FractionalProblem",
    "NonpositiveDenominator",
    "NegativeNumerator",
    "OracleFailure",
    "DimensionMismatch",
    "evaluate_F",
    "compute_y",
    "compute_w",
    "evaluate_H",
    "validate_assumptions",
    "AssumptionReport",
    "AssumptionViolation",
    "problem_to_json",
    "set_from_json",
    "W_CONVENTIONS",
]

# the two supported conventions for the ratio ascent direction: "step1" is
# the quotient-rule subgradient of f/g; "section6" is the same direction
# halved (matrix-form updates for quadratic ratios are sometimes written
# without the factor 2 from the gradients of the quadratics)
W_CONVENTIONS = ("step1", "section6")


class NonpositiveDenominator(ArithmeticError):
    """A denominator oracle returned a value <= 0 on the feasible set."""

    def __init__(self, block: int, value: float):
        super().__init__(f"g of block {block} returned {value}; must be positive")
        self.block = block
        self.value = value


class NegativeNumerator(ArithmeticError):
    """A numerator oracle returned a value below -tolerance."""

    def __init__(self, block: int, value: float):
        super().__init__(f"f of block {block} returned {value}; must be nonnegative")
        self.block = block
        self.value = value


class OracleFailure(RuntimeError):
    """A user-supplied oracle raised while being evaluated."""

    def __init__(self, block: int, oracle: str, cause: BaseException):
        super().__init__(f"{oracle} oracle of block {block} failed: {cause!r}")
        self.block = block
        self.oracle = oracle


class BlockVector:
    """Partitioned decision variable: an ordered list of dense real vectors.

    Entries must be finite; blocks are copied on construction and the
    partition is fixed afterwards.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks: Sequence):
        parsed = []
        for k, b in enumerate(blocks):
            arr = np.array(b, dtype=float).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"block {k} contains non-finite entries")
            parsed.append(arr)
        if not parsed:
            raise ValueError("a BlockVector needs at least one block")
        self.blocks = parsed

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def dim(self) -> int:
        return sum(b.size for b in self.blocks)

    def flatten(self) -> np.ndarray:
        """Concatenate the blocks into a single vector (copies)."""
        return np.concatenate(self.blocks)

    @classmethod
    def from_flat(cls, flat, dims: Sequence[int]) -> "BlockVector":
        flat = np.asarray(flat, dtype=float).reshape(-1)
        if flat.size != sum(dims):
            raise DimensionMismatch(f"flat vector of size {flat.size} != sum(dims)={sum(dims)}")
        offsets = np.cumsum([0, *dims])
        return cls([flat[offsets[i]:offsets[i + 1]] for i in range(len(dims))])

    def copy(self) -> "BlockVector":
        return BlockVector(self.blocks)

    def distance(self, other: "BlockVector") -> float:
        """Euclidean distance over all blocks."""
        if self.dims != other.dims:
            raise DimensionMismatch(f"dims {self.dims} vs {other.dims}")
        return math.sqrt(
            sum(float(np.sum((a - b) ** 2)) for a, b in zip(self.blocks, other.blocks))
        )

    def __repr__(self) -> str:
        return f"BlockVector(dims={self.dims})"


@dataclass(frozen=True, eq=False)
class RatioTerm:
    """Oracles and curvature constants of one ratio ``f_i / g_i``.

    ``f_subgrad`` and ``g_subgrad`` return one element of the respective
    (limiting) subdifferentials; a single element is all the method needs.
    ``alpha`` bounds the curvature of ``sqrt(f_i)`` from below (weak
    convexity), ``beta`` the downward curvature of ``g_i``.
    """

    f_value: Callable[[np.ndarray], float]
    f_subgrad: Callable[[np.ndarray], np.ndarray]
    g_value: Callable[[np.ndarray], float]
    g_subgrad: Callable[[np.ndarray], np.ndarray]
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("curvature constants alpha, beta must be nonnegative")


class FeasibleSet:
    """Per-block constraint set with an exact Euclidean projection."""

    dim: int

    def project(self, a) -> ProxResult:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible point; used by sampled validation and tests."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class Box(FeasibleSet):
    """Axis-aligned box ``{x : lo <= x <= hi}``."""

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float)).reshape(-1)
        hi = np.atleast_1d(np.asarray(hi, dtype=float)).reshape(-1)
        if lo.size != hi.size:
            raise DimensionMismatch(f"lo size {lo.size} != hi size {hi.size}")
        if np.any(lo > hi):
            raise ValueError("box is empty: lo > hi on some coordinate")
        self.lo = lo
        self.hi = hi
        self.dim = lo.size

    def project(self, a) -> ProxResult:
        return ProxResult(project_box(a, self.lo, self.hi), tie_broken=False)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return x.size == self.dim and bool(
            np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol)
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    def to_json(self) -> dict:
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Sphere(FeasibleSet):
    """Unit sphere ``{x : ||x|| = 1}``."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("sphere dimension must be >= 1")
        self.dim = int(dim)

    def project(self, a) -> ProxResult:
        return project_sphere(a)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return x.size == self.dim and abs(float(np.linalg.norm(x)) - 1.0) <= tol

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        while True:
            v = rng.standard_normal(self.dim)
            nrm = np.linalg.norm(v)
            if nrm > 1e-12:
                return v / nrm

    def to_json(self) -> dict:
        return {"kind": "sphere", "dim": self.dim}


class SparsitySet(FeasibleSet):
    """Sparsity set ``{x : nnz(x) <= r}``."""

    def __init__(self, dim: int, r: int):
        if not 1 <= r <= dim:
            raise ValueError(f"sparsity level r={r} outside 1..{dim}")
        self.dim = int(dim)
        self.r = int(r)

    def project(self, a) -> ProxResult:
        return project_sparsity(a, self.r)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return x.size == self.dim and int(np.count_nonzero(x)) <= self.r

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros(self.dim)
        support = rng.choice(self.dim, size=self.r, replace=False)
        out[support] = rng.standard_normal(self.r)
        return out

    def to_json(self) -> dict:
        return {"kind": "sparsity", "dim": self.dim, "r": self.r}


class SphereSparsity(FeasibleSet):
    """Sparse unit sphere ``{x : ||x|| = 1, nnz(x) <= r}``."""

    def __init__(self, dim: int, r: int):
        if not 1 <= r <= dim:
            raise ValueError(f"sparsity level r={r} outside 1..{dim}")
        self.dim = int(dim)
        self.r = int(r)

    def project(self, a) -> ProxResult:
        return project_sphere_sparsity(a, self.r)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return (
            x.size == self.dim
            and int(np.count_nonzero(x)) <= self.r
            and abs(float(np.linalg.norm(x)) - 1.0) <= tol
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        while True:
            out = np.zeros(self.dim)
            support = rng.choice(self.dim, size=self.r, replace=False)
            out[support] = rng.standard_normal(self.r)
            nrm = np.linalg.norm(out)
            if nrm > 1e-12:
                return out / nrm

    def to_json(self) -> dict:
        return {"kind": "sphere_sparsity", "dim": self.dim, "r": self.r}


class CustomSet(FeasibleSet):
    """Constraint set defined by a user projection oracle."""

    def __init__(self, dim, projector, membership=None, sampler=None, descriptor=None):
        self.dim = int(dim)
        self._projector = projector
        self._membership = membership
        self._sampler = sampler
        self._descriptor = descriptor or {"kind": "custom"}

    def project(self, a) -> ProxResult:
        out = self._projector(np.asarray(a, dtype=float).reshape(-1))
        if isinstance(out, ProxResult):
            return out
        return ProxResult(np.asarray(out, dtype=float).reshape(-1), tie_broken=False)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            return False
        if self._membership is not None:
            return bool(self._membership(x))
        return float(np.linalg.norm(self.project(x).point - x)) <= tol

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self._sampler is None:
            raise NotImplementedError("custom set has no sampler")
        return np.asarray(self._sampler(rng), dtype=float).reshape(-1)

    def to_json(self) -> dict:
        return dict(self._descriptor)


def set_from_json(doc: dict) -> FeasibleSet:
    """Rebuild one of the standard feasible sets from its JSON form."""
    kind = doc.get("kind")
    if kind == "box":
        return Box(doc["lo"], doc["hi"])
    if kind == "sphere":
        return Sphere(doc["dim"])
    if kind == "sparsity":
        return SparsitySet(doc["dim"], doc["r"])
    if kind == "sphere_sparsity":
        return SphereSparsity(doc["dim"], doc["r"])
    raise ValueError(f"cannot rebuild feasible set of kind {kind!r}")


class Coupling:
    """Coupling term ``h`` and its per-block proximal oracle.

    ``block_prox(i, blocks, center, tau)`` must solve

        argmax_{x_i in S_i}  h(blocks with slot i free)(x_i) - tau * ||x_i - center||^2

    where ``blocks`` holds the current values of all blocks (earlier blocks
    already updated in a Gauss-Seidel sweep). When ``block_prox`` is None the
    problem falls back to the plain projection of ``center`` onto S_i, which
    is the exact solution for ``h == 0``.
    """

    def __init__(self, h_value, block_prox=None, zero_flag=False, descriptor=None):
        self.h_value = h_value
        self.block_prox = block_prox
        self.zero_flag = bool(zero_flag)
        self.descriptor = descriptor or {"kind": "zero" if zero_flag else "custom"}

    @classmethod
    def zero(cls) -> "Coupling":
        return cls(h_value=lambda x: 0.0, block_prox=None, zero_flag=True,
                   descriptor={"kind": "zero"})


class FractionalProblem:
    """Immutable description of one sum-of-ratios maximization problem."""

    def __init__(self, terms, sets, coupling: Coupling, bounds=None, meta=None):
        terms = tuple(terms)
        sets = tuple(sets)
        if len(terms) != len(sets):
            raise ValueError(f"{len(terms)} ratio terms but {len(sets)} feasible sets")
        if not terms:
            raise ValueError("a problem needs at least one block")
        if bounds is not None:
            bounds = tuple((float(M), float(mlow)) for M, mlow in bounds)
            if len(bounds) != len(terms):
                raise ValueError("bounds must have one (M_i, m_i) pair per block")
            for i, (M, mlow) in enumerate(bounds):
                if M < 0 or mlow <= 0:
                    raise ValueError(f"bounds of block {i} need M >= 0 and m > 0")
        self.terms = terms
        self.sets = sets
        self.coupling = coupling
        self.bounds = bounds
        self.meta = meta or {}

    @property
    def m(self) -> int:
        return len(self.terms)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sets)

    def check_dims(self, x: BlockVector) -> None:
        if x.dims != self.dims:
            raise DimensionMismatch(f"point dims {x.dims} != problem dims {self.dims}")

    def zero_threshold(self, i: int) -> float:
        """Numerator values at or below this are treated as exactly zero."""
        scale = self.bounds[i][0] if self.bounds is not None else 1.0
        return 1e-14 * max(1.0, scale)

    def block_prox(self, i: int, blocks, center, tau: float) -> np.ndarray:
        """Solve the i-th block subproblem at the given prox center."""
        if self.coupling.block_prox is not None:
            out = self.coupling.block_prox(i, blocks, center, tau)
            return np.asarray(out, dtype=float).reshape(-1)
        return self.sets[i].project(center).point

    def is_feasible(self, x: BlockVector, tol: float = 1e-9) -> bool:
        return all(s.contains(b, tol) for s, b in zip(self.sets, x.blocks))


def _eval_scalar(problem, i, which, x_i) -> float:
    term = problem.terms[i]
    fn = term.f_value if which == "f" else term.g_value
    try:
        return float(fn(x_i))
    except Exception as exc:  # noqa: BLE001 - oracle errors are wrapped
        raise OracleFailure(i, which, exc) from exc


def _eval_subgrad(problem, i, which, x_i) -> np.ndarray:
    term = problem.terms[i]
    fn = term.f_subgrad if which == "f" else term.g_subgrad
    try:
        out = np.asarray(fn(x_i), dtype=float).reshape(-1)
    except Exception as exc:  # noqa: BLE001
        raise OracleFailure(i, which + "_subgrad", exc) from exc
    if out.size != x_i.size:
        raise DimensionMismatch(
            f"{which}_subgrad of block {i} returned size {out.size}, expected {x_i.size}"
        )
    return out


def evaluate_F(problem: FractionalProblem, x: BlockVector) -> float:
    """Objective value ``h(x) + sum_i f_i(x_i) / g_i(x_i)``."""
    problem.check_dims(x)
    total = float(problem.coupling.h_value(x))
    for i, x_i in enumerate(x.blocks):
        g = _eval_scalar(problem, i, "g", x_i)
        if not g > 0.0:
            raise NonpositiveDenominator(i, g)
        total += _eval_scalar(problem, i, "f", x_i) / g
    return total


def compute_y(problem: FractionalProblem, x: BlockVector) -> np.ndarray:
    """Auxiliary multipliers ``y_i = sqrt(f_i(x_i)) / g_i(x_i)``, one per block."""
    problem.check_dims(x)
    y = np.empty(problem.m)
    for i, x_i in enumerate(x.blocks):
        f = _eval_scalar(problem, i, "f", x_i)
        if f < -problem.zero_threshold(i):
            raise NegativeNumerator(i, f)
        g = _eval_scalar(problem, i, "g", x_i)
        if not g > 0.0:
            raise NonpositiveDenominator(i, g)
        y[i] = math.sqrt(max(f, 0.0)) / g
    return y


def compute_w(problem: FractionalProblem, x: BlockVector, y=None,
              convention: str = "step1") -> BlockVector:
    """Ascent direction of the ratio part, blockwise.

    Block i carries ``y_i * u_i / sqrt(f_i(x_i)) - y_i^2 * v_i`` with
    ``u_i, v_i`` one subgradient of f_i, g_i; this equals the gradient of
    ``f_i / g_i`` wherever the oracles are differentiable. Blocks with
    ``f_i(x_i)`` at the zero threshold get the zero vector. The
    ``"section6"`` convention returns the same direction halved.
    """
    if convention not in W_CONVENTIONS:
        raise ValueError(f"w convention must be one of {W_CONVENTIONS}, got {convention!r}")
    problem.check_dims(x)
    if y is None:
        y = compute_y(problem, x)
    factor = 0.5 if convention == "section6" else 1.0
    blocks = []
    for i, x_i in enumerate(x.blocks):
        f = _eval_scalar(problem, i, "f", x_i)
        if f <= problem.zero_threshold(i):
            blocks.append(np.zeros(x_i.size))
            continue
        u = _eval_subgrad(problem, i, "f", x_i)
        v = _eval_subgrad(problem, i, "g", x_i)
        blocks.append(factor * (y[i] * u / math.sqrt(f) - y[i] ** 2 * v))
    return BlockVector(blocks)


def evaluate_H(problem: FractionalProblem, x: BlockVector, y) -> float:
    """Lifted surrogate ``sum_i [2 y_i sqrt(f_i(x_i)) - y_i^2 g_i(x_i)]``.

    At ``y = compute_y(problem, x)`` this equals the ratio part of the
    objective, so ``h(x) + evaluate_H(x, y)`` reproduces ``evaluate_F(x)``.
    """
    problem.check_dims(x)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != problem.m:
        raise DimensionMismatch(f"y has {y.size} entries, expected {problem.m}")
    total = 0.0
    for i, x_i in enumerate(x.blocks):
        f = _eval_scalar(problem, i, "f", x_i)
        if f < -problem.zero_threshold(i):
            raise NegativeNumerator(i, f)
        g = _eval_scalar(problem, i, "g", x_i)
        if not g > 0.0:
            raise NonpositiveDenominator(i, g)
        total += 2.0 * y[i] * math.sqrt(max(f, 0.0)) - y[i] ** 2 * g
    return total


@dataclass(frozen=True)
class AssumptionViolation:
    block: int
    inequality: str  # "sqrt-numerator" or "denominator"
    gap: float


@dataclass
class AssumptionReport:
    """Outcome of sampled validation of the curvature constants.

    A clean report does not certify the inequalities (sampling can only
    falsify them); violations are listed with their gaps.
    """

    n_pairs: int
    violations: list = field(default_factory=list)
    note: str = ("sampled check only: absence of violations does not prove the "
                 "curvature inequalities hold everywhere")

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_assumptions(problem: FractionalProblem, sampler=None, n_pairs: int = 200,
                         tol: float = 1e-8, seed: int = 0) -> AssumptionReport:
    """Check the two per-block curvature inequalities on sampled pairs.

    For pairs ``(x, z)`` of feasible block points the report records every
    violation of

        <u / (2 sqrt(f(x))), z - x>  <=  sqrt(f(z)) - sqrt(f(x)) + alpha/2 ||z - x||^2
        <v, z - x>                   >=  g(z) - g(x) - beta/2 ||z - x||^2

    beyond ``tol``. ``sampler(rng, i)`` must yield a feasible point of block
    i; by default the block's own ``FeasibleSet.sample`` is used.
    """
    rng = np.random.default_rng(seed)
    if sampler is None:
        sampler = lambda r, i: problem.sets[i].sample(r)  # noqa: E731
    report = AssumptionReport(n_pairs=n_pairs)
    for i in range(problem.m):
        term = problem.terms[i]
        for _ in range(n_pairs):
            x = np.asarray(sampler(rng, i), dtype=float).reshape(-1)
            z = np.asarray(sampler(rng, i), dtype=float).reshape(-1)
            dx = z - x
            sq = float(dx @ dx)
            f_x = _eval_scalar(problem, i, "f", x)
            f_z = _eval_scalar(problem, i, "f", z)
            if f_x > problem.zero_threshold(i):
                u = _eval_subgrad(problem, i, "f", x)
                lhs = float(u @ dx) / (2.0 * math.sqrt(f_x))
                rhs = math.sqrt(max(f_z, 0.0)) - math.sqrt(f_x) + 0.5 * term.alpha * sq
                if lhs - rhs > tol:
                    report.violations.append(
                        AssumptionViolation(i, "sqrt-numerator", lhs - rhs))
            v = _eval_subgrad(problem, i, "g", x)
            g_x = _eval_scalar(problem, i, "g", x)
            g_z = _eval_scalar(problem, i, "g", z)
            gap = (g_z - g_x - 0.5 * term.beta * sq) - float(v @ dx)
            if gap > tol:
                report.violations.append(AssumptionViolation(i, "denominator", gap))
    return report


def problem_to_json(problem: FractionalProblem) -> dict:
    """Structural JSON document of a problem (matrices in row-major lists).

    Oracles are not serialized; instances built by known builders embed
    enough metadata (under ``meta``) to be reconstructed.
    """
    doc = {
        "m": problem.m,
        "blocks": [
            {"dim": s.dim, "set": s.to_json(), "alpha": t.alpha, "beta": t.beta}
            for s, t in zip(problem.sets, problem.terms)
        ],
        "coupling": dict(problem.coupling.descriptor),
    }
    if problem.bounds is not None:
        doc["bounds"] = [[M, mlow] for M, mlow in problem.bounds]
    if problem.meta:
        doc["meta"] = dict(problem.meta)
    return doc
