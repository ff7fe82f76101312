"""Truncated sequence spaces, vectors and operators.

Every infinite-dimensional object is a finite matrix plus an optional
symbolic tail.  A :class:`Tail` describes the entries of an operator beyond
its truncation: ``scale * k**-exponent`` on the diagonal for ``k`` past the
truncation index (1-based), zero elsewhere.  Criteria combine the exact
truncated computation with closed-form tail sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

from .errors import SpaceMismatchError

HILBERT = "2-hilbert"


@dataclass(frozen=True)
class SpaceSpec:
    """A truncated ell^q space.

    ``exponent`` is a real q >= 1 or the symbol ``"2-hilbert"``.  The dual
    space is obtained with :meth:`dual`; for q != 2 it flips ``is_dual`` so
    that taking the dual twice returns the original space exactly.
    """

    exponent: float | str = 2.0
    dim: int = 1
    label: str = ""
    is_dual: bool = False

    def __post_init__(self):
        if self.dim < 0:
            raise ValueError(f"dim must be nonnegative, got {self.dim}")
        if isinstance(self.exponent, str):
            if self.exponent != HILBERT:
                raise ValueError(f"unknown exponent symbol {self.exponent!r}")
        elif not self.exponent >= 1:
            raise ValueError(f"exponent must be >= 1, got {self.exponent}")

    @property
    def base_q(self) -> float:
        return 2.0 if self.exponent == HILBERT else float(self.exponent)

    @property
    def q(self) -> float:
        """Effective exponent (the conjugate one for dual spaces)."""
        return conjugate_exponent(self.base_q) if self.is_dual else self.base_q

    @property
    def is_hilbert(self) -> bool:
        return self.q == 2.0

    def dual(self) -> "SpaceSpec":
        if self.is_hilbert:
            return self
        return replace(self, is_dual=not self.is_dual)

    def same_as(self, other: "SpaceSpec") -> bool:
        """Equality of dimension and exponent, ignoring labels."""
        return self.dim == other.dim and math.isclose(self.q, other.q, rel_tol=1e-12)


def conjugate_exponent(q: float) -> float:
    if q == 1.0:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def hilbert(dim: int, label: str = "H") -> SpaceSpec:
    return SpaceSpec(HILBERT, dim, label)


@dataclass(frozen=True, eq=False)
class Vector:
    coords: np.ndarray
    space: SpaceSpec

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1)
        if coords.shape[0] != self.space.dim:
            raise SpaceMismatchError(
                f"{coords.shape[0]} coordinates for a space of dim {self.space.dim}")
        object.__setattr__(self, "coords", coords)

    def __mul__(self, a: float) -> "Vector":
        return Vector(a * self.coords, self.space)

    __rmul__ = __mul__

    def __add__(self, other: "Vector") -> "Vector":
        _require_same(self.space, other.space)
        return Vector(self.coords + other.coords, self.space)

    def __neg__(self) -> "Vector":
        return Vector(-self.coords, self.space)


def unit(space: SpaceSpec, k: int) -> Vector:
    """Standard unit vector e_k (0-based index)."""
    c = np.zeros(space.dim)
    c[k] = 1.0
    return Vector(c, space)


def zero_vector(space: SpaceSpec) -> Vector:
    return Vector(np.zeros(space.dim), space)


@dataclass(frozen=True)
class Tail:
    """Symbolic continuation of an operator beyond its truncation.

    ``kind="diagonal-power-decay"``: diagonal entries ``scale * k**-exponent``.
    ``kind="unspecified"``: the operator continues but nothing is known.
    """

    exponent: float = 0.0
    scale: float = 1.0
    kind: str = "diagonal-power-decay"

    def __post_init__(self):
        if self.kind not in ("diagonal-power-decay", "unspecified"):
            raise ValueError(f"unknown tail kind {self.kind!r}")

    @property
    def known(self) -> bool:
        return self.kind == "diagonal-power-decay"

    @property
    def vanishes(self) -> bool:
        return self.known and self.scale == 0.0


def tail_power_sum(tail: Tail, start: int, power: float) -> float:
    """sum_{k > start} |scale * k**-s|**power, +inf when divergent."""
    if not tail.known:
        raise ValueError("unspecified tail has no closed form")
    if tail.scale == 0.0:
        return 0.0
    a = tail.exponent * power
    if a <= 1.0:
        return math.inf
    return abs(tail.scale) ** power * float(special.zeta(a, start + 1))


def tail_integral_bound(tail: Tail, start: int, power: float) -> float:
    """Upper bound  |scale|**power * int_start^inf x**-(s*power) dx  (start >= 1)."""
    if tail.scale == 0.0:
        return 0.0
    a = tail.exponent * power
    if a <= 1.0:
        return math.inf
    return abs(tail.scale) ** power * max(start, 1) ** (1.0 - a) / (a - 1.0)


@dataclass(frozen=True, eq=False)
class Operator:
    """A bounded operator given by its truncated matrix (codomain x domain)."""

    matrix: np.ndarray
    domain: SpaceSpec
    codomain: SpaceSpec
    tail: Tail | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape != (self.codomain.dim, self.domain.dim):
            raise SpaceMismatchError(
                f"matrix shape {m.shape} does not match "
                f"({self.codomain.dim}, {self.domain.dim})")
        object.__setattr__(self, "matrix", m)

    @property
    def tail_start(self) -> int:
        return max(self.domain.dim, self.codomain.dim)

    @property
    def has_infinite_part(self) -> bool:
        return self.tail is not None and not self.tail.vanishes

    @property
    def T(self) -> "Operator":
        return adjoint(self)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return compose(self, other)
        if isinstance(other, Vector):
            return apply(self, other)
        return NotImplemented

    def __mul__(self, a: float) -> "Operator":
        tail = None if self.tail is None else replace(self.tail, scale=a * self.tail.scale)
        return Operator(a * self.matrix, self.domain, self.codomain, tail)

    __rmul__ = __mul__

    def __add__(self, other: "Operator") -> "Operator":
        _require_same(self.domain, other.domain)
        _require_same(self.codomain, other.codomain)
        return Operator(self.matrix + other.matrix, self.domain, self.codomain,
                        _add_tails(self.tail, other.tail))

    def __sub__(self, other: "Operator") -> "Operator":
        return self + (-1.0) * other


def identity(space: SpaceSpec, tail: Tail | None = None) -> Operator:
    return Operator(np.eye(space.dim), space, space, tail)


def diagonal(values: Sequence[float], domain: SpaceSpec, codomain: SpaceSpec | None = None,
             tail: Tail | None = None) -> Operator:
    return Operator(np.diag(np.asarray(values, float)), domain, codomain or domain, tail)


def power_decay(space: SpaceSpec, s: float, scale: float = 1.0, with_tail: bool = True,
                codomain: SpaceSpec | None = None) -> Operator:
    """Diagonal operator with entries scale * k**-s, k = 1..dim, optional matching tail."""
    k = np.arange(1, space.dim + 1, dtype=float)
    tail = Tail(s, scale) if with_tail else None
    return diagonal(scale * k ** -s, space, codomain, tail)


def zero_operator(domain: SpaceSpec, codomain: SpaceSpec) -> Operator:
    return Operator(np.zeros((codomain.dim, domain.dim)), domain, codomain)


def _require_same(a: SpaceSpec, b: SpaceSpec):
    if not a.same_as(b):
        raise SpaceMismatchError(f"space mismatch: {a} vs {b}")


def _add_tails(a: Tail | None, b: Tail | None) -> Tail | None:
    if a is None or a.vanishes:
        return b
    if b is None or b.vanishes:
        return a
    if not (a.known and b.known):
        return Tail(kind="unspecified")
    if a.exponent != b.exponent:
        raise ValueError("cannot add diagonal tails with different decay exponents")
    return Tail(a.exponent, a.scale + b.scale)


def norm(v: Vector) -> float:
    q = v.space.q
    if math.isinf(q):
        return float(np.max(np.abs(v.coords), initial=0.0))
    return float(np.linalg.norm(v.coords, ord=q)) if v.space.dim else 0.0


def lq_norms(rows: np.ndarray, q: float) -> np.ndarray:
    """Row-wise ell^q norms of a 2-d array."""
    if math.isinf(q):
        return np.max(np.abs(rows), axis=-1, initial=0.0)
    if q == 2.0:
        return np.sqrt(np.einsum("...i,...i->...", rows, rows))
    return np.sum(np.abs(rows) ** q, axis=-1) ** (1.0 / q)


def dual_pairing(v: Vector, vstar: Vector) -> float:
    if v.space.dim != vstar.space.dim:
        raise SpaceMismatchError(
            f"dimension mismatch in pairing: {v.space.dim} vs {vstar.space.dim}")
    if not math.isclose(vstar.space.q, conjugate_exponent(v.space.q), rel_tol=1e-12):
        raise SpaceMismatchError(
            f"exponents {v.space.q} and {vstar.space.q} are not conjugate")
    return float(v.coords @ vstar.coords)


def apply(T: Operator, v: Vector) -> Vector:
    if not T.domain.same_as(v.space):
        raise SpaceMismatchError(f"operator domain {T.domain} does not contain {v.space}")
    return Vector(T.matrix @ v.coords, T.codomain)


def adjoint(T: Operator) -> Operator:
    # diagonal tails are self-adjoint
    return Operator(T.matrix.T.copy(), T.codomain.dual(), T.domain.dual(), T.tail)


def compose(A: Operator, B: Operator) -> Operator:
    """A @ B, with diagonal tails multiplied."""
    _require_same(A.domain, B.codomain)
    tail = None
    if A.tail is not None and B.tail is not None:
        if A.tail.known and B.tail.known:
            tail = Tail(A.tail.exponent + B.tail.exponent, A.tail.scale * B.tail.scale)
        else:
            tail = Tail(kind="unspecified")
    return Operator(A.matrix @ B.matrix, B.domain, A.codomain, tail)


class HSNorm(NamedTuple):
    value: float          # +inf when the tail diverges
    finite: bool
    tail_bound: float     # integral upper bound on the squared tail contribution
    truncated_value: float


def hilbert_schmidt_norm(T: Operator) -> HSNorm:
    if not (T.domain.is_hilbert and T.codomain.is_hilbert):
        raise SpaceMismatchError("Hilbert-Schmidt norm needs exponent-2 domain and codomain")
    trunc2 = float(np.sum(T.matrix ** 2))
    if T.tail is None or T.tail.vanishes:
        return HSNorm(math.sqrt(trunc2), True, 0.0, math.sqrt(trunc2))
    if not T.tail.known:
        return HSNorm(math.nan, False, math.inf, math.sqrt(trunc2))
    start = T.tail_start
    tail2 = tail_power_sum(T.tail, start, 2.0)
    bound = tail_integral_bound(T.tail, start, 2.0)
    if math.isinf(tail2):
        return HSNorm(math.inf, False, math.inf, math.sqrt(trunc2))
    return HSNorm(math.sqrt(trunc2 + tail2), True, bound, math.sqrt(trunc2))


def _normalize_rows(X: np.ndarray, q: float) -> np.ndarray:
    n = lq_norms(X, q)
    n[n == 0] = 1.0
    return X / n[:, None]


def _dual_directions(dim: int, q_dual: float, rng: np.random.Generator,
                     n_random: int) -> np.ndarray:
    """Deterministic grid (coordinates, signed pairs) plus random points on the
    unit sphere of ell^{q_dual}."""
    dirs = [np.eye(dim)]
    if dim > 1:
        i, j = np.triu_indices(dim, 1)
        for sign in (1.0, -1.0):
            P = np.zeros((len(i), dim))
            P[np.arange(len(i)), i] = 1.0
            P[np.arange(len(i)), j] = sign
            dirs.append(P)
    dirs.append(rng.standard_normal((n_random, dim)))
    return _normalize_rows(np.vstack(dirs), q_dual)


def weak_p_norm(U: np.ndarray, p: float, domain: SpaceSpec,
                rng: np.random.Generator | None = None, n_random: int = 256) -> float:
    """sup_{|u*| <= 1} (sum_k |<u_k, u*>|^p)^(1/p) for the rows u_k of U.

    Exact (largest singular value) on Hilbert domains with p = 2; otherwise a
    search over a grid plus random directions followed by a few steps of the
    nonlinear power iteration.
    """
    if U.size == 0:
        return 0.0
    if domain.is_hilbert and p == 2.0:
        return float(np.linalg.norm(U, 2))
    rng = rng if rng is not None else np.random.default_rng(0)
    qd = conjugate_exponent(domain.q)
    X = _dual_directions(U.shape[1], qd, rng, n_random)
    vals = np.sum(np.abs(X @ U.T) ** p, axis=1)
    best = int(np.argmax(vals))
    x, fbest = X[best], vals[best]
    if 1.0 < qd < math.inf:
        # ascent on f(x) = sum |<u_k, x>|^p over the ell^qd sphere
        for _ in range(50):
            a = U @ x
            g = U.T @ (np.sign(a) * np.abs(a) ** (p - 1))
            if not np.any(g):
                break
            y = np.sign(g) * np.abs(g) ** (1.0 / (qd - 1.0))
            y = y / np.linalg.norm(y, qd)
            fy = float(np.sum(np.abs(U @ y) ** p))
            if fy <= fbest * (1 + 1e-13):
                break
            x, fbest = y, fy
    return float(fbest ** (1.0 / p))


def p_summing_lower_bound(T: Operator, p: float, trials: int = 64, seed: int = 0) -> float:
    """Randomized lower estimate of the p-summing norm pi_p(T) of the truncation.

    Families tried: the coordinate basis, the right singular vectors, and
    ``trials`` random Gaussian families of size 1..2*dim.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    M = T.matrix
    d_in = M.shape[1]
    if d_in == 0 or not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    q_out = T.codomain.q
    families = [np.eye(d_in), np.linalg.svd(M)[2]]
    for _ in range(trials):
        n = int(rng.integers(1, 2 * d_in + 1))
        families.append(rng.standard_normal((n, d_in)))
    best = 0.0
    for U in families:
        num = np.sum(lq_norms(U @ M.T, q_out) ** p) ** (1.0 / p)
        den = weak_p_norm(U, p, T.domain, rng)
        if den > 0:
            best = max(best, float(num / den))
    return best


def op_norm(T: Operator, seed: int = 0, n_random: int = 512) -> float:
    """Operator norm ||T||_{domain -> codomain}, tail included.

    Exact spectral norm between Hilbert spaces; otherwise a lower estimate
    from a direction search on the unit sphere of the domain.
    """
    M = T.matrix
    if M.size == 0:
        trunc = 0.0
    elif T.domain.is_hilbert and T.codomain.is_hilbert:
        trunc = float(np.linalg.norm(M, 2))
    else:
        rng = np.random.default_rng(seed)
        X = _dual_directions(M.shape[1], T.domain.q, rng, n_random)
        trunc = float(np.max(lq_norms(X @ M.T, T.codomain.q)))
    if T.tail is None or T.tail.vanishes:
        return trunc
    if not T.tail.known or T.tail.exponent < 0:
        return math.inf
    return max(trunc, abs(T.tail.scale) * (T.tail_start + 1) ** -T.tail.exponent)


def vectors_from_rows(rows: np.ndarray, space: SpaceSpec) -> list[Vector]:
    return [Vector(r, space) for r in np.atleast_2d(rows)]


def rows_of(vectors: Sequence[Vector]) -> np.ndarray:
    if not vectors:
        return np.zeros((0, 0))
    return np.vstack([v.coords for v in vectors])


def materialize(T: Operator, d: int) -> Operator:
    """Square d x d truncation of T, filling diagonal tail entries past the
    stored matrix.  The tail is kept for the part beyond d."""
    d0_out, d0_in = T.matrix.shape
    M = np.zeros((d, d))
    r, c = min(d, d0_out), min(d, d0_in)
    M[:r, :c] = T.matrix[:r, :c]
    if T.tail is not None and T.tail.known:
        k = np.arange(T.tail_start + 1, d + 1)
        M[k - 1, k - 1] = T.tail.scale * k.astype(float) ** -T.tail.exponent
    return Operator(M, replace(T.domain, dim=d), replace(T.codomain, dim=d), T.tail)


def is_diagonal(T: Operator) -> bool:
    M = T.matrix
    return not np.any(M[~np.eye(*M.shape, dtype=bool)])
