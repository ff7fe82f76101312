"""Infinitely divisible cylindrical laws.

A law is known through its finite projections: for functionals h_1..h_m the
sampler draws the joint vector (Theta h_1, ..., Theta h_m) exactly at the
truncation, and :func:`analytic_cf` gives the characteristic function.

Samplers draw their randomness (Gaussian coordinates, stable coordinates,
Poisson counts, jumps) independently of the functionals, so for a fixed seed
the projection is linear in the functional.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from . import parallel
from .errors import MomentError, SpaceMismatchError
from .spaces import Operator, SpaceSpec, Vector, compose, identity

# ---------------------------------------------------------------- jump laws


@dataclass(frozen=True, eq=False)
class PointMass:
    g: Vector

    @property
    def space(self) -> SpaceSpec:
        return self.g.space


@dataclass(frozen=True, eq=False)
class GaussianJump:
    """Jumps distributed by the canonical Gaussian law on a Hilbert space."""

    space: SpaceSpec

    def __post_init__(self):
        if not self.space.is_hilbert:
            raise SpaceMismatchError("Gaussian jumps need a Hilbert space")


@dataclass(frozen=True, eq=False)
class FiniteMixture:
    weights: np.ndarray
    points: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if len(w) != len(self.points) or len(w) == 0:
            raise ValueError("need one weight per point")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        spaces = {(p.space.dim, p.space.q) for p in self.points}
        if len(spaces) != 1:
            raise SpaceMismatchError("mixture points must share a space")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def space(self) -> SpaceSpec:
        return self.points[0].space

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([p.coords for p in self.points])


JumpLaw = Union[PointMass, GaussianJump, FiniteMixture]


def jump_mean(jump: JumpLaw) -> np.ndarray:
    if isinstance(jump, PointMass):
        return jump.g.coords.copy()
    if isinstance(jump, GaussianJump):
        return np.zeros(jump.space.dim)
    return jump.weights @ jump.matrix


def jump_second_moment(jump: JumpLaw) -> np.ndarray:
    """E[g g^T] as a d x d matrix."""
    if isinstance(jump, PointMass):
        return np.outer(jump.g.coords, jump.g.coords)
    if isinstance(jump, GaussianJump):
        return np.eye(jump.space.dim)
    P = jump.matrix
    return (P.T * jump.weights) @ P


def _jump_phi(jump: JumpLaw, Hc: np.ndarray) -> np.ndarray:
    if isinstance(jump, PointMass):
        return np.exp(1j * (Hc @ jump.g.coords))
    if isinstance(jump, GaussianJump):
        return np.exp(-0.5 * np.einsum("ij,ij->i", Hc, Hc))
    return np.exp(1j * (Hc @ jump.matrix.T)) @ jump.weights


def draw_jump_sums(jump: JumpLaw, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sum of ``counts`` i.i.d. jumps, elementwise over the counts array.

    Returns an array of shape ``counts.shape + (d,)``.  Gaussian sums use the
    exact identity  g_1 + ... + g_N  =d  sqrt(N) g.
    """
    counts = np.asarray(counts)
    d = jump.space.dim
    if isinstance(jump, PointMass):
        return counts[..., None] * jump.g.coords
    if isinstance(jump, GaussianJump):
        z = rng.standard_normal(counts.shape + (d,))
        return np.sqrt(counts)[..., None] * z
    per_atom = rng.multinomial(counts, jump.weights)
    return per_atom @ jump.matrix


# ---------------------------------------------------------------- laws


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Canonical Gaussian cylindrical law on a Hilbert space."""

    carrier: SpaceSpec

    def __post_init__(self):
        if not self.carrier.is_hilbert:
            raise SpaceMismatchError("the canonical Gaussian law lives on a Hilbert space")


@dataclass(frozen=True, eq=False)
class Stable:
    """Symmetric alpha-stable law with characteristic function exp(-||F h||_alpha^alpha)."""

    alpha: float
    F: Operator

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")

    @property
    def carrier(self) -> SpaceSpec:
        return self.F.domain


@dataclass(frozen=True, eq=False)
class CompoundPoisson:
    """Compound Poisson law with intensity c and jump law nu.

    ``compensated=True`` subtracts the mean c*E[g], giving the exponent
    c * int (e^{i<h,g>} - 1 - i<h,g>) nu(dg).
    """

    c: float
    jump: JumpLaw
    compensated: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"intensity c must be positive, got {self.c}")

    @property
    def carrier(self) -> SpaceSpec:
        return self.jump.space


@dataclass(frozen=True, eq=False)
class Pushforward:
    """Image law theta o T^{-1}: projections at v* are base projections at T* v*."""

    base: "Law"
    T: Operator
    finite_cotype: bool = False

    def __post_init__(self):
        if isinstance(self.base, Pushforward):
            raise ValueError("nested pushforward; use pushforward() to compose")
        if not self.T.domain.same_as(self.base.carrier):
            raise SpaceMismatchError("operator domain differs from the base carrier")

    @property
    def carrier(self) -> SpaceSpec:
        return self.T.codomain


@dataclass(frozen=True, eq=False)
class Convolution:
    """Law of a sum of independent cylindrical variables on one carrier."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("empty convolution")
        c0 = parts[0].carrier
        if not all(p.carrier.same_as(c0) for p in parts):
            raise SpaceMismatchError("convolution parts must share a carrier")
        object.__setattr__(self, "parts", parts)

    @property
    def carrier(self) -> SpaceSpec:
        return self.parts[0].carrier


Law = Union[Gaussian, Stable, CompoundPoisson, Pushforward, Convolution]


def pushforward(law: Law, T: Operator, finite_cotype: bool = False) -> Pushforward:
    """theta o T^{-1}, composing with an existing pushforward instead of nesting."""
    if isinstance(law, Pushforward):
        return Pushforward(law.base, compose(T, law.T), finite_cotype)
    return Pushforward(law, T, finite_cotype)


def describe(law: Law) -> str:
    if isinstance(law, Gaussian):
        return f"gaussian(dim={law.carrier.dim})"
    if isinstance(law, Stable):
        return f"stable(alpha={law.alpha!r},dim={law.F.domain.dim}->{law.F.codomain.dim})"
    if isinstance(law, CompoundPoisson):
        kind = {PointMass: "point_mass", GaussianJump: "gaussian",
                FiniteMixture: "mixture"}[type(law.jump)]
        comp = ",compensated" if law.compensated else ""
        return f"compound_poisson(c={law.c!r},jump={kind}{comp})"
    if isinstance(law, Pushforward):
        return f"pushforward({describe(law.base)},{law.T.domain.dim}->{law.T.codomain.dim})"
    return "convolution(" + "+".join(describe(p) for p in law.parts) + ")"


# ---------------------------------------------------------------- moments


def centered(law: Law) -> Law:
    """The law of Theta - E[Theta] (compound Poisson parts become compensated)."""
    if isinstance(law, CompoundPoisson):
        return CompoundPoisson(law.c, law.jump, compensated=True)
    if isinstance(law, Pushforward):
        return Pushforward(centered(law.base), law.T, law.finite_cotype)
    if isinstance(law, Convolution):
        return Convolution(tuple(centered(p) for p in law.parts))
    return law


def has_weak_moments(law: Law, p: float) -> bool:
    if isinstance(law, Stable):
        return law.alpha == 2.0 or p < law.alpha
    if isinstance(law, Pushforward):
        return has_weak_moments(law.base, p)
    if isinstance(law, Convolution):
        return all(has_weak_moments(q, p) for q in law.parts)
    return True


def finite_cotype(law: Law) -> bool:
    """Declared finite-cotype flag.

    The canonical Gaussian law and compound Poisson laws with Gaussian jumps
    have E|Theta h|^2 proportional to ||h||^2 and hence cotype 2; laws built
    by the Karhunen-Loeve construction carry the flag explicitly.  Genuine
    measures (finitely supported jumps) cannot be of finite cotype.
    """
    if isinstance(law, Gaussian):
        return True
    if isinstance(law, CompoundPoisson):
        return isinstance(law.jump, GaussianJump)
    if isinstance(law, Pushforward):
        return law.finite_cotype
    return False


def functional_rows(law: Law, functionals: Sequence[Vector]) -> np.ndarray:
    dual = law.carrier.dual()
    for v in functionals:
        if not v.space.same_as(dual):
            raise SpaceMismatchError(
                f"functional in {v.space} is not in the dual of the carrier {law.carrier}")
    if not functionals:
        return np.zeros((0, law.carrier.dim))
    return np.vstack([v.coords for v in functionals])


def mean_projection(law: Law, Hc: np.ndarray) -> np.ndarray:
    """E[Theta h] for the rows h of Hc."""
    Hc = np.atleast_2d(Hc)
    if isinstance(law, (Gaussian, Stable)):
        if isinstance(law, Stable) and law.alpha <= 1.0:
            raise MomentError("stable laws with alpha <= 1 have no mean")
        return np.zeros(len(Hc))
    if isinstance(law, CompoundPoisson):
        if law.compensated:
            return np.zeros(len(Hc))
        return law.c * (Hc @ jump_mean(law.jump))
    if isinstance(law, Pushforward):
        return mean_projection(law.base, Hc @ law.T.matrix)
    return sum(mean_projection(p, Hc) for p in law.parts)


def covariance_gram(law: Law, Hc: np.ndarray) -> np.ndarray:
    """Centered covariance  Cov(Theta h_i, Theta h_j)  for the rows of Hc."""
    Hc = np.atleast_2d(Hc)
    if isinstance(law, Gaussian):
        return Hc @ Hc.T
    if isinstance(law, Stable):
        if law.alpha < 2.0:
            raise MomentError("no weak second moments: stable law with alpha < 2")
        A = Hc @ law.F.matrix.T
        return 2.0 * A @ A.T
    if isinstance(law, CompoundPoisson):
        return law.c * Hc @ jump_second_moment(law.jump) @ Hc.T
    if isinstance(law, Pushforward):
        return covariance_gram(law.base, Hc @ law.T.matrix)
    return sum(covariance_gram(p, Hc) for p in law.parts)


# ---------------------------------------------------------------- characteristic functions


def log_cf(law: Law, Hc: np.ndarray) -> np.ndarray:
    """Logarithm of the characteristic function at each row of Hc."""
    Hc = np.atleast_2d(np.asarray(Hc, float))
    if isinstance(law, Gaussian):
        return -0.5 * np.einsum("ij,ij->i", Hc, Hc) + 0j
    if isinstance(law, Stable):
        Fh = Hc @ law.F.matrix.T
        return -np.sum(np.abs(Fh) ** law.alpha, axis=1) + 0j
    if isinstance(law, CompoundPoisson):
        inner = _jump_phi(law.jump, Hc) - 1.0
        if law.compensated:
            inner = inner - 1j * (Hc @ jump_mean(law.jump))
        return law.c * inner
    if isinstance(law, Pushforward):
        return log_cf(law.base, Hc @ law.T.matrix)
    return sum(log_cf(p, Hc) for p in law.parts)


def analytic_cf_rows(law: Law, Hc: np.ndarray) -> np.ndarray:
    return np.exp(log_cf(law, Hc))


def analytic_cf(law: Law, h: Vector) -> complex:
    Hc = functional_rows(law, [h])
    return complex(analytic_cf_rows(law, Hc)[0])


# ---------------------------------------------------------------- sampling


def standard_sas(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric alpha-stable variates, E exp(itX) = exp(-|t|^alpha).

    Chambers-Mallows-Stuck transform of a uniform angle and a unit exponential.
    """
    phi = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(phi)
    if alpha == 2.0:
        return 2.0 * np.sqrt(w) * np.sin(phi)
    return (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))


def draw_projections(law: Law, Hc: np.ndarray, ss: np.random.SeedSequence,
                     rows: int) -> np.ndarray:
    """One chunk of joint projections, shape (rows, len(Hc))."""
    if isinstance(law, Gaussian):
        xi = parallel.rng_of(ss).standard_normal((rows, law.carrier.dim))
        return xi @ Hc.T
    if isinstance(law, Stable):
        xi = standard_sas(law.alpha, (rows, law.F.codomain.dim), parallel.rng_of(ss))
        return xi @ (Hc @ law.F.matrix.T).T
    if isinstance(law, CompoundPoisson):
        rng = parallel.rng_of(ss)
        counts = rng.poisson(law.c, rows)
        out = draw_jump_sums(law.jump, counts, rng) @ Hc.T
        if law.compensated:
            out -= law.c * (Hc @ jump_mean(law.jump))
        return out
    if isinstance(law, Pushforward):
        return draw_projections(law.base, Hc @ law.T.matrix, ss, rows)
    out = np.zeros((rows, len(Hc)))
    for i, part in enumerate(law.parts):
        out += draw_projections(part, Hc, parallel.child(ss, i), rows)
    return out


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    values: np.ndarray            # n x m
    functionals: tuple
    law: object
    seed: int
    labels: tuple = ()

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels",
                               tuple(f"h{j + 1}" for j in range(self.values.shape[1])))
        object.__setattr__(self, "functionals", tuple(self.functionals))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]


def sample_projection(law: Law, functionals: Sequence[Vector], n: int, seed: int,
                      labels: Sequence[str] = ()) -> SampleMatrix:
    """n exact joint draws of (Theta h_1, ..., Theta h_m)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    Hc = functional_rows(law, functionals)
    values = parallel.stack_chunks(lambda ss, rows: draw_projections(law, Hc, ss, rows),
                                   seed, n, len(Hc))
    return SampleMatrix(values, tuple(functionals), law, seed, tuple(labels))


# ---------------------------------------------------------------- goodness of fit


def empirical_cf(samples: SampleMatrix, coeffs) -> complex:
    coeffs = np.asarray(coeffs, float)
    if coeffs.shape != (samples.m,):
        raise ValueError(f"expected {samples.m} coefficients, got {coeffs.shape}")
    return complex(np.mean(np.exp(1j * (samples.values @ coeffs))))


def _empirical_cf_rows(values: np.ndarray, Tp: np.ndarray) -> np.ndarray:
    return np.mean(np.exp(1j * (values @ Tp.T)), axis=0)


def default_tau(n: int, n_points: int) -> float:
    """4/sqrt(n) + 0.5*log(#points)/sqrt(n)."""
    return (4.0 + 0.5 * math.log(max(n_points, 1))) / math.sqrt(n)


def default_testpoints(m: int, seed: int, scales=(0.5, 1.0, 2.0), n_random: int = 8) -> np.ndarray:
    """Coordinate directions at each scale plus seeded random unit directions."""
    if m == 0:
        return np.zeros((0, 0))
    pts = [s * np.eye(m) for s in scales]
    rnd = np.random.default_rng(parallel.derive_seed(seed, 7001)).standard_normal((n_random, m))
    rnd /= np.linalg.norm(rnd, axis=1, keepdims=True)
    pts.append(rnd)
    return np.vstack(pts)


class CFDistance(NamedTuple):
    max_abs_dev: float
    tau: float
    passed: bool
    n: int
    n_points: int


def cf_distance(law: Law, samples: SampleMatrix, testpoints=None,
                tau: float | None = None) -> CFDistance:
    """max |empirical CF - analytic CF| over coefficient test points."""
    m = samples.m
    Tp = (default_testpoints(m, samples.seed) if testpoints is None
          else np.asarray(testpoints, float).reshape(-1, m) if m else np.zeros((0, 0)))
    if len(Tp) == 0 or m == 0:
        return CFDistance(0.0, 0.0 if tau is None else tau, True, samples.n, 0)
    Hc = Tp @ functional_rows(law, samples.functionals)
    dev = np.abs(_empirical_cf_rows(samples.values, Tp) - analytic_cf_rows(law, Hc))
    tau = default_tau(samples.n, len(Tp)) if tau is None else tau
    worst = float(np.max(dev))
    return CFDistance(worst, tau, worst <= tau, samples.n, len(Tp))


def cf_distance_two_sample(a: np.ndarray, b: np.ndarray, testpoints,
                           tau: float | None = None) -> CFDistance:
    """Compare the empirical CFs of two independent sample sets.

    The default tolerance is sqrt(2) times the one-sample tolerance.
    """
    Tp = np.asarray(testpoints, float)
    if Tp.size == 0:
        return CFDistance(0.0, 0.0, True, min(len(a), len(b)), 0)
    Tp = Tp.reshape(-1, a.shape[1])
    dev = np.abs(_empirical_cf_rows(a, Tp) - _empirical_cf_rows(b, Tp))
    n = min(len(a), len(b))
    tau = math.sqrt(2.0) * default_tau(n, len(Tp)) if tau is None else tau
    worst = float(np.max(dev))
    return CFDistance(worst, tau, worst <= tau, n, len(Tp))


# ---------------------------------------------------------------- infinite divisibility


def root_law(law: Law, k: int) -> Law:
    """The law whose k-fold convolution is ``law``."""
    if isinstance(law, Gaussian):
        return Pushforward(law, identity(law.carrier) * (1.0 / math.sqrt(k)))
    if isinstance(law, Stable):
        return Stable(law.alpha, law.F * k ** (-1.0 / law.alpha))
    if isinstance(law, CompoundPoisson):
        return CompoundPoisson(law.c / k, law.jump, law.compensated)
    if isinstance(law, Pushforward):
        return pushforward(root_law(law.base, k), law.T, law.finite_cotype)
    if isinstance(law, Convolution):
        return Convolution(tuple(root_law(p, k) for p in law.parts))
    raise TypeError(f"no convolution root for {type(law).__name__}")


class RootCheck(NamedTuple):
    passed: bool
    evidence: CFDistance


def convolution_root_check(law: Law, k: int, functionals: Sequence[Vector], n: int,
                           seed: int, testpoints=None, tau: float | None = None) -> RootCheck:
    """Sum k independent draws of the k-th root law and test against the law."""
    if k < 2:
        raise ValueError("k must be >= 2")
    root = root_law(law, k)
    total = None
    for i in range(k):
        s = sample_projection(root, functionals, n, parallel.derive_seed(seed, 500 + i))
        total = s.values if total is None else total + s.values
    summed = SampleMatrix(total, tuple(functionals), law, seed)
    ev = cf_distance(law, summed, testpoints, tau)
    return RootCheck(ev.passed, ev)


# ---------------------------------------------------------------- CSV


def write_samples_csv(samples: SampleMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# law={describe(samples.law) if _is_law(samples.law) else samples.law} "
                 f"seed={samples.seed} n={samples.n}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(samples.labels)
        for row in samples.values:
            w.writerow([repr(float(x)) for x in row])


def read_samples_csv(path) -> tuple[np.ndarray, list[str], str]:
    """Returns (values, labels, metadata line without the leading '#')."""
    with open(path, newline="") as fh:
        meta = fh.readline()
        if not meta.startswith("#"):
            raise ValueError("missing metadata comment line")
        rows = list(csv.reader(fh))
    labels = rows[0]
    values = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(labels))
    return values, labels, meta[1:].strip()


def _is_law(obj) -> bool:
    return isinstance(obj, (Gaussian, Stable, CompoundPoisson, Pushforward, Convolution))
