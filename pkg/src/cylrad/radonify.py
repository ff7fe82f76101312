"""Diagnostics for theta-radonifying operators T: H -> V.

Analytic criteria (finite rank, Hilbert-Schmidt, stable ell^q summability,
compound Poisson reduction) decide membership; Monte Carlo partial sums only
annotate a trend and on their own never give more than ``Inconclusive``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from . import cylaw, parallel
from .cylaw import CompoundPoisson, Gaussian, GaussianJump, Law, Pushforward, Stable
from .errors import CriterionInapplicable, MomentError, SpaceMismatchError
from .spaces import (Operator, Vector, adjoint, compose, conjugate_exponent,
                     hilbert_schmidt_norm, is_diagonal, lq_norms, materialize, op_norm,
                     p_summing_lower_bound, tail_integral_bound, tail_power_sum, unit)

TREND_THRESHOLD = -0.1
GROWTH_THRESHOLD = 0.05

ANCHORS = {
    "finite_rank": "finite-dim",
    "hilbert_schmidt": "Thm-HS",
    "stable_sequence": "Ex-stable-lq",
    "compound_poisson": "Thm-CP",
    "partial_sum": "Prop-partial-sum",
    "summing_inclusion": "Prop-summing",
    "norm_domination": "Prop-norm-domination",
    "trivial": "zero-operator",
}


class Verdict(str, Enum):
    RADONIFIES = "Radonifies"
    DOES_NOT_RADONIFY = "DoesNotRadonify"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class RadonVerdict:
    verdict: Verdict
    method: str
    evidence: dict = field(default_factory=dict)

    @property
    def radonifies(self) -> bool:
        return self.verdict is Verdict.RADONIFIES

    def row(self) -> dict:
        ev = self.evidence
        return {
            "criterion": self.method,
            "verdict": self.verdict.value,
            "value": ev.get("value", ""),
            "tail_bound": ev.get("tail_bound", ""),
            "trend_exponent": ev.get("trend_exponent", ""),
            "n": ev.get("n", ""),
            "seed": ev.get("seed", ""),
            "anchor": ANCHORS.get(self.method, ""),
        }


VERDICT_COLUMNS = ("criterion", "verdict", "value", "tail_bound", "trend_exponent",
                   "n", "seed", "anchor")


def write_verdicts_csv(verdicts: Sequence[RadonVerdict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, VERDICT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for v in verdicts:
            w.writerow({k: _fmt(x) for k, x in v.row().items()})


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


# ---------------------------------------------------------------- helpers


def _check_moments(theta: Law, p: float) -> None:
    if not cylaw.has_weak_moments(theta, p):
        raise MomentError(f"moments do not exist: p = {p} is not below the stable index")


def _check_domain(T: Operator, theta: Law) -> None:
    if not T.domain.same_as(theta.carrier):
        raise SpaceMismatchError(f"operator domain {T.domain} is not the carrier of the law")


def image_samples(T: Operator, theta: Law, n: int, seed: int) -> np.ndarray:
    """n draws of T(Theta) in V, coordinate i being Theta(T* e_i)."""
    _check_domain(T, theta)
    rows = T.matrix  # row i = T* e_i
    funcs = [Vector(r, theta.carrier.dual()) for r in rows]
    if not funcs:
        return np.zeros((n, 0))
    return cylaw.sample_projection(theta, funcs, n, seed).values


def _moment_with_jackknife(x: np.ndarray, p: float) -> tuple[float, float]:
    """(mean(x))^(1/p) and its jackknife standard error."""
    n = len(x)
    s = float(x.sum())
    est = (s / n) ** (1.0 / p)
    loo = np.maximum((s - x) / (n - 1), 0.0) ** (1.0 / p)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return est, se


# ---------------------------------------------------------------- norms


class RadNorms(NamedTuple):
    norm_p: float
    norm_p_se: float
    op_norm: float
    rad_norm: float
    truncated: bool


def rad_norm_estimate(T: Operator, theta: Law, p: float, n: int, seed: int) -> RadNorms:
    """||T||_p = (E||T(Theta)||^p)^(1/p) by Monte Carlo, plus ||T||_{H->V}.

    The sampled image lives at the codomain truncation; ``truncated`` flags a
    symbolic tail that the estimate does not see.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    _check_moments(theta, p)
    Y = image_samples(T, theta, n, seed)
    x = lq_norms(Y, T.codomain.q) ** p
    norm_p, se = _moment_with_jackknife(x, p)
    on = op_norm(T)
    return RadNorms(norm_p, se, on, norm_p + on, T.has_infinite_part)


class Domination(NamedTuple):
    holds: bool
    lhs: float
    rhs: float
    stderr: float


def _isometric(theta) -> Law:
    law = getattr(theta, "law", theta)
    if isinstance(law, Gaussian) or (isinstance(law, Pushforward) and law.finite_cotype):
        return law
    raise CriterionInapplicable("norm domination needs a canonical law Theta_X")


def norm_domination_check(T: Operator, theta_X, p: float, n: int, seed: int,
                          k_sigma: float = 3.0) -> Domination:
    """||T||_{H->V} <= ||T||_p for p >= 2, tested within k_sigma standard errors."""
    if p < 2:
        raise CriterionInapplicable("norm domination requires p >= 2")
    norms = rad_norm_estimate(T, _isometric(theta_X), p, n, seed)
    holds = norms.op_norm <= norms.norm_p + k_sigma * norms.norm_p_se
    return Domination(holds, norms.op_norm, norms.norm_p, norms.norm_p_se)


# ---------------------------------------------------------------- analytic criteria


def finite_rank_verdict(T: Operator) -> RadonVerdict | None:
    if T.tail is not None and not T.tail.vanishes:
        return None
    rank = int(np.linalg.matrix_rank(T.matrix)) if T.matrix.size else 0
    return RadonVerdict(Verdict.RADONIFIES, "finite_rank", {"value": float(rank)})


def hilbert_schmidt_criterion(T: Operator, theta: Law, p: float = 2.0) -> RadonVerdict:
    if not T.codomain.is_hilbert or not T.domain.is_hilbert:
        raise CriterionInapplicable("criterion inapplicable: codomain is not a Hilbert space")
    if not cylaw.finite_cotype(theta):
        raise CriterionInapplicable("criterion inapplicable: law not of finite cotype")
    _check_moments(theta, p)
    hs = hilbert_schmidt_norm(T)
    ev = {"value": hs.value, "tail_bound": hs.tail_bound,
          "truncated_value": hs.truncated_value}
    if T.tail is not None and not T.tail.known:
        return RadonVerdict(Verdict.INCONCLUSIVE, "hilbert_schmidt", ev)
    verdict = Verdict.RADONIFIES if hs.finite else Verdict.DOES_NOT_RADONIFY
    return RadonVerdict(verdict, "hilbert_schmidt", ev)


def stable_seq_criterion(FTstar: Operator, alpha: float, q: float, p: float) -> RadonVerdict:
    """sum_k (sum_j |<F T* e_j, e_k>|^{q'})^{alpha/q'} < infinity, V = ell^q.

    Hypothesis alpha < q' (the Gaussian boundary alpha = q' = 2 is admitted).
    """
    if q < 2:
        raise CriterionInapplicable("outside example hypothesis: need q >= 2")
    qd = conjugate_exponent(q)
    if alpha >= qd and not (alpha == 2.0 and qd == 2.0):
        raise CriterionInapplicable(
            f"outside example hypothesis: alpha = {alpha} >= q' = {qd}")
    if p >= alpha and alpha < 2.0:
        raise MomentError(f"moments do not exist: p = {p} >= alpha = {alpha}")
    M = np.abs(FTstar.matrix)
    rows = np.sum(M ** qd, axis=1) ** (alpha / qd)
    trunc = float(rows.sum())
    ev = {"truncated_value": trunc}
    tail = FTstar.tail
    if tail is None or tail.vanishes:
        ev.update(value=trunc, tail_bound=0.0)
        return RadonVerdict(Verdict.RADONIFIES, "stable_sequence", ev)
    if not tail.known:
        half = len(rows) // 2
        growing = bool(rows[half:].sum() > 1e-12 * max(trunc, 1e-300))
        ev.update(value=trunc, tail_bound=math.inf, trend="growing" if growing else "flat")
        return RadonVerdict(Verdict.INCONCLUSIVE, "stable_sequence", ev)
    start = FTstar.tail_start
    tsum = tail_power_sum(tail, start, alpha)
    ev.update(value=trunc + tsum, tail_bound=tail_integral_bound(tail, start, alpha))
    verdict = Verdict.RADONIFIES if math.isfinite(tsum) else Verdict.DOES_NOT_RADONIFY
    return RadonVerdict(verdict, "stable_sequence", ev)


def compound_poisson_reduction(theta: CompoundPoisson, T: Operator, p: float = 2.0
                               ) -> RadonVerdict:
    """Rad^p(theta) = Rad^p(nu): decide through the jump law."""
    if not isinstance(theta, CompoundPoisson):
        raise TypeError("compound_poisson_reduction needs a compound Poisson law")
    ev = {"c": theta.c}
    if isinstance(theta.jump, GaussianJump):
        inner = analytic_verdict(T, Gaussian(theta.jump.space), p)
        if inner is None:
            inner = RadonVerdict(Verdict.INCONCLUSIVE, "none")
        ev.update(inner.evidence)
        ev.update(delegated_to=f"gaussian:{inner.method}", c=theta.c)
        return RadonVerdict(inner.verdict, "compound_poisson", ev)
    # finitely supported jump law: a genuine measure with all moments
    ev.update(delegated_to="genuine-measure", value=0.0)
    return RadonVerdict(Verdict.RADONIFIES, "compound_poisson", ev)


def analytic_verdict(T: Operator, theta: Law, p: float = 2.0) -> RadonVerdict | None:
    """First applicable analytic criterion, or None."""
    fr = finite_rank_verdict(T)
    if fr is not None:
        return fr
    if isinstance(theta, CompoundPoisson):
        return compound_poisson_reduction(theta, T, p)
    if cylaw.finite_cotype(theta) and T.codomain.is_hilbert and T.domain.is_hilbert:
        return hilbert_schmidt_criterion(T, theta, p)
    if isinstance(theta, Stable) and T.codomain.q >= 2:
        qd = conjugate_exponent(T.codomain.q)
        if theta.alpha < qd or (theta.alpha == 2.0 and qd == 2.0):
            return stable_seq_criterion(compose(theta.F, adjoint(T)), theta.alpha,
                                        T.codomain.q, p)
    return None


# ---------------------------------------------------------------- partial sums


def _loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.log(np.asarray(x, float))
    y = np.asarray(y, float)
    if np.any(y <= 0):
        return -math.inf if np.all(y <= 0) else math.nan
    return float(np.polyfit(x, np.log(y), 1)[0])


def default_schedule(dim: int, start: int = 4) -> list[int]:
    cuts, c = [], start
    while c <= dim:
        cuts.append(c)
        c *= 2
    return cuts or [dim]


def partial_sum_diagnostic(T: Operator, theta: Law, p: float = 2.0,
                           schedule: Sequence[int] | None = None, n: int = 10_000,
                           seed: int = 0, basis: np.ndarray | None = None,
                           analytic: bool = True, threshold: float = TREND_THRESHOLD
                           ) -> RadonVerdict:
    """Monte Carlo partial sums S_n = sum_{k<=n} (Theta e_k) T e_k.

    Records E||S_n||^p and E||S_{n_{j+1}} - S_{n_j}||^p along the schedule.
    The trend is ``cauchy-like`` when the increments decay with a fitted
    log-log exponent below -0.1, ``diverging`` when E||S_n||^p keeps growing,
    ``flat`` otherwise.  ``basis`` (columns orthonormal in H) replaces the
    coordinate basis.  Analytic criteria override the Monte Carlo verdict.
    """
    _check_domain(T, theta)
    _check_moments(theta, p)
    d = T.domain.dim
    schedule = list(schedule) if schedule is not None else default_schedule(d)
    if any(c < 1 or c > d for c in schedule) or sorted(set(schedule)) != schedule:
        raise ValueError("cut points must be increasing and within the domain truncation")
    B = np.eye(d) if basis is None else np.asarray(basis, float)
    nK = schedule[-1]
    H = theta.carrier
    funcs = [Vector(B[:, k], H.dual()) for k in range(nK)]
    Z = cylaw.sample_projection(theta, funcs, n, seed).values
    TB = T.matrix @ B[:, :nK]
    q = T.codomain.q
    sums = {c: Z[:, :c] @ TB[:, :c].T for c in schedule}
    moments = [float(np.mean(lq_norms(sums[c], q) ** p)) for c in schedule]
    increments = [float(np.mean(lq_norms(sums[b] - sums[a], q) ** p))
                  for a, b in zip(schedule, schedule[1:])]
    trend_exp = _loglog_slope(schedule[1:], increments) if len(increments) >= 2 else math.nan
    growth = _loglog_slope(schedule, moments) if len(schedule) >= 2 else math.nan
    if trend_exp < threshold:
        trend = "cauchy-like"
    elif growth > GROWTH_THRESHOLD:
        trend = "diverging"
    else:
        trend = "flat"
    ev = {"schedule": schedule, "moments": moments, "increments": increments,
          "trend": trend, "trend_exponent": trend_exp, "growth_exponent": growth,
          "n": n, "seed": seed, "value": moments[-1]}
    if analytic:
        av = analytic_verdict(T, theta, p)
        if av is not None and av.verdict is not Verdict.INCONCLUSIVE:
            ev.update(override=av.method, override_evidence=av.evidence,
                      value=av.evidence.get("value", ""),
                      tail_bound=av.evidence.get("tail_bound", ""))
            return RadonVerdict(av.verdict, "partial_sum", ev)
    return RadonVerdict(Verdict.INCONCLUSIVE, "partial_sum", ev)


def diagnose(T: Operator, theta: Law, p: float = 2.0, n: int = 2000, seed: int = 0
             ) -> RadonVerdict:
    """Analytic criteria first; otherwise a Monte Carlo partial-sum trend."""
    av = analytic_verdict(T, theta, p)
    if av is not None:
        return av
    if T.domain.dim == 0:
        return RadonVerdict(Verdict.INCONCLUSIVE, "partial_sum", {"n": 0, "seed": seed})
    return partial_sum_diagnostic(T, theta, p, n=n, seed=seed, analytic=False)


def trend_contradicts(trend: str, verdict: Verdict) -> bool:
    return ((trend == "cauchy-like" and verdict is Verdict.DOES_NOT_RADONIFY)
            or (trend == "diverging" and verdict is Verdict.RADONIFIES))


# ---------------------------------------------------------------- inclusion and moments


class SummingProbe(NamedTuple):
    consistent: bool
    verdict: Verdict
    certificate_finite: bool | None
    lower_bounds: list
    growing: bool


def summing_inclusion_probe(T: Operator, theta: Law, p: float = 2.0, trials: int = 16,
                            seed: int = 0, dims: Sequence[int] | None = None) -> SummingProbe:
    """Consistency of the verdict with Pi^p being contained in Rad^p.

    A finite pi_p certificate exists in closed form for diagonal operators
    between Hilbert spaces (pi_p and the Hilbert-Schmidt norm are then
    equivalent).  Lower bounds for pi_p are recorded on growing truncations.
    """
    _check_moments(theta, p)
    av = analytic_verdict(T, theta, p)
    verdict = av.verdict if av is not None else Verdict.INCONCLUSIVE
    cert = None
    if T.domain.is_hilbert and T.codomain.is_hilbert and is_diagonal(T):
        cert = hilbert_schmidt_norm(T).finite
    d = T.domain.dim
    dims = list(dims) if dims is not None else sorted({max(1, d // 4), max(1, d // 2), d,
                                                       2 * d, 4 * d})
    square = T.domain.dim == T.codomain.dim
    lbs = []
    for k in dims:
        Tk = materialize(T, k) if square else T
        lbs.append(p_summing_lower_bound(Tk, p, trials, parallel.derive_seed(seed, k)))
    growing = len(lbs) > 1 and lbs[-1] > 1.5 * lbs[0]
    consistent = not (cert is True and verdict is Verdict.DOES_NOT_RADONIFY)
    return SummingProbe(consistent, verdict, cert, lbs, growing)


class MomentInequality(NamedTuple):
    holds: bool
    lhs: float
    rhs: float
    stderr: float


def cp_moment_inequality(theta: CompoundPoisson, T: Operator, p: float, n: int, seed: int,
                         k_sigma: float = 3.0) -> MomentInequality:
    """E||X_1||^p <= (e^c / c) E||Y||^p with X_1 ~ nu o T^-1, Y ~ theta o T^-1."""
    if not isinstance(theta, CompoundPoisson):
        raise TypeError("needs a compound Poisson law")
    _check_domain(T, theta)
    rng = parallel.rng_of(parallel.seed_seq(seed, 1))
    jumps = cylaw.draw_jump_sums(theta.jump, np.ones(n, dtype=np.int64), rng)
    x1 = lq_norms(jumps @ T.matrix.T, T.codomain.q) ** p
    plain = CompoundPoisson(theta.c, theta.jump)
    y = lq_norms(image_samples(T, plain, n, parallel.derive_seed(seed, 2)), T.codomain.q) ** p
    factor = math.exp(theta.c) / theta.c
    lhs, rhs = float(x1.mean()), factor * float(y.mean())
    se = math.sqrt(x1.var(ddof=1) / n + factor ** 2 * y.var(ddof=1) / n)
    return MomentInequality(lhs <= rhs + k_sigma * se, lhs, rhs, se)


def unit_basis(theta: Law) -> list[Vector]:
    H = theta.carrier
    return [unit(H, k) for k in range(H.dim)]
