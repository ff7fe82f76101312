"""Covariance factorization Q = j j* and the canonical cylindrical variable.

For a cylindrical variable X with weak second moments and covariance Q,
:func:`factorize` produces the reproducing kernel Hilbert space H (at the
numerical rank of Q), the embedding j: H -> V, an orthonormal basis e_k of H
and functionals v_k* with j* v_k* = e_k.  The canonical variable

    Theta_X h = sum_k <e_k, h> X v_k*

is sampled by :class:`ThetaSampler` from one joint draw of (X v_1*, ..., X v_r*).
X is centered first, so compound Poisson sources enter compensated.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import cylaw
from .cylaw import CFDistance, Law, SampleMatrix
from .errors import MomentError, NotPSDError, SpaceMismatchError
from .spaces import Operator, SpaceSpec, Tail, Vector, adjoint, hilbert, unit

RANK_TOL = 1e-10
PSD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CovarianceFactorization:
    Q: Operator
    j: Operator
    basis_e: tuple
    functionals_v: tuple
    eigenvalues: np.ndarray

    @property
    def H(self) -> SpaceSpec:
        return self.j.domain

    @property
    def rank(self) -> int:
        return self.j.domain.dim

    @property
    def functional_rows(self) -> np.ndarray:
        """r x d matrix whose rows are the v_k*."""
        if not self.functionals_v:
            return np.zeros((0, self.Q.codomain.dim))
        return np.vstack([v.coords for v in self.functionals_v])


def coordinate_functionals(space: SpaceSpec) -> list[Vector]:
    dual = space.dual()
    return [unit(dual, k) for k in range(space.dim)]


def covariance_of(X: Law, functionals: Sequence[Vector] | None = None, n: int = 0,
                  seed: int = 0, method: str = "analytic") -> Operator:
    """Covariance matrix Cov(X v_i*, X v_j*).

    With the default coordinate functionals the result is Q: V* -> V.
    ``method="monte-carlo"`` estimates it from n joint samples instead.
    """
    V = X.carrier
    if functionals is None:
        functionals = coordinate_functionals(V)
    m = len(functionals)
    if not cylaw.has_weak_moments(X, 2.0):
        raise MomentError("no weak second moments")
    Hc = cylaw.functional_rows(X, functionals)
    if method == "analytic":
        C = cylaw.covariance_gram(X, Hc)
    elif method == "monte-carlo":
        if n < 2:
            raise ValueError("Monte Carlo covariance needs n >= 2")
        vals = cylaw.sample_projection(X, functionals, n, seed).values
        vals = vals - vals.mean(axis=0)
        C = vals.T @ vals / (n - 1)
    else:
        raise ValueError(f"unknown method {method!r}")
    C = 0.5 * (C + C.T)
    if m == V.dim:
        return Operator(C, V.dual(), V)
    span = hilbert(m, "span")
    return Operator(C, span, span)


def _ordered_eigenpairs(lam: np.ndarray, U: np.ndarray):
    """Decreasing eigenvalues; near-ties ordered by the index of the largest
    entry; each eigenvector signed so its largest entry is positive."""
    lead = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[lead, np.arange(U.shape[1])])
    U = U * np.where(signs == 0, 1.0, signs)
    order = sorted(range(len(lam)), key=lambda i: -lam[i])
    scale = max(abs(lam).max(initial=0.0), 1e-300)
    groups, cur = [], [order[0]] if order else []
    for i in order[1:]:
        if abs(lam[i] - lam[cur[-1]]) <= 1e-12 * scale:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    if cur:
        groups.append(cur)
    final = [i for g in groups for i in sorted(g, key=lambda i: lead[i])]
    return lam[final], U[:, final]


def factorize(Q: Operator, rank_tol: float = RANK_TOL, psd_tol: float = PSD_TOL
              ) -> CovarianceFactorization:
    """Spectral factorization Q = j j* at numerical rank.

    Eigenvalues below ``rank_tol * lambda_max`` are dropped from H.  A
    diagonal tail on Q (entries scale*k^-s) becomes a tail sqrt(scale)*k^-(s/2) on j.
    """
    M = Q.matrix
    d = M.shape[0]
    if M.shape[0] != M.shape[1]:
        raise NotPSDError("covariance matrix must be square")
    size = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M - M.T), initial=0.0) > psd_tol * size:
        raise NotPSDError("not symmetric")
    lam, U = np.linalg.eigh(0.5 * (M + M.T)) if d else (np.zeros(0), np.zeros((0, 0)))
    if lam.size and lam.min() < -psd_tol * size:
        raise NotPSDError(f"not PSD: eigenvalue {lam.min():.3e}")
    lam, U = _ordered_eigenpairs(lam, U) if d else (lam, U)
    lmax = lam.max(initial=0.0)
    keep = lam > rank_tol * lmax if lmax > 0 else np.zeros(len(lam), bool)
    lam, U = lam[keep], U[:, keep]
    r = len(lam)
    H = hilbert(r, "H")
    root = np.sqrt(lam)
    tail = None
    if Q.tail is not None:
        tail = (Tail(Q.tail.exponent / 2.0, math.sqrt(abs(Q.tail.scale)))
                if Q.tail.known else Tail(kind="unspecified"))
    j = Operator(U * root, H, Q.codomain, tail)
    V_dual = Q.codomain.dual()
    basis = tuple(unit(H, k) for k in range(r))
    funcs = tuple(Vector(U[:, k] / root[k], V_dual) for k in range(r))
    return CovarianceFactorization(Q, j, basis, funcs, lam)


def theta_law(X: Law, fact: CovarianceFactorization) -> Law:
    """Analytic law of Theta_X: the centered X pulled back along h -> sum h_k v_k*.

    Flagged as finite cotype (cotype 2 by the isometry E|Theta_X h|^2 = ||h||^2).
    """
    psi_t = Operator(fact.functional_rows, X.carrier, fact.H)
    return cylaw.pushforward(cylaw.centered(X), psi_t, finite_cotype=True)


@dataclass(frozen=True, eq=False)
class ThetaSampler:
    source: Law
    factorization: CovarianceFactorization

    @property
    def H(self) -> SpaceSpec:
        return self.factorization.H

    @property
    def law(self) -> Law:
        return theta_law(self.source, self.factorization)

    def sample(self, hs: Sequence[Vector], n: int, seed: int) -> SampleMatrix:
        """Joint draws of (Theta_X h_1, ..., Theta_X h_m)."""
        fact = self.factorization
        for h in hs:
            if not h.space.same_as(self.H):
                raise SpaceMismatchError("functional is not in H")
        coef = np.vstack([h.coords for h in hs]) if hs else np.zeros((0, fact.rank))
        if fact.rank == 0:
            return SampleMatrix(np.zeros((n, len(hs))), tuple(hs), self.law, seed)
        xs = cylaw.sample_projection(self.source, fact.functionals_v, n, seed).values
        xs = xs - cylaw.mean_projection(self.source, fact.functional_rows)
        # <e_k, h> = h_k for the canonical basis of H
        return SampleMatrix(xs @ coef.T, tuple(hs), self.law, seed)


def theta_from_X(X: Law, fact: CovarianceFactorization) -> ThetaSampler:
    return ThetaSampler(X, fact)


class IsometryCheck(NamedTuple):
    second_moment: float
    target: float
    stderr: float
    passed: bool


def verify_isometry(theta: ThetaSampler, h: Vector, n: int, seed: int,
                    k_sigma: float = 6.0) -> IsometryCheck:
    """Sample E|Theta_X h|^2 against ||h||^2, pass within k_sigma standard errors."""
    if n < 1000:
        raise ValueError("verify_isometry needs n >= 1000")
    col = theta.sample([h], n, seed).column(0)
    sq = col ** 2
    se = float(sq.std(ddof=1) / math.sqrt(n))
    target = float(h.coords @ h.coords)
    mean = float(sq.mean())
    return IsometryCheck(mean, target, se, abs(mean - target) <= k_sigma * se)


def verify_pushforward(theta: ThetaSampler, j: Operator, X: Law, testpoints: Sequence[Vector],
                       n: int, seed: int, tau: float | None = None) -> CFDistance:
    """Empirical CF of Theta_X(j* v*) against the analytic CF of (centered) X at v*."""
    if not testpoints:
        return CFDistance(0.0, 0.0 if tau is None else tau, True, n, 0)
    jt = adjoint(j)
    hs = [Vector(jt.matrix @ v.coords, theta.H) for v in testpoints]
    vals = theta.sample(hs, n, seed).values
    ecf = np.mean(np.exp(1j * vals), axis=0)
    acf = cylaw.analytic_cf_rows(cylaw.centered(X), cylaw.functional_rows(X, testpoints))
    tau = cylaw.default_tau(n, len(testpoints)) if tau is None else tau
    worst = float(np.max(np.abs(ecf - acf)))
    return CFDistance(worst, tau, worst <= tau, n, len(testpoints))


def loeve_sum(X: Law, fact: CovarianceFactorization, vstars: Sequence[Vector], n: int,
              seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(sum_k <j e_k, v*> X v_k*,  X v*) for shared draws, both centered."""
    xs = cylaw.sample_projection(X, fact.functionals_v, n, seed).values
    xs = xs - cylaw.mean_projection(X, fact.functional_rows)
    W = np.vstack([v.coords for v in vstars])
    recon = xs @ (W @ fact.j.matrix).T
    direct = cylaw.sample_projection(X, vstars, n, seed).values
    direct = direct - cylaw.mean_projection(X, W)
    return recon, direct


def write_factorization_csv(fact: CovarianceFactorization, directory) -> list[str]:
    """Q, j, basis and functionals as labeled matrices, one CSV each."""
    os.makedirs(directory, exist_ok=True)
    d = fact.Q.codomain.dim
    r = fact.rank
    v_lab = [f"v{i + 1}" for i in range(d)]
    h_lab = [f"e{k + 1}" for k in range(r)]
    tables = {
        "Q.csv": (fact.Q.matrix, v_lab, v_lab),
        "j.csv": (fact.j.matrix, v_lab, h_lab),
        "basis.csv": (np.eye(r), h_lab, h_lab),
        "functionals.csv": (fact.functional_rows, [f"vstar{k + 1}" for k in range(r)], v_lab),
    }
    paths = []
    for name, (mat, rows, cols) in tables.items():
        path = os.path.join(directory, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row"] + cols)
            for lab, row in zip(rows, mat):
                w.writerow([lab] + [repr(float(x)) for x in row])
        paths.append(path)
    return paths
