"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import filecmp
import math
import os
import time

import numpy as np
import pytest

from cylrad import cli, cylaw, karhunen, levyint, parallel, radonify
from cylrad.cylaw import (CompoundPoisson, FiniteMixture, Gaussian, GaussianJump, PointMass,
                          Stable, pushforward, sample_projection)
from cylrad.levyint import IntegrandF, LevyModel
from cylrad.radonify import Verdict
from cylrad.spaces import (Operator, Tail, Vector, diagonal, hilbert, identity, power_decay, unit,
                           zero_operator, zero_vector)

from conftest import random_psd

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
BATTERY = [round(0.3 + 0.1 * i, 1) for i in range(10)]     # s = 0.3, ..., 1.2


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail=""):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def families(d=4):
    H = hilbert(d)
    g = Vector(np.linspace(1.0, -0.5, d), H)
    return {
        "gaussian": Gaussian(H),
        "stable-0.8": Stable(0.8, identity(H)),
        "stable-1.2": Stable(1.2, identity(H)),
        "stable-1.5": Stable(1.5, identity(H)),
        "stable-2": Stable(2.0, identity(H)),
        "cp-pointmass": CompoundPoisson(2.0, PointMass(g)),
        "cp-gaussian": CompoundPoisson(1.5, GaussianJump(H)),
    }


def test_criterion_1_cf_engine(report):
    n = 100_000
    tau = 4 / math.sqrt(n) + 0.5 * math.log(20) / math.sqrt(n)
    lines, ok = [], True
    for name, law in families().items():
        t0 = time.perf_counter()
        funcs = [unit(law.carrier, k) for k in range(4)]
        s = sample_projection(law, funcs, n, 1)
        res = cylaw.cf_distance(law, s)
        dt = time.perf_counter() - t0
        good = res.passed and res.n_points == 20 and res.tau == pytest.approx(tau) and dt < 30
        ok &= good
        lines.append(f"{name}:dev={res.max_abs_dev:.4f}/tau={res.tau:.4f}/{dt:.2f}s")
    report(1, ok, " ".join(lines))
    assert ok


def test_criterion_2_karhunen_loeve(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(20):
        d = int(rng.integers(1, 17))
        Q = random_psd(rng, d, rank=int(rng.integers(1, d + 1)))
        V = hilbert(d, "V")
        f = karhunen.factorize(Operator(Q, V, V))
        err = np.max(np.abs(f.j.matrix @ f.j.matrix.T - Q)) / np.max(np.abs(Q))
        worst = max(worst, err)
    ok = worst <= 1e-10
    V = hilbert(3, "V")
    mix = FiniteMixture(np.array([0.5, 0.5]), (Vector([1.0, 0, 0.5], V), Vector([0, 1.0, -1], V)))
    sources = {"gaussian": pushforward(Gaussian(V), diagonal([1.0, 2.0, 0.5], V)),
               "cp-pointmass": CompoundPoisson(2.0, PointMass(Vector([1.0, 0.5, -0.5], V))),
               "cp-mixture": CompoundPoisson(1.0, mix)}
    detail = [f"recon={worst:.1e}"]
    for name, X in sources.items():
        f = karhunen.factorize(karhunen.covariance_of(X))
        th = karhunen.theta_from_X(X, f)
        iso = karhunen.verify_isometry(th, Vector(np.ones(f.rank), f.H), 100_000, 5)
        tps = [unit(V, k) for k in range(3)] + [Vector([1.0, -1.0, 0.5], V)]
        push = karhunen.verify_pushforward(th, f.j, X, tps, 100_000, 6)
        ok &= iso.passed and push.passed
        detail.append(f"{name}:iso={'ok' if iso.passed else 'bad'},push={push.max_abs_dev:.4f}")
    report(2, ok, " ".join(detail))
    assert ok


def test_criterion_3_infinite_divisibility(report):
    fam = families(3)
    H = hilbert(3)
    fam["cp-mixture"] = CompoundPoisson(
        2.0, FiniteMixture(np.array([0.3, 0.7]), (unit(H, 0), Vector([0, 1.0, -1.0], H))))
    fam["pushforward"] = pushforward(Gaussian(H), diagonal([1.0, 0.5, 2.0], H))
    ok, detail = True, []
    for name, law in fam.items():
        funcs = [unit(law.carrier, k) for k in range(3)]
        for k in (2, 5):
            rc = cylaw.convolution_root_check(law, k, funcs, 100_000, 3)
            ok &= rc.passed
            if not rc.passed:
                detail.append(f"{name}/k={k} dev={rc.evidence.max_abs_dev:.4f}")
    report(3, ok, f"{len(fam)} families x k in (2,5) " + " ".join(detail))
    assert ok


def test_criterion_4_radonifying_battery(report):
    H = hilbert(256)
    g = Gaussian(H)
    ok, detail = True, []
    for s in BATTERY:
        T = power_decay(H, s)
        hs = radonify.hilbert_schmidt_criterion(T, g)
        ps = radonify.partial_sum_diagnostic(T, g, 2.0, [8, 16, 32, 64, 128, 256], 10_000, 4)
        good = hs.radonifies == (s > 0.5)
        good &= not radonify.trend_contradicts(ps.evidence["trend"], hs.verdict)
        ok &= good
        detail.append(f"s={s}:{hs.verdict.value}/{ps.evidence['trend']}")
    idv = radonify.partial_sum_diagnostic(identity(H, Tail(0.0)), g, 2.0, [8, 16, 32], 10_000, 5)
    rel = [abs(m - n) / n for n, m in zip([8, 16, 32], idv.evidence["moments"])]
    ok &= max(rel) <= 0.05
    detail.append(f"identity max rel err={max(rel):.4f}")
    report(4, ok, " ".join(detail))
    assert ok


def test_criterion_5_stable_criterion(report):
    H = hilbert(64)
    alpha, q = 1.5, 2.0
    ok = True
    with pytest.raises(Exception, match="outside example hypothesis"):
        radonify.stable_seq_criterion(power_decay(H, 1.0), alpha, 3.0, 1.0)
    for s in BATTERY:
        v = radonify.stable_seq_criterion(power_decay(H, s), alpha, q, 1.0)
        ok &= v.radonifies == (s * alpha > 1)
    v = radonify.stable_seq_criterion(power_decay(H, 1.0), alpha, q, 1.0)
    K = 200_000
    k = np.arange(1, K + 1, dtype=float)
    # partial sum plus the integral tail with its first Euler-Maclaurin correction
    oracle = float(np.sum(k ** -1.5)) + 2.0 / math.sqrt(K) - 0.5 * K ** -1.5
    err = abs(v.evidence["value"] - oracle)
    ok &= err <= 1e-6
    report(5, ok, f"value={v.evidence['value']:.9f} oracle={oracle:.9f} err={err:.1e}")
    assert ok


def test_criterion_6_compound_poisson_reduction(report):
    H = hilbert(256)
    ok, detail = True, []
    ops = [power_decay(H, s) for s in BATTERY] + [identity(H, Tail(0.0))]
    for c in (0.5, 2.0):
        cp = CompoundPoisson(c, GaussianJump(H))
        for T in ops:
            a = radonify.compound_poisson_reduction(cp, T).verdict
            b = radonify.hilbert_schmidt_criterion(T, Gaussian(H)).verdict
            ok &= a is b
    H3 = hilbert(3)
    T = diagonal([1.0, 0.5, 2.0], H3)
    for c in (0.5, 2.0):
        cp = CompoundPoisson(c, PointMass(Vector([1.0, -0.5, 0.2], H3)))
        r = radonify.cp_moment_inequality(cp, T, 2.0, 100_000, 6)
        ok &= r.holds
        detail.append(f"c={c}:{r.lhs:.3f}<={r.rhs:.3f}")
    report(6, ok, " ".join(detail))
    assert ok


def test_criterion_7_norm_structure(report):
    d = 5
    V = hilbert(d, "V")
    X = Gaussian(V)
    th = karhunen.theta_from_X(X, karhunen.factorize(karhunen.covariance_of(X)))
    H = th.H
    law = th.law
    rng = np.random.default_rng(7)
    n = 20_000
    ok, worst_dom = True, -math.inf
    for i in range(10):
        S = diagonal(rng.uniform(-1, 1, d), H)
        T = diagonal(rng.uniform(-1, 1, d), H)
        seed = 100 + i
        rs = radonify.rad_norm_estimate(S, law, 2.0, n, seed)
        rt = radonify.rad_norm_estimate(T, law, 2.0, n, seed)
        rst = radonify.rad_norm_estimate(S + T, law, 2.0, n, seed)
        se = math.sqrt(rs.norm_p_se ** 2 + rt.norm_p_se ** 2 + rst.norm_p_se ** 2)
        ok &= rst.norm_p <= rs.norm_p + rt.norm_p + 3 * se
        for a in (2.0, 0.5):
            ra = radonify.rad_norm_estimate(S * a, law, 2.0, n, seed)
            ok &= abs(ra.norm_p - a * rs.norm_p) <= 3 * (ra.norm_p_se + a * rs.norm_p_se) + 1e-12
        for op in (S, T):
            dom = radonify.norm_domination_check(op, th, 2.0, n, seed)
            ok &= dom.holds
            worst_dom = max(worst_dom, dom.lhs - dom.rhs)
    report(7, ok, f"max(op_norm - norm_2)={worst_dom:.4f}")
    assert ok


def _models():
    U, K = hilbert(3, "U"), hilbert(3, "K")
    V = hilbert(3, "V")
    R = Operator(np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.2], [0.1, 0.0, 0.7]]), U, V)
    b = Vector([1.0, -0.5, 0.25], U)
    iC = Operator(np.array([[1.0, 0, 0], [0.3, 0.8, 0], [0, 0.2, 0.5]]), K, U)
    mix = FiniteMixture(np.array([0.4, 0.6]), (Vector([1.0, 0, 0.5], U), Vector([0, -1.0, 1], U)))
    lin = IntegrandF.from_function(lambda s: R * s, 1.0, 32)
    grow = IntegrandF.from_function(lambda s: R * (1 + s), 1.0, 32)
    return V, R, b, {
        "brownian": (LevyModel(zero_vector(U), iC, 0.0, None, 1.0, 32), IntegrandF.constant(R, 32)),
        "pointmass-jumps": (LevyModel(b, iC, 2.0, PointMass(Vector([0.5, 0, 1.0], U)), 1.0, 32),
                            lin),
        "gaussian-jumps": (LevyModel(b, iC, 1.5, GaussianJump(U), 1.0, 32), grow),
        "mixture-jumps": (LevyModel(b, iC, 3.0, mix, 1.0, 32), grow),
        "pure-jump": (LevyModel(zero_vector(U), zero_operator(K, U), 4.0, mix, 2.0, 32), lin),
    }


def test_criterion_8_integral_pipeline(report):
    t0 = time.perf_counter()
    V, R, b, models = _models()
    vs = [unit(V, k) for k in range(3)] + [Vector([1.0, -1.0, 0.5], V)]
    ok, detail = True, []
    for name, (m, F) in models.items():
        res = levyint.assemble_and_verify_Y(F, m, None, vs, None, 1000, 8)
        ok &= res.duality_passed and res.match.passed
        detail.append(f"{name}:dual={res.duality_error:.1e}")
    n = 100_000
    cov_ok = True
    for name in ("gaussian-jumps", "mixture-jumps"):
        m, F = models[name]
        for parts, Q in ((["W"], levyint.covariance_W(F, m).matrix),
                         (["M"], levyint.covariance_M(F, m).matrix)):
            x = levyint.cylindrical_integral(F, m, None, vs[:3], n, 9, parts=parts).values
            xc = x - x.mean(axis=0)
            for i in range(3):
                for j in range(3):
                    prod = xc[:, i] * xc[:, j]
                    cov_ok &= abs(prod.mean() - Q[i, j]) <= 6 * prod.std(ddof=1) / math.sqrt(n)
    ok &= cov_ok
    # F(s) = s R on [0, 1]: the integral of F(s) b is R b / 2
    target = 0.5 * R.matrix @ b.coords
    errs = {}
    for N in (16, 32, 64, 128):
        F = IntegrandF.from_function(lambda s: R * s, 1.0, N)
        errs[N] = float(np.linalg.norm(levyint.pettis_check(F, b, 1.0).bochner_value - target))
    ratios = [errs[N] / errs[2 * N] for N in (16, 32, 64)]
    ok &= all(abs(r - 2.0) < 1e-6 for r in ratios)
    integ = all(levyint.integrability_test(F, m).overall for m, F in models.values())
    Ut = hilbert(16, "U")
    mt = LevyModel(zero_vector(Ut), identity(Ut, Tail(0.0)), 0.0, None, 1.0, 16)
    bad = levyint.integrability_test(IntegrandF.constant(identity(Ut, Tail(0.0)), 16), mt)
    ok &= integ and not bad.overall and bad.gauss_rad.verdict is Verdict.DOES_NOT_RADONIFY
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    detail.append(f"cov={'ok' if cov_ok else 'bad'} pettis_ratios={[round(r, 6) for r in ratios]}"
                  f" identity_tail={bad.gauss_rad.verdict.value} {elapsed:.1f}s")
    report(8, ok, " ".join(detail))
    assert ok


ACCEPTANCE_CONFIGS = ["gaussian_cf.yaml", "stable_sample.yaml", "cp_kl.yaml", "radon_decay.yaml",
                      "radon_identity.yaml", "integrate.yaml", "integrate_identity_tail.yaml"]


def test_criterion_9_reproducibility(report, tmp_path):
    ok, detail = True, []
    for name in ACCEPTANCE_CONFIGS:
        cfg = os.path.join(CONFIGS, name)
        dirs = []
        codes = []
        for threads in (1, 8):
            out = tmp_path / f"{name}-{threads}"
            codes.append(cli.main(["--config", cfg, "--out", str(out), "--threads",
                                   str(threads)]))
            dirs.append(out)
        files = sorted(os.listdir(dirs[0]))
        same = files == sorted(os.listdir(dirs[1]))
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
        same &= not mismatch and not errors and codes[0] == codes[1]
        ok &= same
        detail.append(f"{name}:{len(files)} files {'identical' if same else 'DIFFER'}")
    parallel.set_threads(1)
    report(9, ok, " ".join(detail))
    assert ok
