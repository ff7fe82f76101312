"""Command-line driver.

    cylrad <subcommand> --config run.yaml [--seed S] [--out DIR] [--threads K]

Exit codes: 0 pass, 1 failed check or negative/undecided verdict, 2 usage,
configuration or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import cylaw, karhunen, levyint, parallel, radonify
from .config import SUBCOMMANDS, ConfigError, RunConfig, parse_config
from .errors import CriterionInapplicable, MomentError, NotPSDError, SpaceMismatchError
from .radonify import RadonVerdict, Verdict
from .spaces import Vector, unit

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class Report:
    """Plain-text key=value summary."""

    def __init__(self, cfg: RunConfig):
        self.lines = [f"subcommand={cfg.subcommand}", f"seed={cfg.seed}", f"n={cfg.n}"]
        for k, v in cfg.tolerances.model_dump().items():
            if v is not None:
                self.lines.append(f"override.{k}={v!r}")

    def add(self, key: str, value) -> None:
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        self.lines.append(f"{key}={value}")

    def write(self, out_dir: str) -> None:
        with open(os.path.join(out_dir, "report.txt"), "w") as fh:
            fh.write("\n".join(self.lines) + "\n")


def _functionals(cfg: RunConfig, space) -> list[Vector]:
    dual = space.dual()
    if cfg.functionals is None:
        return [unit(dual, k) for k in range(space.dim)]
    return [Vector(np.asarray(f, float), dual) for f in cfg.functionals]


def _tau(cfg: RunConfig):
    return cfg.tolerances.tau


def _testpoints(raw, m: int, seed: int):
    return cylaw.default_testpoints(m, seed) if raw is None else np.asarray(raw, float)


# ---------------------------------------------------------------- subcommands


def run_sample(cfg: RunConfig, out: str, rep: Report) -> int:
    space = cfg.space.build()
    law = cfg.law.build(space)
    funcs = _functionals(cfg, space)
    samples = cylaw.sample_projection(law, funcs, cfg.n, cfg.seed)
    cylaw.write_samples_csv(samples, os.path.join(out, "samples.csv"))
    rep.add("law", cylaw.describe(law))
    rep.add("columns", samples.m)
    return EXIT_PASS


def run_cf_check(cfg: RunConfig, out: str, rep: Report) -> int:
    space = cfg.space.build()
    law = cfg.law.build(space)
    funcs = _functionals(cfg, space)
    samples = cylaw.sample_projection(law, funcs, cfg.n, cfg.seed)
    tp = _testpoints(cfg.cf_check.testpoints, samples.m, cfg.seed)
    res = cylaw.cf_distance(law, samples, tp, _tau(cfg))
    Hc = cylaw.functional_rows(law, funcs)
    ecf = np.mean(np.exp(1j * (samples.values @ tp.T)), axis=0)
    acf = cylaw.analytic_cf_rows(law, tp @ Hc)
    with open(os.path.join(out, "cf_check.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "empirical_re", "empirical_im", "analytic_re", "analytic_im",
                    "abs_dev"])
        for i, (e, a) in enumerate(zip(ecf, acf)):
            w.writerow([i, repr(e.real), repr(e.imag), repr(a.real), repr(a.imag),
                        repr(float(abs(e - a)))])
    rep.add("law", cylaw.describe(law))
    rep.add("max_abs_dev", res.max_abs_dev)
    rep.add("tau", res.tau)
    rep.add("cf_check", "pass" if res.passed else "fail")
    ok = res.passed
    for k in cfg.cf_check.roots:
        rc = cylaw.convolution_root_check(law, k, funcs, cfg.n, cfg.seed, tp, _tau(cfg))
        rep.add(f"root_{k}", "pass" if rc.passed else "fail")
        ok = ok and rc.passed
    return EXIT_PASS if ok else EXIT_FAIL


def run_kl(cfg: RunConfig, out: str, rep: Report) -> int:
    space = cfg.space.build()
    X = cfg.law.build(space)
    Q = karhunen.covariance_of(X)
    fact = karhunen.factorize(Q)
    karhunen.write_factorization_csv(fact, out)
    rep.add("law", cylaw.describe(X))
    rep.add("rank", fact.rank)
    recon = float(np.max(np.abs(fact.j.matrix @ fact.j.matrix.T - Q.matrix), initial=0.0))
    rep.add("reconstruction_error", recon)
    if fact.rank == 0:
        return EXIT_PASS
    theta = karhunen.theta_from_X(X, fact)
    h = np.ones(fact.rank) if cfg.kl.isometry_h is None else np.asarray(cfg.kl.isometry_h)
    k_sigma = cfg.tolerances.k_sigma or 6.0
    iso = karhunen.verify_isometry(theta, Vector(h, fact.H), max(cfg.n, 1000), cfg.seed,
                                   k_sigma)
    rep.add("isometry_second_moment", iso.second_moment)
    rep.add("isometry_target", iso.target)
    rep.add("isometry", "pass" if iso.passed else "fail")
    dual = space.dual()
    raw = cfg.kl.testpoints
    tps = ([unit(dual, k) for k in range(space.dim)] if raw is None
           else [Vector(np.asarray(v, float), dual) for v in raw])
    push = karhunen.verify_pushforward(theta, fact.j, X, tps, cfg.n,
                                       parallel.derive_seed(cfg.seed, 1), _tau(cfg))
    rep.add("pushforward_max_abs_dev", push.max_abs_dev)
    rep.add("pushforward", "pass" if push.passed else "fail")
    return EXIT_PASS if iso.passed and push.passed else EXIT_FAIL


def radon_battery(T, theta, p: float, n: int, seed: int, schedule=None,
                  threshold: float = radonify.TREND_THRESHOLD) -> list[RadonVerdict]:
    """Every applicable criterion, analytic first; the first row decides."""
    verdicts = []
    chain = radonify.analytic_verdict(T, theta, p)
    if chain is not None:
        verdicts.append(chain)
    if T.domain.dim > 0:
        sched = schedule or radonify.default_schedule(T.domain.dim, min(4, T.domain.dim))
        verdicts.append(radonify.partial_sum_diagnostic(T, theta, p, sched, n, seed,
                                                        threshold=threshold))
    if not verdicts:
        verdicts.append(RadonVerdict(Verdict.INCONCLUSIVE, "partial_sum", {"n": n}))
    return verdicts


def run_radon(cfg: RunConfig, out: str, rep: Report) -> int:
    space = cfg.space.build()
    theta = cfg.law.build(space)
    codomain = cfg.radon.codomain.build() if cfg.radon.codomain is not None else space
    T = cfg.operator.build(space, codomain)
    thr = cfg.tolerances.trend_threshold
    verdicts = radon_battery(T, theta, cfg.radon.p, cfg.n, cfg.seed, cfg.radon.schedule,
                             radonify.TREND_THRESHOLD if thr is None else thr)
    radonify.write_verdicts_csv(verdicts, os.path.join(out, "verdicts.csv"))
    final = verdicts[0]
    rep.add("law", cylaw.describe(theta))
    for v in verdicts:
        rep.add(f"criterion.{v.method}", v.verdict.value)
    rep.add("verdict", final.verdict.value)
    rep.add("anchor", radonify.ANCHORS.get(final.method, ""))
    return EXIT_PASS if final.verdict is Verdict.RADONIFIES else EXIT_FAIL


def run_integrate(cfg: RunConfig, out: str, rep: Report) -> int:
    model = cfg.model.build()
    F = cfg.integrand.build(model)
    A = cfg.integrand.cells_A
    report = levyint.integrability_test(F, model, A=A, seed=cfg.seed)
    levyint.write_report_csv(report, os.path.join(out, "conditions.csv"))
    rep.lines.append(report.text().rstrip("\n"))
    if not report.overall:
        rep.add("integrable", "fail")
        return EXIT_FAIL
    V = F.V
    vstars = _functionals(cfg, V)
    tol = cfg.tolerances.duality or levyint.DUALITY_TOL
    res = levyint.assemble_and_verify_Y(F, model, A, vstars, None, cfg.n, cfg.seed, report,
                                        _tau(cfg), tol)
    levyint.write_paths_csv(res.Y, os.path.join(out, "Y.csv"),
                            f"seed={cfg.seed} n={cfg.n} cells={model.cells}")
    rep.add("duality_error", res.duality_error)
    rep.add("duality", "pass" if res.duality_passed else "fail")
    rep.add("cf_max_abs_dev", res.match.max_abs_dev)
    rep.add("cf_tau", res.match.tau)
    rep.add("cf_match", "pass" if res.match.passed else "fail")
    return EXIT_PASS if res.duality_passed and res.match.passed else EXIT_FAIL


RUNNERS = {"sample": run_sample, "cf-check": run_cf_check, "kl": run_kl,
           "radon": run_radon, "integrate": run_integrate}


def run(cfg: RunConfig, out_dir: str | None = None) -> int:
    out = out_dir or cfg.out_dir or "out"
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = Report(cfg)
    t0 = time.perf_counter()
    try:
        code = RUNNERS[cfg.subcommand](cfg, out, rep)
        rep.write(out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpaceMismatchError, MomentError, NotPSDError, CriterionInapplicable,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{cfg.subcommand}: exit {code} ({time.perf_counter() - t0:.2f}s) -> {out}")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cylrad",
                                 description="Cylindrical laws and radonifying operators")
    ap.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="YAML run description")
    ap.add_argument("--seed", type=int, help="overrides the seed in the config")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="Monte Carlo worker threads")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(text, {"seed": args.seed, "subcommand": args.subcommand})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.seed is None:
        print("config error: seed is mandatory (config or --seed)", file=sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    parallel.set_threads(args.threads)
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
