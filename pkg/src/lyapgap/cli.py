"""Command line entry point: ``lyapgap run | fit | selftest``."""

import argparse
import json
import os
import math
import sys

import numpy as np

from . import entropy, experiments, flags, matcore, noise, products
from .errors import ConditioningError, ConfigError, InputError, NumericalAbort, UnderflowError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _cmd_run(args):
    cfg = experiments.load_config(args.config)
    jobs = args.jobs
    if jobs is None or os.environ.get("LYAPGAP_JOBS"):
        jobs = experiments.default_jobs()
    summary = experiments.run(cfg, jobs=jobs, plot=args.plot)
    print(f"experiment={summary['experiment']} digest={summary['config_digest']} "
          f"output={cfg.output_dir} wall_time_s={summary['wall_time_s']:.2f}")
    for r in summary.get("rows", []):
        if "gap_rate" in r:
            print(f"eps={r['eps']:g} k={r['k']} gap_rate={r['gap_rate']:.6g} stderr={r['gap_stderr']:.2g}")
    for k, fit in summary.get("eps_squared_fit", {}).items():
        print(f"k={k} slope={fit['slope']:.4f} r_squared={fit['r_squared']:.4f}")
    if "max_abs_deviation" in summary:
        print(f"max_abs_deviation={summary['max_abs_deviation']:.4f} "
              f"slope_vs_m={summary.get('deviation_slope_vs_m', float('nan')):+.4f}")
    for name, c in summary.get("checks", {}).items():
        print(f"{name}: {c['passed']}/{c['total']} passed")
    for p in summary.get("figures", []):
        print(f"figure {p}")
    return EXIT_OK


def _cmd_fit(args):
    try:
        with open(args.summary) as fh:
            summary = json.load(fh)
        rows = [r for r in summary["rows"] if "gap_rate" in r]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read summary: {exc}") from exc
    print("k,slope,r_squared")
    for k in sorted({r["k"] for r in rows}):
        slope, r2 = experiments.fit_eps_squared_slope([r for r in rows if r["k"] == k])
        print(f"{k},{slope:.6g},{r2:.6g}")
    return EXIT_OK


def _selftest_checks(rng):
    def svd_reconstruct():
        A = rng.standard_normal((5, 5))
        return np.allclose(matcore.svd(A).reconstruct(), A, atol=1e-12)

    def log_det_sum():
        A = rng.standard_normal((4, 4))
        return math.isclose(np.sum(np.log(matcore.singular_values(A))), np.linalg.slogdet(A)[1],
                            rel_tol=1e-10, abs_tol=1e-10)

    def wedge_norm():
        A = rng.standard_normal((4, 4))
        s = matcore.singular_values(A)
        return math.isclose(matcore.singular_values(matcore.exterior_power(A, 2))[0], s[0] * s[1], rel_tol=1e-10)

    def gapcomp():
        D = np.diag(np.sort(np.exp(rng.uniform(-2, 2, 4)))[::-1])
        return all(flags.gapcomp_check(D, flags.sample_miniflag_point(4, 2, rng)) for _ in range(50))

    def hat_bounds():
        B = rng.standard_normal((200, 3, 3))
        return noise.hat_bound_violations(B) == 0

    def kl_nonnegative():
        a = entropy.CircleMeasure.from_masses(rng.dirichlet(np.ones(64)))
        b = entropy.CircleMeasure.from_masses(rng.dirichlet(np.ones(64)))
        return entropy.kl_divergence(a, b) >= 0

    def b22_pinned():
        return abs(entropy.b22_family_entropy(1.0, 0.5) - 0.042791) < 1e-5

    def qr_vs_exact():
        F = rng.standard_normal((20, 3, 3))
        st = products.ProductState.identity(3, track_triangular=True)
        for A in F:
            st = products.advance(st, A)
        exact = products.exact_product_svd(F)
        return abs(products.qr_log_singular_values(st)[0] - exact[0]) < 1e-8

    return [svd_reconstruct, log_det_sum, wedge_norm, gapcomp, hat_bounds, kl_nonnegative,
            b22_pinned, qr_vs_exact]


def _cmd_selftest(args):
    rng = np.random.default_rng(args.seed)
    failed = 0
    for check in _selftest_checks(rng):
        ok = bool(check())
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {check.__name__}")
    return EXIT_OK if failed == 0 else 1


def build_parser():
    p = argparse.ArgumentParser(prog="lyapgap", description="Gap growth experiments for perturbed matrix products.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: CPU count; LYAPGAP_JOBS overrides)")
    r.add_argument("--plot", action="store_true", help="also render PNG figures into the output directory")
    r.set_defaults(func=_cmd_run)

    f = sub.add_parser("fit", help="fit gap rate against eps^2 from a summary.json")
    f.add_argument("summary")
    f.set_defaults(func=_cmd_fit)

    s = sub.add_parser("selftest", help="quick invariant checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalAbort, UnderflowError, ConditioningError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
