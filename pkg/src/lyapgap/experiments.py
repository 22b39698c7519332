"""Config-driven experiments: parsing, execution, CSV/JSON output, slope fits."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import hashlib
import json
import math
import os
from pathlib import Path
import time

import numpy as np
import yaml

from . import entropy, flags, matcore
from .errors import ConfigError, InputError
from .noise import NoiseSpec
from .products import (
    CyclicSequence,
    IdentitySequence,
    block_rng,
    run_product,
)

SCHEMA_VERSION = 1
EXPERIMENTS = ("gap-growth", "appendix-exponents", "gapest-bound", "entropy-identities")
TRACE_COLUMNS = ("schema_version", "experiment", "d", "k", "eps", "n", "trial", "seed",
                 "log_sk_over_n", "gap_k", "stderr")
GAPEST_COLUMNS = ("schema_version", "experiment", "d", "k", "m", "log_ratio", "gap_average",
                  "stderr", "deviation", "n_samples", "seed")
ENTROPY_COLUMNS = ("schema_version", "experiment", "check", "instance", "value", "bound", "passed", "seed")

_TOP_KEYS = {"experiment", "d", "k", "eps_list", "n", "trials", "noise", "base_sequence", "seed",
             "output_dir", "checkpoints", "renorm_every", "gapest", "entropy"}
_BASE_KEYS = {"kind", "matrix", "schedule", "norm_bound"}
_GAPEST_KEYS = {"m_values", "samples"}
_ENTROPY_KEYS = {"instances", "bins"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int
    eps_list: tuple
    n: int
    trials: int
    noise: NoiseSpec
    base_sequence: dict
    seed: int
    output_dir: str
    k: int = None
    checkpoints: object = "geometric"
    renorm_every: int = 8
    gapest: dict = field(default_factory=lambda: {"m_values": list(range(7)), "samples": 10000})
    entropy: dict = field(default_factory=lambda: {"instances": 100, "bins": 512})

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "d": self.d,
            "k": self.k,
            "eps_list": list(self.eps_list),
            "n": self.n,
            "trials": self.trials,
            "noise": self.noise.to_dict(),
            "base_sequence": self.base_sequence,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "checkpoints": self.checkpoints,
            "renorm_every": self.renorm_every,
            "gapest": self.gapest,
            "entropy": self.entropy,
        }

    def digest(self):
        """SHA-1 of the canonical JSON form; independent of key order and formatting."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha1(blob.encode()).hexdigest()

    def base(self):
        return build_base_sequence(self.base_sequence, self.d)


def _require(cond, field_name, message):
    if not cond:
        raise ConfigError(message, field=field_name)


def _int(data, key, minimum):
    v = data.get(key)
    _require(isinstance(v, int) and not isinstance(v, bool) and v >= minimum, key,
             f"must be an integer >= {minimum}, got {v!r}")
    return v


def build_base_sequence(spec, d):
    kind = spec.get("kind")
    bound = spec.get("norm_bound")
    try:
        if kind == "identity":
            return IdentitySequence(d)
        if kind == "fixed-matrix":
            return CyclicSequence([spec["matrix"]], bound)
        if kind == "rotating":
            return CyclicSequence(spec["schedule"], bound)
    except InputError as exc:
        raise ConfigError(str(exc), field="base_sequence") from exc
    raise ConfigError(f"unknown kind {kind!r}", field="base_sequence.kind")


def config_from_dict(data):
    """Validate a parsed config mapping.  Unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, sorted(unknown)[0] if unknown else "", "unknown key")
    exp = data.get("experiment")
    _require(exp in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
    d = _int(data, "d", 2)
    _require(d <= matcore.MAX_DIM, "d", f"must be at most {matcore.MAX_DIM}")
    k = data.get("k")
    if k is not None:
        _require(isinstance(k, int) and 1 <= k <= d - 1, "k", "must be an integer in [1, d-1]")
    eps_list = data.get("eps_list", [0.1])
    _require(isinstance(eps_list, list) and eps_list, "eps_list", "must be a non-empty list")
    for e in eps_list:
        _require(isinstance(e, (int, float)) and not isinstance(e, bool) and 0 <= e <= 1,
                 "eps_list", f"values must lie in [0, 1], got {e!r}")
    n = _int(data, "n", 1) if "n" in data else 1
    trials = _int(data, "trials", 1) if "trials" in data else 1
    seed = _int(data, "seed", 0)
    out = data.get("output_dir")
    _require(isinstance(out, str) and out, "output_dir", "must be a path string")

    noise_data = data.get("noise", {"family": "uniform-entries", "half_width": math.sqrt(3.0)})
    _require(isinstance(noise_data, dict), "noise", "must be a mapping")
    try:
        noise = NoiseSpec.from_dict(noise_data, dim=d)
    except (InputError, TypeError) as exc:
        raise ConfigError(str(exc), field="noise") from exc
    _require(noise.dim == d, "noise.dim", "must equal d")

    base = data.get("base_sequence", {"kind": "identity"})
    _require(isinstance(base, dict), "base_sequence", "must be a mapping")
    unknown = set(base) - _BASE_KEYS
    _require(not unknown, f"base_sequence.{sorted(unknown)[0]}" if unknown else "", "unknown key")
    seq = build_base_sequence(base, d)
    _require(seq.dim == d, "base_sequence", f"matrices must be {d}x{d}")
    if exp == "appendix-exponents":
        _require(base.get("kind") == "identity", "base_sequence.kind",
                 "appendix-exponents requires the identity base sequence")
    base = dict(base)
    if base.get("norm_bound") is None:
        base["norm_bound"] = seq.norm_bound

    checkpoints = data.get("checkpoints", "geometric")
    _require(checkpoints == "geometric" or (isinstance(checkpoints, int) and checkpoints >= 1),
             "checkpoints", "must be 'geometric' or a positive integer spacing")
    renorm = data.get("renorm_every", 8)
    _require(isinstance(renorm, int) and renorm >= 1, "renorm_every", "must be a positive integer")

    gapest = {"m_values": list(range(7)), "samples": 10000}
    g = data.get("gapest", {})
    _require(isinstance(g, dict) and not set(g) - _GAPEST_KEYS, "gapest", "unknown key or not a mapping")
    gapest.update(g)
    _require(isinstance(gapest["samples"], int) and gapest["samples"] >= 100, "gapest.samples",
             "must be an integer >= 100")
    _require(isinstance(gapest["m_values"], list) and gapest["m_values"], "gapest.m_values",
             "must be a non-empty list")

    ent = {"instances": 100, "bins": 512}
    e = data.get("entropy", {})
    _require(isinstance(e, dict) and not set(e) - _ENTROPY_KEYS, "entropy", "unknown key or not a mapping")
    ent.update(e)

    return ExperimentConfig(
        experiment=exp, d=d, k=k, eps_list=tuple(float(x) for x in eps_list), n=n, trials=trials,
        noise=noise, base_sequence=base, seed=seed, output_dir=out, checkpoints=checkpoints,
        renorm_every=renorm, gapest=gapest, entropy=ent,
    )


def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(data)


def fit_eps_squared_slope(rows):
    """Least-squares line of mean gap rate against eps^2; returns ``(slope, r_squared)``.

    ``rows`` holds ``(eps, gap_rate)`` pairs or mappings with those keys.
    """
    pts = [(r["eps"], r["gap_rate"]) if isinstance(r, dict) else tuple(r) for r in rows]
    x = np.array([p[0] for p in pts], dtype=float) ** 2
    y = np.array([p[1] for p in pts], dtype=float)
    if len(np.unique(x)) < 3:
        raise InputError("need at least 3 distinct eps values for a slope fit")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _run_trial(args):
    base_spec, d, noise, eps, n, seed, trial, checkpoints, renorm, digest = args
    base = build_base_sequence(base_spec, d)
    return run_product(base, noise, eps, n, seed, trial, checkpoints, renorm, digest)


def run_trials(cfg, eps, jobs=1):
    """All trials for one eps value, ordered by trial index."""
    digest = cfg.digest()
    tasks = [(cfg.base_sequence, cfg.d, cfg.noise, eps, cfg.n, cfg.seed, t, cfg.checkpoints,
              cfg.renorm_every, digest) for t in range(cfg.trials)]
    if jobs <= 1 or cfg.trials == 1:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, cfg.trials)) as pool:
        return list(pool.map(_run_trial, tasks))


def _stderr(x):
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def _trace_rows(cfg, eps, traces):
    rows = []
    d = cfg.d
    for ci, cp in enumerate(traces[0].checkpoints):
        ests = np.array([t.checkpoints[ci].log_s_over_n for t in traces])
        errs = [_stderr(ests[:, j]) for j in range(d)]
        for t in traces:
            c = t.checkpoints[ci]
            for k in range(1, d + 1):
                gap = repr(c.gaps[k - 1]) if k < d else ""
                rows.append([SCHEMA_VERSION, cfg.experiment, d, k, repr(eps), c.n, t.trial, t.seed,
                             repr(c.log_s_over_n[k - 1]), gap, repr(errs[k - 1])])
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _product_experiment(cfg, jobs):
    rows = []
    summary_rows = []
    d = cfg.d
    for eps in cfg.eps_list:
        traces = run_trials(cfg, eps, jobs)
        rows.extend(_trace_rows(cfg, eps, traces))
        final = np.array([t.final.log_s_over_n for t in traces])
        gaps = np.array([t.final.gaps for t in traces])
        for k in range(1, d + 1):
            row = {
                "eps": eps, "k": k, "n": traces[0].final.n,
                "exponent": float(final[:, k - 1].mean()),
                "exponent_stderr": _stderr(final[:, k - 1]),
            }
            if k < d:
                row["gap_rate"] = float(gaps[:, k - 1].mean())
                row["gap_stderr"] = _stderr(gaps[:, k - 1])
            if cfg.experiment == "appendix-exponents":
                row["predicted_exponent"] = (d - 2 * k) * eps ** 2 / 2
                row["deviation"] = row["exponent"] - row["predicted_exponent"]
                if k < d:
                    row["predicted_gap"] = eps ** 2
            summary_rows.append(row)
    fits = {}
    if len(set(cfg.eps_list)) >= 3:
        for k in range(1, d):
            slope, r2 = fit_eps_squared_slope([r for r in summary_rows if r["k"] == k])
            fits[str(k)] = {"slope": slope, "r_squared": r2}
    return TRACE_COLUMNS, rows, {"rows": summary_rows, "eps_squared_fit": fits}


def gapest_sweep(d, k, m_values, samples, seed):
    """Miniflag average vs log(s_k/s_{k+1}) for B with log10-singular values spread from m to -m."""
    out = []
    for i, m in enumerate(m_values):
        B = np.diag(10.0 ** np.linspace(m, -m, d))
        s = np.sort(np.diag(B))[::-1]
        mean, se = flags.gap_average(B, k, samples, block_rng(seed, i, 0))
        log_ratio = math.log(s[k - 1] / s[k])
        out.append({"m": m, "log_ratio": log_ratio, "gap_average": mean, "stderr": se,
                    "deviation": mean - log_ratio, "n_samples": samples})
    return out


def deviation_slope(rows):
    m = np.array([r["m"] for r in rows], dtype=float)
    dev = np.abs(np.array([r["deviation"] for r in rows]))
    return float(np.polyfit(m, dev, 1)[0])


def _gapest_experiment(cfg):
    k = cfg.k or 1
    res = gapest_sweep(cfg.d, k, cfg.gapest["m_values"], cfg.gapest["samples"], cfg.seed)
    rows = [[SCHEMA_VERSION, cfg.experiment, cfg.d, k, r["m"], repr(r["log_ratio"]), repr(r["gap_average"]),
             repr(r["stderr"]), repr(r["deviation"]), r["n_samples"], cfg.seed] for r in res]
    summary = {"rows": res, "k": k,
               "max_abs_deviation": max(abs(r["deviation"]) for r in res)}
    if len(res) >= 2:
        summary["deviation_slope_vs_m"] = deviation_slope(res)
    return GAPEST_COLUMNS, rows, summary


def _entropy_experiment(cfg):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    bins = cfg.entropy["bins"]
    rows = []
    passed = {}

    def rand_map(max_cond):
        c = math.exp(rng.uniform(0, math.log(max_cond)))
        A = matcore.rotation(rng.uniform(0, math.pi)) @ np.diag([c ** 0.5, c ** -0.5])
        return A @ matcore.rotation(rng.uniform(0, math.pi)) * rng.uniform(0.5, 2.0)

    def rand_family(max_cond):
        m = int(rng.integers(2, 9))
        return entropy.MapFamily(rng.dirichlet(np.ones(m)), [rand_map(max_cond) for _ in range(m)])

    for i in range(cfg.entropy["instances"]):
        mu = rand_family(100)
        nu = entropy.trig_measure(rng.uniform(-0.2, 0.2, (2, 2)), bins)
        base = entropy.furstenberg_entropy(mu, nu)
        worst = min(entropy.mean_relative_entropy(mu, nu, entropy.CircleMeasure(rng.dirichlet(np.ones(bins))))
                    for _ in range(20))
        ok = base <= worst + 1e-12
        rows.append(["minimizer", i, repr(base), repr(worst), ok])
        passed.setdefault("minimizer", []).append(ok)

        s = matcore.singular_values_2x2(mu.maps)
        lhs = float(np.sum(mu.weights * np.log(s[:, 0] / s[:, 1])))
        ok = entropy.distortion_vs_entropy_check(mu, bins)
        rows.append(["volume-distortion", i, repr(lhs), repr(entropy.furstenberg_entropy(mu, entropy.CircleMeasure.uniform(bins))), ok])
        passed.setdefault("volume-distortion", []).append(ok)

    for ratio in (0.01, 0.25, 0.5, 0.75, 0.99):
        h = entropy.b22_family_entropy(1.0, ratio)
        ok = h >= ratio ** 2 / 12
        rows.append(["b22-bound", ratio, repr(h), repr(ratio ** 2 / 12), ok])
        passed.setdefault("b22-bound", []).append(ok)
    rows = [[SCHEMA_VERSION, cfg.experiment, *r, cfg.seed] for r in rows]
    return ENTROPY_COLUMNS, rows, {"checks": {k: {"passed": int(sum(v)), "total": len(v)}
                                            for k, v in passed.items()}}


def run(cfg, jobs=1, plot=False):
    """Execute an experiment, write its CSV and JSON summary, and return the summary."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment in ("gap-growth", "appendix-exponents"):
        header, rows, body = _product_experiment(cfg, jobs)
        csv_name = "traces.csv"
    elif cfg.experiment == "gapest-bound":
        header, rows, body = _gapest_experiment(cfg)
        csv_name = "gapest.csv"
    else:
        header, rows, body = _entropy_experiment(cfg)
        csv_name = "entropy.csv"
    _write_csv(out / csv_name, header, rows)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
        "csv": csv_name,
        **body,
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if plot:
        from .plotting import render_figures

        summary["figures"] = [str(p) for p in render_figures(out)]
    return summary


def default_jobs():
    env = os.environ.get("LYAPGAP_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
