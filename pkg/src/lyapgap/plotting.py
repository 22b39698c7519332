"""Render PNG figures from the files written by an experiment run."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_gap_traces(rows, path):
    """Mean gap rate against n for each (eps, k), on a log n axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = {}
    for r in rows:
        if r["gap_k"] == "":
            continue
        groups.setdefault((float(r["eps"]), int(r["k"])), {}).setdefault(int(r["n"]), []).append(float(r["gap_k"]))
    for (eps, k), by_n in sorted(groups.items()):
        n = np.array(sorted(by_n))
        ax.plot(n, [np.mean(by_n[x]) for x in n], label=f"eps={eps:g}, k={k}")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("log(s_k/s_{k+1}) / n")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_eps_fit(summary, path):
    """Final mean gap rate against eps^2 with the fitted line per k."""
    fig, ax = plt.subplots(figsize=(6, 4))
    rows = [r for r in summary["rows"] if "gap_rate" in r]
    for k in sorted({r["k"] for r in rows}):
        sub = [r for r in rows if r["k"] == k]
        x = np.array([r["eps"] for r in sub]) ** 2
        y = np.array([r["gap_rate"] for r in sub])
        eb = ax.errorbar(x, y, yerr=[r["gap_stderr"] for r in sub], fmt="o", label=f"k={k}")
        fit = summary.get("eps_squared_fit", {}).get(str(k))
        if fit:
            xs = np.linspace(0, x.max(), 50)
            ax.plot(xs, fit["slope"] * xs + (y.mean() - fit["slope"] * x.mean()), "--", color=eb[0].get_color())
    ax.set_xlabel("eps^2")
    ax.set_ylabel("gap rate")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_gapest(rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    m = [float(r["m"]) for r in rows]
    dev = [float(r["deviation"]) for r in rows]
    err = [float(r["stderr"]) for r in rows]
    ax.errorbar(m, dev, yerr=err, fmt="o-")
    ax.axhline(0.0, color="grey", lw=0.5)
    ax.set_xlabel("m  (log10 condition number / 2)")
    ax.set_ylabel("gap average - log(s_k/s_{k+1})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_figures(output_dir):
    """Render whatever figures fit the run in ``output_dir``; return their paths."""
    out = Path(output_dir)
    with open(out / "summary.json") as fh:
        summary = json.load(fh)
    made = []
    if summary["csv"] == "traces.csv":
        made.append(plot_gap_traces(_read_csv(out / "traces.csv"), out / "gap_traces.png"))
        if summary.get("eps_squared_fit"):
            made.append(plot_eps_fit(summary, out / "eps_squared_fit.png"))
    elif summary["csv"] == "gapest.csv":
        made.append(plot_gapest(_read_csv(out / "gapest.csv"), out / "gapest.png"))
    return made
