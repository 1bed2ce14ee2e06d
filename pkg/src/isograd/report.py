"""Figure rendering for experiment outputs.

Each CLI report path drops one PNG next to its delimited output: a log-log
query-scaling plot for sweeps, a calls-vs-dimension plot for the feasibility
micro-benchmarks, and a summary panel for the debiasing demo.  Figures are
a human-facing convenience; the CSV/JSON files remain the data contract.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def fit_loglog_slope(x, y):
    """Least-squares slope of log y on log x (ignores nonpositive pairs)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


def render_bench_figure(rows, sweep_param, fig_path):
    """Median total queries and success rate against the sweep values."""
    values = sorted({r["sweep_value"] for r in rows})
    medians, success = [], []
    for v in values:
        sub = [r for r in rows if r["sweep_value"] == v]
        medians.append(float(np.median([r["total_queries"] for r in sub])))
        success.append(float(np.mean([r["success"] for r in sub])))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(values, medians, "o-")
    if all(v > 0 for v in values) and all(m > 0 for m in medians):
        ax1.set_xscale("log")
        ax1.set_yscale("log")
        slope = fit_loglog_slope(values, medians)
        if math.isfinite(slope):
            ax1.set_title(f"median queries (log-log slope {slope:.2f})")
    else:
        ax1.set_title("median queries")
    ax1.set_xlabel(sweep_param)
    ax1.set_ylabel("total queries")
    ax2.plot(values, success, "s-")
    ax2.set_ylim(-0.05, 1.05)
    ax2.set_xlabel(sweep_param)
    ax2.set_ylabel("success rate")
    ax2.set_title("success rate")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


def render_feas_figure(rows, fig_path):
    """Oracle calls against dimension, one line per engine."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    engines = sorted({r["engine"] for r in rows})
    for engine in engines:
        sub = [r for r in rows if r["engine"] == engine]
        dims = sorted({r["d"] for r in sub})
        calls = [float(np.median([r["oracle_calls"] for r in sub if r["d"] == dd]))
                 for dd in dims]
        ax.plot(dims, calls, "o-", label=engine)
    ax.set_xlabel("dimension")
    ax.set_ylabel("oracle calls")
    ax.legend()
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


def render_mlmc_figure(summary, fig_path):
    """Bar panel of the debiasing demo summary."""
    fig, ax = plt.subplots(figsize=(6, 3.8))
    labels = ["baseline bias (max)", "debiased bias", "tail rate", "cost ratio"]
    baseline = max(abs(b) for b in summary["mean_bias_per_coord"])
    values = [baseline, summary["unbiased_mean_bias"],
              summary["tail_exceedance_rate"], summary["cost_ratio"]]
    ax.bar(labels, values, color=["#cc5544", "#4477cc", "#888888", "#55aa66"])
    ax.set_yscale("symlog", linthresh=1e-6)
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3g}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


def render_solve_figure(transcript, objective, f_star, fig_path):
    """Objective gap along the stage-one query trajectory."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    if objective is not None and f_star is not None and transcript.candidates:
        gaps = [max(objective(np.asarray(p)) - f_star, 1e-16)
                for p in transcript.candidates]
        ax.plot(range(1, len(gaps) + 1), gaps, ".-", label="candidates")
        if transcript.gap is not None:
            ax.axhline(max(transcript.gap, 1e-16), color="k", linestyle="--",
                       label="final point")
        ax.set_yscale("log")
        ax.set_xlabel("stage-one query index")
        ax.set_ylabel("objective gap")
        ax.legend()
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
