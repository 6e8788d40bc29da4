"""Figure rendering for the CLI report path.

Each subcommand gets one PNG rendered from the same rows that go into its
CSV artifacts.  Rendering is best-effort presentation; the CSV/plot-data
files remain the canonical outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 130


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path.name


def render_simulate(rows: list[dict], outdir: Path) -> str:
    labels = [r["pattern"] for r in rows]
    exact = [r["exact_prob"] for r in rows]
    emp = [r["empirical_freq"] for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(x - 0.2, exact, width=0.4, label="exact")
    ax.bar(x + 0.2, emp, width=0.4, label="sampled")
    ax.set_xticks(x, labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("probability")
    ax.set_title("trajectory pattern distribution")
    ax.legend()
    return _save(fig, outdir / "patterns.png")


def render_snr(rows: list[dict], outdir: Path) -> str:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for mode, marker in (("terminal", "o"), ("dense", "s")):
        xs = [r["analytic_snr"] for r in rows if r["mode"] == mode and r["empirical_snr"] is not None]
        ys = [r["empirical_snr"] for r in rows if r["mode"] == mode and r["empirical_snr"] is not None]
        if xs:
            ax.loglog(xs, ys, marker, ms=4, alpha=0.7, label=mode)
    lims = ax.get_xlim()
    ax.plot(lims, lims, "k--", lw=0.8)
    ax.set_xlabel("analytic SNR")
    ax.set_ylabel("Monte Carlo SNR")
    ax.legend()
    return _save(fig, outdir / "snr.png")


def render_train(rows: list[dict], H: int, outdir: Path) -> str:
    updates = [r["update"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(updates, [r["s_H"] for r in rows])
    ax1.set_xlabel("update")
    ax1.set_ylabel("end-to-end success")
    for j in range(1, H + 1):
        ax2.plot(updates, [r[f"q_{j}"] for r in rows], label=f"depth {j}", lw=1)
    ax2.set_xlabel("update")
    ax2.set_ylabel("step success")
    ax2.legend(fontsize=7)
    return _save(fig, outdir / "trace.png")


def render_compare(rows: list[dict], outdir: Path) -> str:
    regimes = sorted({r["regime"] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, regime in enumerate(regimes):
        vals = [
            r["trajectories_to_target"]
            for r in rows
            if r["regime"] == regime and r["trajectories_to_target"] is not None
        ]
        if vals:
            ax.scatter([i] * len(vals), vals, s=18)
        fails = sum(1 for r in rows if r["regime"] == regime and r["trajectories_to_target"] is None)
        if fails:
            ax.annotate(f"{fails} fail", (i, 1.0), ha="center", fontsize=7)
    ax.set_yscale("log")
    ax.set_xticks(range(len(regimes)), regimes, rotation=20)
    ax.set_ylabel("trajectories to target")
    return _save(fig, outdir / "compare.png")


def render_scaling(rows: list[dict], outdir: Path) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy([r["H"] for r in rows], [r["N_star"] for r in rows], "o-")
    ax.set_xlabel("horizon H")
    ax.set_ylabel("required batch N*")
    ax.set_title(rows[0]["regime"] if rows else "")
    return _save(fig, outdir / "scaling.png")


def render_compose(records: list[dict], outdir: Path) -> str:
    heights = [r["graph_stats"]["height"] for r in records]
    widths = [r["graph_stats"]["width"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.hist(heights, bins=range(min(heights), max(heights) + 2), align="left")
    ax1.set_xlabel("graph height")
    ax2.hist(widths, bins=range(min(widths), max(widths) + 2), align="left")
    ax2.set_xlabel("graph width")
    return _save(fig, outdir / "compose.png")


def render_tradeoff(points: list[dict], uniform: dict, outdir: Path) -> str:
    fig, ax = plt.subplots(figsize=(5, 4))
    feas = [p for p in points if p["reached_target"]]
    infeas = [p for p in points if not p["reached_target"]]
    if feas:
        ax.scatter(
            [p["distribution_cost"] for p in feas],
            [p["step_tokens"] for p in feas],
            c="tab:green", s=20, label="feasible",
        )
    if infeas:
        ax.scatter(
            [p["distribution_cost"] for p in infeas],
            [p["step_tokens"] for p in infeas],
            c="tab:red", s=20, marker="x", label="infeasible",
        )
    ax.scatter([uniform["distribution_cost"]], [uniform["step_tokens"]],
               c="k", s=60, marker="*", label="uniform")
    ax.set_xlabel("distribution cost per sample")
    ax.set_ylabel("step-tokens used")
    ax.legend(fontsize=8)
    return _save(fig, outdir / "tradeoff.png")
