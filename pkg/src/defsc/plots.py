"""Figure rendering for emitted reports.

Produces a small set of PNGs next to the delimited output: a scaling plot
of the statistic medians when several sizes were run, an envelope-ratio
histogram, and (for solver-only reports) the reconstructed density profile.
"""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _ok_rows(report: dict):
    return [r for r in report["rows"] if r.get("status") == "ok"]


def _fig_scaling(report: dict, out_dir: str):
    rows = [r for r in _ok_rows(report) if r.get("stat", "") != "" and r.get("n", 0)]
    sizes = sorted({int(r["n"]) for r in rows})
    if len(sizes) < 2:
        return None
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    lams = sorted({float(r["lam"]) for r in rows})
    for lam in lams:
        med = []
        for n in sizes:
            vals = [float(r["stat"]) for r in rows if int(r["n"]) == n and float(r["lam"]) == lam]
            med.append(np.median(vals))
        ax.loglog(sizes, med, "o-", label=f"coupling {lam:g}")
        bounds = []
        for n in sizes:
            vals = [float(r["bound"]) for r in rows
                    if int(r["n"]) == n and float(r["lam"]) == lam and r.get("bound", "") != ""]
            if vals:
                bounds.append(np.median(vals))
        if len(bounds) == len(sizes):
            ax.loglog(sizes, bounds, "--", color=ax.lines[-1].get_color(), alpha=0.6)
    ax.set_xlabel("matrix size N")
    ax.set_ylabel("median statistic")
    ax.set_title(f"{report['spec']['kind']}: statistic vs N (dashed: envelope)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "scaling.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _fig_ratio_hist(report: dict, out_dir: str):
    vals = [float(r["ratio"]) for r in _ok_rows(report) if r.get("ratio", "") != ""]
    if not vals:
        return None
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.hist(vals, bins=min(40, max(8, len(vals) // 5)), color="#4878a8", alpha=0.85)
    ax.axvline(1.0, color="k", linestyle="--", linewidth=1)
    ax.set_xlabel("statistic / predicted envelope")
    ax.set_ylabel("rows")
    ax.set_title(f"{report['spec']['kind']}: envelope ratios")
    fig.tight_layout()
    path = os.path.join(out_dir, "ratio_hist.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _fig_density(report: dict, out_dir: str):
    # FreeConvOnly rows carry Im m on a grid; plot the profile at the
    # smallest eta per coupling.
    rows = [r for r in _ok_rows(report) if r.get("im_m", "") != ""]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    by_lam = defaultdict(list)
    for r in rows:
        by_lam[float(r["lam"])].append(r)
    for lam, group in sorted(by_lam.items()):
        eta_min = min(float(r["eta"]) for r in group)
        pts = sorted(
            (float(r["e"]), float(r["im_m"]) / np.pi)
            for r in group
            if float(r["eta"]) == eta_min
        )
        if len(pts) < 2:
            continue
        es, dens = zip(*pts)
        ax.plot(es, dens, "-", label=f"coupling {lam:g}, eta {eta_min:g}")
    ax.set_xlabel("E")
    ax.set_ylabel("Im m / pi")
    ax.set_title("spectral density profile")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "density.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(report: dict, out_dir: str) -> list:
    """Render the applicable figures; returns the files written."""
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for builder in (_fig_scaling, _fig_ratio_hist, _fig_density):
        path = builder(report, out_dir)
        if path:
            files.append(path)
    return files
