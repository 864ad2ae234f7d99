"""Figure rendering for CLI reports.

All renderers write PNG files next to the delimited output and return
the written path.  Rendering is opt-in; importing this module pulls in
matplotlib with the file-only Agg backend, so no display is needed.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

DPI = 150


def _finish(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def passage_histogram(times: list[float], out_dir: str) -> str:
    """Histogram of sampled passage times with the sample mean marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = min(80, max(10, int(math.sqrt(len(times)))))
    ax.hist(times, bins=bins, color="#4878a8", edgecolor="white", linewidth=0.3)
    mean = sum(times) / len(times)
    ax.axvline(mean, color="#c44e52", linestyle="--", linewidth=1.2,
               label=f"mean {mean:.4g}")
    ax.set_xlabel("passage time")
    ax.set_ylabel("count")
    ax.legend(frameon=False)
    return _finish(fig, out_dir, "passage_times.png")


def replica_exponents(replica_gammas: list[float], gamma: float, se: float,
                      out_dir: str) -> str:
    """Per-replica exponent estimates around the pooled value."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(1, len(replica_gammas) + 1)
    ax.plot(list(xs), replica_gammas, "o", color="#4878a8", label="replica")
    ax.axhline(gamma, color="#c44e52", linewidth=1.2, label=f"pooled {gamma:.5g}")
    if se > 0:
        ax.axhspan(gamma - 3 * se, gamma + 3 * se, color="#c44e52", alpha=0.15,
                   label="pooled ±3 SE")
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("replica")
    ax.set_ylabel("top exponent estimate")
    ax.legend(frameon=False)
    return _finish(fig, out_dir, "classification.png")


def velocity_bars(report: dict, out_dir: str) -> str:
    """Predicted speed beside the measured one with a 3 SE error bar."""
    fig, ax = plt.subplots(figsize=(5, 4))
    labels, values, errs = [], [], []
    if report.get("speed") is not None:
        labels.append("predicted")
        values.append(report["speed"])
        errs.append(0.0)
    if report.get("empirical_speed") is not None:
        labels.append("measured")
        values.append(report["empirical_speed"])
        errs.append(3 * (report.get("empirical_se") or 0.0))
    ax.bar(labels, values, yerr=errs, capsize=6,
           color=["#4878a8", "#6aa84f"][: len(labels)])
    ax.set_ylabel("long-run speed")
    ax.set_title(report.get("regime", ""))
    return _finish(fig, out_dir, "velocity.png")


def decomposition_ecdf(direct: list[float], reconstructed: list[float],
                       out_dir: str) -> str:
    """Overlaid empirical CDFs of direct and reconstructed samples."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for sample, label, color in (
        (direct, "direct", "#4878a8"),
        (reconstructed, "reconstructed", "#c44e52"),
    ):
        xs = sorted(sample)
        n = len(xs)
        ys = [(k + 1) / n for k in range(n)]
        ax.step(xs, ys, where="post", label=label, color=color, linewidth=1.0)
    ax.set_xlabel("passage time")
    ax.set_ylabel("empirical CDF")
    ax.legend(frameon=False)
    return _finish(fig, out_dir, "decomposition_ecdf.png")


def trajectories(paths: list, out_dir: str) -> str:
    """Step plot of the simulated trajectories (state against time)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for k, record in enumerate(paths):
        ts = [0.0] + [t for t, _ in record.events]
        ss = [record.start_state] + [s for _, s in record.events]
        ax.step(ts, ss, where="post", linewidth=0.8, alpha=0.8,
                label=f"replica {k}" if len(paths) <= 8 else None)
    ax.set_xlabel("time")
    ax.set_ylabel("state")
    if len(paths) <= 8:
        ax.legend(frameon=False, fontsize=8)
    return _finish(fig, out_dir, "trajectories.png")
