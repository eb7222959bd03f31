"""Figure rendering for the command-line report path.

Everything here takes already-computed data (records, sweeps, pmfs) and
writes a PNG next to the delimited output. Uses the Agg backend so the CLI
works headless; the library proper never imports this module.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_records", "render_sweep", "render_pmf", "render_compare",
           "render_trajectory"]


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_records(records, epsilon: float, path: str | Path) -> Path:
    """Per-index error scatter with the tolerance band."""
    fig, ax = plt.subplots(figsize=(7, 4))
    idx = np.array([r.index for r in records])
    err = np.array([r.estimate - r.truth for r in records])
    jitter = (np.arange(len(idx)) % 17 - 8) / 40.0
    ax.scatter(idx + jitter, err, s=6, alpha=0.4, linewidths=0)
    ax.axhline(epsilon, color="tab:red", lw=1, ls="--")
    ax.axhline(-epsilon, color="tab:red", lw=1, ls="--")
    ax.axhline(0.0, color="black", lw=0.5)
    ax.set_xlabel("observable index")
    ax.set_ylabel("estimate - truth")
    ax.set_title("estimation errors across trials")
    ax.set_xticks(sorted(set(int(i) for i in idx)))
    return _finish(fig, path)


def render_sweep(sweep, path: str | Path) -> Path:
    """Required copies vs family size on log-log axes, with the fitted slope."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ms = [pt.m for pt in sweep.points if pt.converged]
    ns = [pt.n_required for pt in sweep.points if pt.converged]
    ax.loglog(ms, ns, "o-", label="measured")
    if sweep.slope is not None and len(ms) >= 2:
        anchor = ns[0] / ms[0] ** sweep.slope
        xs = np.linspace(min(ms), max(ms), 50)
        label = f"fit slope {sweep.slope:.2f}"
        if sweep.slope_stderr is not None:
            label += f" +- {sweep.slope_stderr:.2f}"
        ax.loglog(xs, anchor * xs**sweep.slope, "--", label=label)
    ax.set_xlabel("family size m")
    ax.set_ylabel("copies n to reach target rate")
    ax.set_title(f"copy scaling at k={sweep.k}")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def render_pmf(support: Sequence, probs: Sequence[float], title: str,
               path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    support = np.asarray(support, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if len(support) > 80:
        ax.plot(support, probs, lw=1)
    else:
        ax.bar(support, probs, width=0.8 * min(np.diff(support), default=1.0))
    ax.set_xlabel("value")
    ax.set_ylabel("probability")
    ax.set_title(title)
    return _finish(fig, path)


def render_compare(compare, path: str | Path) -> Path:
    """Overlayed exact laws from the two engines plus their difference."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6, 5), sharex=True,
                                   height_ratios=[3, 1])
    x = np.asarray(compare.support, dtype=float)
    ax0.plot(x, compare.pmf_full, "o-", ms=3, label="brute force")
    ax0.plot(x, compare.pmf_kickback, "x--", ms=4, label="kick averaged")
    ax0.set_ylabel("probability")
    ax0.set_title(f"round {compare.round_index} outcome law, tv={compare.tv:.3e}")
    ax0.legend()
    ax1.plot(x, compare.pmf_full - compare.pmf_kickback, lw=1)
    ax1.set_ylabel("difference")
    ax1.set_xlabel("ancilla outcome")
    return _finish(fig, path)


def render_trajectory(rows: Sequence[dict], path: str | Path) -> Path:
    """Cumulative drift bound along a trajectory, with per-round kicks."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    rounds = [row["round"] for row in rows]
    ax0.plot(rounds, [row["cum_deviation"] for row in rows], "o-", ms=3)
    ax0.set_ylabel("accumulated drift bound")
    lambdas = [row["lambda"] for row in rows]
    ax1.bar(rounds, [0.0 if v is None or v == "" else float(v) for v in lambdas])
    ax1.set_ylabel("kick weight")
    ax1.set_xlabel("round")
    return _finish(fig, path)
