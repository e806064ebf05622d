"""Static figures for CLI reports, rendered with the Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so identical runs give identical files
_METADATA = {"png": {"Software": None}, "pdf": {"Creator": None, "Producer": None, "CreationDate": None}, "svg": {"Date": None}}


def _save(fig, path):
    ext = str(path).rsplit(".", 1)[-1].lower()
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_METADATA.get(ext))
    plt.close(fig)


def _sizes(weights):
    return 20 + 200 * np.asarray(weights) / max(float(np.max(weights)), 1e-300)


def plot_curve(curve, path, title: str = ""):
    """Atom trajectories in the first two coordinates, start and end marked."""
    fig, ax = plt.subplots(figsize=(5, 5))
    pos = curve.positions
    y_of = (lambda p: p[..., 1]) if curve.dimension > 1 else (lambda p: np.zeros(p.shape[:-1]))
    for i in range(curve.n):
        ax.plot(pos[:, i, 0], y_of(pos[:, i]), lw=1)
    ax.scatter(pos[0, :, 0], y_of(pos[0]), s=_sizes(curve.weights), marker="o", facecolors="none", edgecolors="k", label="start")
    ax.scatter(pos[-1, :, 0], y_of(pos[-1]), s=_sizes(curve.weights), marker="x", c="k", label="end")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1" if curve.dimension > 1 else "")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


def plot_plan(plan, path, title: str = ""):
    """Source and target atoms joined by segments whose width follows the plan mass."""
    fig, ax = plt.subplots(figsize=(5, 5))
    x, y = plan.source.atoms, plan.target.atoms
    pad = (lambda p: p[:, :2]) if x.shape[1] > 1 else (lambda p: np.column_stack([p[:, 0], np.zeros(len(p))]))
    xs, ys = pad(x), pad(y)
    gmax = float(plan.gamma.max())
    for i, j in plan.support():
        ax.plot([xs[i, 0], ys[j, 0]], [xs[i, 1], ys[j, 1]], c="0.5", lw=0.5 + 3 * plan.gamma[i, j] / gmax)
    ax.scatter(xs[:, 0], xs[:, 1], s=_sizes(plan.source.weights), c="tab:blue", label="source", zorder=3)
    ax.scatter(ys[:, 0], ys[:, 1], s=_sizes(plan.target.weights), c="tab:red", label="target", zorder=3)
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title or f"W2^2 = {plan.cost:.6g}")
    _save(fig, path)


def plot_refinement(rows, path, title: str = ""):
    """Green residual against the time grid size on log axes."""
    fig, ax = plt.subplots(figsize=(5, 4))
    n = np.array([r["n_t"] for r in rows], dtype=float)
    res = np.array([r["residual"] for r in rows], dtype=float)
    floor = np.finfo(float).eps
    ax.loglog(n, np.maximum(res, floor), "o-", label="residual")
    if res[0] > floor:
        ax.loglog(n, res[0] * (n[0] / n) ** 2, "k--", lw=0.8, label="slope -2")
    ax.set_xlabel("time intervals")
    ax.set_ylabel("|surface - boundary|")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


def plot_inner_edges(report, path, title: str = ""):
    """Inner-edge values ``l(r)`` with their bound against ``r``."""
    fig, ax = plt.subplots(figsize=(5, 4))
    rs = sorted(report.inner_values)
    ax.plot(rs, [report.inner_values[r] for r in rs], "o-", label="l(r)")
    ax.plot(rs, [report.inner_bounds[r] for r in rs], "k--", label="bound")
    ax.plot(rs, [-report.inner_bounds[r] for r in rs], "k--")
    ax.axhline(report.value, c="tab:red", lw=0.8, label="loop integral")
    ax.set_xlabel("r")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


def plot_series(times, values, path, ylabel: str = "", title: str = ""):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(times, values)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    _save(fig, path)
