"""Report figures written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# PNG metadata carries the matplotlib version by default; drop it so
# figures are stable across installs
_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_sweep(series, path, vanilla=None, title="accuracy vs. EPR"):
    """``series`` maps a label to rows ``(epr, mean, std)``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, rows in series.items():
        x = [r[0] for r in rows]
        m = [r[1] for r in rows]
        s = [r[2] for r in rows]
        ax.errorbar(x, m, yerr=s, marker="o", ms=4, capsize=3, label=label)
    if vanilla is not None:
        ax.axhline(vanilla, color="0.4", ls="--", lw=1, label="vanilla")
    ax.set_xlabel("EPR")
    ax.set_ylabel("test accuracy")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_arms(summary, path, title="test accuracy by arm"):
    """Bar chart of ``{arm: (mean, std, n)}``."""
    arms = list(summary)
    fig, ax = plt.subplots(figsize=(4, 3.2))
    means = [summary[a][0] for a in arms]
    stds = [summary[a][1] for a in arms]
    ax.bar(arms, means, yerr=stds, capsize=4, color=["0.6", "tab:green", "tab:red"][: len(arms)])
    lo = min(means) - 3 * max(max(stds), 0.005)
    ax.set_ylim(max(0.0, lo), min(1.0, max(means) + 3 * max(max(stds), 0.005)))
    ax.set_ylabel("test accuracy")
    ax.set_title(title)
    return _save(fig, path)


def plot_solver_trace(trace, path):
    it = [r["iter"] for r in trace]
    fig, axes = plt.subplots(3, 1, figsize=(5, 6), sharex=True)
    axes[0].plot(it, [r["L"] for r in trace], lw=1)
    axes[0].set_ylabel("L(A)")
    axes[1].plot(it, [r["gap"] for r in trace], lw=1)
    axes[1].axhline(0.0, color="0.5", lw=0.8)
    axes[1].set_ylabel("gap")
    axes[2].plot(it, [r["lambda"] for r in trace], lw=1)
    axes[2].set_ylabel("lambda")
    axes[2].set_xlabel("inner iteration")
    return _save(fig, path)


def plot_attribute_delta(delta, path, title="attribute change after perturbation"):
    keys = list(delta)
    vals = [delta[k] for k in keys]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(keys, vals, color=["tab:red" if v < 0 else "tab:blue" for v in vals])
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.set_ylabel("after - before")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=45)
    return _save(fig, path)


def plot_training(history, path):
    ep = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ep, [h["loss"] for h in history], label="loss")
    ax2 = ax.twinx()
    ax2.plot(ep, [h["train_acc"] for h in history], color="tab:green", label="train acc")
    ax2.plot(ep, [h["val_acc"] for h in history], color="tab:orange", label="val acc")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2.set_ylabel("accuracy")
    ax2.legend(frameon=False, fontsize=8, loc="center right")
    return _save(fig, path)
