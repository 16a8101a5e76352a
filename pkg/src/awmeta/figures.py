"""Static figures rendered next to the delimited reports.

Each helper draws one PNG from already-computed report data; nothing here
recomputes results. The Agg backend keeps rendering headless and the saved
bytes independent of the host environment.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

_SAVE = {"dpi": 120, "metadata": {"Software": "awmeta"}}


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def save_curve_figure(curve, pool, path) -> Path:
    """Training loss and per-cardinality validation accuracy over outer steps."""
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = [p.step for p in curve]
    for n in sorted(pool):
        ax.plot(steps, [p.val_acc[n] for p in curve], marker="o", markersize=3, label=f"val acc {n}-way")
    ax.set_xlabel("outer step")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0.0, 1.0)
    ax2 = ax.twinx()
    ax2.plot(steps, [p.train_loss for p in curve], color="gray", linestyle="--", label="train loss")
    ax2.set_ylabel("train loss")
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, fontsize=8, loc="lower right")
    ax.set_title("training curve")
    return _finish(fig, path)


def save_report_figure(results, path) -> Path:
    """Accuracy bars (with std whiskers) per evaluated cell."""
    fig, ax = plt.subplots(figsize=(max(5, 1.1 * len(results)), 4))
    labels = [f"{r.n}-way\n{r.method}/J{r.j_repeats}" for r in results]
    ax.bar(
        range(len(results)),
        [r.acc_mean for r in results],
        yerr=[r.acc_std for r in results],
        capsize=3,
        color="#4878a8",
    )
    ax.set_xticks(range(len(results)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("evaluation accuracy")
    return _finish(fig, path)


def save_sweep_figure(cells, path) -> Path:
    """Accuracy versus repeat count, one line per ensemble method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = sorted({m for _, m in cells})
    repeats = sorted({j for j, _ in cells})
    for method in methods:
        ys = [cells[(j, method)].acc_mean for j in repeats]
        es = [cells[(j, method)].acc_std for j in repeats]
        ax.errorbar(repeats, ys, yerr=es, marker="o", capsize=3, label=method)
    ax.set_xlabel("assignment-set repeats")
    ax.set_ylabel("accuracy")
    ax.set_xticks(repeats)
    ax.legend(fontsize=8)
    ax.set_title("ensembling sweep")
    return _finish(fig, path)


def save_ablate_figure(rows, path) -> Path:
    """Accuracy versus output width, one line per evaluated cardinality.

    rows: (O, N, K, episodes, acc_mean, acc_std) tuples."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = sorted({row[1] for row in rows})
    for n in ns:
        pts = sorted((row[0], row[4], row[5]) for row in rows if row[1] == n)
        ax.errorbar(
            [p[0] for p in pts],
            [p[1] for p in pts],
            yerr=[p[2] for p in pts],
            marker="o",
            capsize=3,
            label=f"{n}-way",
        )
    ax.set_xlabel("output width O")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=8)
    ax.set_title("output-width ablation")
    return _finish(fig, path)


def save_compare_figure(rows, label_a, label_b, path) -> Path:
    """Side-by-side accuracy bars per cardinality for two training setups.

    rows: COMPARE_COLUMNS-ordered tuples."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = [row[0] for row in rows]
    x = range(len(ns))
    width = 0.38
    ax.bar(
        [i - width / 2 for i in x],
        [row[2] for row in rows],
        width,
        yerr=[row[3] for row in rows],
        capsize=3,
        label=label_a,
    )
    ax.bar(
        [i + width / 2 for i in x],
        [row[4] for row in rows],
        width,
        yerr=[row[5] for row in rows],
        capsize=3,
        label=label_b,
    )
    ax.set_xticks(list(x))
    ax.set_xticklabels([f"{n}-way" for n in ns])
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8)
    ax.set_title("paired comparison")
    return _finish(fig, path)
