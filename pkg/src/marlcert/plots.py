"""Figure rendering for report files.

Everything draws through the Agg backend and writes straight to disk, so
rendering works in headless environments and never pops a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_influence_heatmaps",
    "render_decay_curves",
    "render_lpi_trace",
]


def render_influence_heatmaps(matrices: dict[str, np.ndarray], path) -> None:
    """One heatmap per sensitivity matrix, annotated with entry values."""
    names = list(matrices.keys())
    fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.2),
                             squeeze=False)
    for ax, name in zip(axes[0], names):
        m = np.asarray(matrices[name], dtype=float)
        image = ax.imshow(m, cmap="viridis", vmin=0.0,
                          vmax=max(1.0, float(m.max()) if m.size else 1.0))
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("influencing i")
        ax.set_ylabel("influenced j")
        ax.set_xticks(range(m.shape[1]))
        ax.set_yticks(range(m.shape[0]))
        for j in range(m.shape[0]):
            for i in range(m.shape[1]):
                ax.text(i, j, f"{m[j, i]:.3g}", ha="center", va="center",
                        color="white" if m[j, i] < 0.5 else "black", fontsize=7)
        fig.colorbar(image, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_decay_curves(rows: list[dict], path) -> None:
    """Measured truncation errors next to their geometric bounds, per radius."""
    kappas = [row["kappa"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    series = [
        ("measured_bias", "o-", "measured bias error"),
        ("bias_bound", "o--", "bias bound"),
        ("measured_gap", "s-", "measured certificate gap"),
        ("cert_gap_bound", "s--", "certificate gap bound"),
        ("certificate_sup", "^-", "certificate sup"),
    ]
    floor = 1e-17
    for key, style, label in series:
        vals = [row.get(key) for row in rows]
        if all(v is None for v in vals):
            continue
        y = [max(float(v), floor) if v is not None else np.nan for v in vals]
        ax.semilogy(kappas, y, style, label=label, markersize=4)
    ax.set_xlabel("truncation radius kappa")
    ax.set_ylabel("value (log scale)")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_lpi_trace(iterations: list[dict], final: dict, path) -> None:
    """Average reward and entropy-regularized objective across iterations."""
    idx = [it["index"] for it in iterations] + [len(iterations)]
    rewards = [it["average_reward"] for it in iterations] + [final["average_reward"]]
    entropies = [it["entropy_value"] for it in iterations] + [final["entropy_value"]]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(idx, rewards, "o-", label="average reward")
    ax.plot(idx, entropies, "s-", label="entropy-regularized objective")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective value")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
