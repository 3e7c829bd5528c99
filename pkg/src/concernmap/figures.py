"""Cluster-weight summary figure rendered alongside the textual reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .recover import UNKNOWN_CLUSTER, RecoveryResult
from .viz import Palette


def render_cluster_summary(result: RecoveryResult, palette: Palette, out_path: Path) -> Path:
    """Horizontal bar chart of per-cluster totals in the configured weight
    measure, colored to match the DOT output."""
    measure = result.config.weight_measure
    clusters = [*result.concerns, UNKNOWN_CLUSTER]
    totals = {name: 0 for name in clusters}
    for record in result.records:
        totals[record.main_concern] += record.weight(measure)

    fig, ax = plt.subplots(figsize=(7, 0.6 * len(clusters) + 1.2))
    positions = range(len(clusters))
    ax.barh(
        list(positions),
        [totals[name] for name in clusters],
        color=[palette.color(name) for name in clusters],
        edgecolor="black",
        linewidth=0.5,
    )
    ax.set_yticks(list(positions), clusters)
    ax.invert_yaxis()
    ax.set_xlabel(measure.replace("_", " "))
    ax.set_title(f"cluster weight by {measure.replace('_', ' ')}")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
