"""
SVG figures for reports and projections.

Figures are built on the object API (no pyplot state) and saved with a fixed
hash salt and no date metadata, so identical inputs give identical bytes.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from screamkit.metrics import EvalReport, ReportWriteError
from screamkit.tsne import Projection2D

matplotlib.use("Agg")

logger = logging.getLogger(__name__)

SVG_HASHSALT = "screamkit"
PALETTE = (
    "#1b9e77",
    "#d95f02",
    "#7570b3",
    "#e7298a",
    "#66a61e",
    "#e6ab02",
    "#a6761d",
    "#666666",
)
UNLABELED_COLOR = "#bbbbbb"


def save_svg(fig: Figure, path: str | Path) -> None:
    try:
        with matplotlib.rc_context({"svg.hashsalt": SVG_HASHSALT, "svg.fonttype": "path"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise ReportWriteError(f"Cannot write figure to {path}: {e}") from e
    logger.debug(f"Wrote figure {path}")


def plot_recall(report: EvalReport) -> Figure:
    """One bar per class, height = recall."""
    names = list(report.confusion.class_names)
    recalls = [report.class_recall[name] for name in names]
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.bar(names, recalls, color=[PALETTE[i % len(PALETTE)] for i in range(len(names))])
    ax.set_ylim(0, 1)
    ax.set_ylabel("Recall")
    title = report.experiment.name or f"{report.experiment.feature_set} + {report.experiment.classifier}"
    ax.set_title(f"{title} (bal_acc = {report.bal_acc:.3f})")
    fig.tight_layout()
    return fig


def plot_confusion(report: EvalReport) -> Figure:
    cm = report.confusion
    fig = Figure(figsize=(1.2 * cm.k + 2, 1.2 * cm.k + 1.5))
    ax = fig.add_subplot()
    image = ax.imshow(cm.counts, cmap="Blues", vmin=0)
    fig.colorbar(image, ax=ax)
    ax.set_xticks(range(cm.k), cm.class_names, rotation=45, ha="right")
    ax.set_yticks(range(cm.k), cm.class_names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    threshold = cm.counts.max() / 2 if cm.total else 0
    for (i, j), count in np.ndenumerate(cm.counts):
        color = "white" if count > threshold else "black"
        ax.text(j, i, str(count), ha="center", va="center", color=color)
    fig.tight_layout()
    return fig


def plot_projection(projection: Projection2D, palette: Sequence[str] = PALETTE) -> Figure:
    """Scatter of the embedding, one colour per label in sorted label order."""
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    labels = np.array([label if label is not None else "" for label in projection.labels])
    for i, name in enumerate(sorted(set(labels.tolist()))):
        mask = labels == name
        color = palette[i % len(palette)] if name else UNLABELED_COLOR
        ax.scatter(
            projection.points[mask, 0],
            projection.points[mask, 1],
            s=8,
            color=color,
            label=name or "unlabeled",
        )
    ax.set_xticks([])
    ax.set_yticks([])
    ax.legend(loc="best", fontsize="small")
    ax.set_title(f"{projection.feature_set or 'features'} (perplexity {projection.perplexity:g})")
    fig.tight_layout()
    return fig


def plot_recall_comparison(reports: Sequence[EvalReport]) -> Figure:
    """Grouped class-wise recall bars, one group per class and one bar per report."""
    if not reports:
        raise ValueError("No reports to compare.")
    names = list(reports[0].confusion.class_names)
    width = 0.8 / len(reports)
    fig = Figure(figsize=(max(6, 1.5 * len(names)), 4))
    ax = fig.add_subplot()
    positions = np.arange(len(names))
    for i, report in enumerate(reports):
        recalls = [report.class_recall.get(name, 0.0) for name in names]
        label = report.experiment.name or f"{report.experiment.feature_set} + {report.experiment.classifier}"
        ax.bar(positions + i * width, recalls, width, label=label, color=PALETTE[i % len(PALETTE)])
    ax.set_xticks(positions + width * (len(reports) - 1) / 2, names)
    ax.set_ylim(0, 1)
    ax.set_ylabel("Recall")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    return fig
