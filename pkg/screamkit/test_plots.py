"""Tests for plots.py."""

import numpy as np
import pytest

from screamkit.dataset import CLASSES_3
from screamkit.metrics import (
    ExperimentDescriptor,
    ReportWriteError,
    build_report,
    confusion_from_labels,
)
from screamkit.plots import (
    plot_confusion,
    plot_projection,
    plot_recall,
    plot_recall_comparison,
    save_svg,
)
from screamkit.tsne import Projection2D


def _report(name: str, correct: int):
    true = ["Sing"] * 4 + ["Scream"] * 4 + ["NoVocal"] * 4
    pred = list(true)
    for i in range(4 - correct):
        pred[4 + i] = "Sing"
    exp = ExperimentDescriptor(feature_set="FS1", classifier="svm", classes=3, seed=0, name=name)
    return build_report(confusion_from_labels(true, pred, CLASSES_3), exp)


def _projection() -> Projection2D:
    return Projection2D(
        points=np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]),
        labels=("Sing", None, "Scream"),
        perplexity=1.0,
        n_iter=10,
        seed=0,
        initial_kl=1.0,
        final_kl=0.5,
        feature_set="FS1",
    )


class TestRecallPlots:
    def test_bar_heights_are_recalls(self) -> None:
        report = _report("fs1_svm_3class", correct=1)
        fig = plot_recall(report)
        heights = [bar.get_height() for bar in fig.axes[0].patches]
        assert heights == pytest.approx([1.0, 0.25, 1.0])
        assert "0.750" in fig.axes[0].get_title()

    def test_comparison_groups(self) -> None:
        reports = [_report("a", 4), _report("b", 2)]
        ax = plot_recall_comparison(reports).axes[0]
        heights = [bar.get_height() for bar in ax.patches]
        assert heights == pytest.approx([1.0, 1.0, 1.0, 1.0, 0.5, 1.0])
        assert [t.get_text() for t in ax.get_legend().get_texts()] == ["a", "b"]

    def test_comparison_needs_reports(self) -> None:
        with pytest.raises(ValueError, match="No reports"):
            plot_recall_comparison([])


class TestConfusionPlot:
    def test_cell_annotations(self) -> None:
        fig = plot_confusion(_report("x", 3))
        texts = [t.get_text() for t in fig.axes[0].texts]
        assert texts == ["4", "0", "0", "1", "3", "0", "0", "0", "4"]


class TestProjectionPlot:
    def test_unlabeled_points(self) -> None:
        ax = plot_projection(_projection()).axes[0]
        legend = [t.get_text() for t in ax.get_legend().get_texts()]
        assert sorted(legend) == ["Scream", "Sing", "unlabeled"]
        assert "FS1" in ax.get_title()


class TestSaveSvg:
    def test_identical_bytes(self, tmp_path) -> None:
        report = _report("x", 2)
        save_svg(plot_recall(report), tmp_path / "a.svg")
        save_svg(plot_recall(report), tmp_path / "b.svg")
        first = (tmp_path / "a.svg").read_bytes()
        assert first.startswith(b"<?xml")
        assert first == (tmp_path / "b.svg").read_bytes()

    def test_unwritable(self, tmp_path) -> None:
        with pytest.raises(ReportWriteError):
            save_svg(plot_recall(_report("x", 2)), tmp_path / "missing" / "a.svg")
