"""Result tables: CSV with raw fractions, Markdown with two-decimal
percentages in the Fold 1..k + Average layout, and a bar-chart figure."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

# display order mirrors the reported tables
APPROACH_ORDER = (
    "non-transfer",
    "zero-shot",
    "finetune-all",
    "finetune-last",
    "student-teacher",
    "ce-mcts",
)


def order_approaches(approaches) -> list[str]:
    known = [a for a in APPROACH_ORDER if a in approaches]
    extra = [a for a in approaches if a not in APPROACH_ORDER]
    return known + extra


@dataclass
class ExperimentReport:
    """Per-fold and averaged train/test accuracies per approach."""

    approaches: list[str]
    k: int
    train: dict[str, list[float]]
    test: dict[str, list[float]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.approaches = order_approaches(self.approaches)
        for approach in self.approaches:
            for table in (self.train, self.test):
                if len(table[approach]) != self.k:
                    raise ValueError(f"{approach}: expected {self.k} fold values")

    def average(self, table: dict[str, list[float]], approach: str) -> float:
        return float(np.mean(table[approach]))

    def train_average(self, approach: str) -> float:
        return self.average(self.train, approach)

    def test_average(self, approach: str) -> float:
        return self.average(self.test, approach)


def write_results_csv(report: ExperimentReport, path) -> None:
    """Raw fractions, one row per (approach, fold) plus an average row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["approach", "fold", "train_accuracy", "test_accuracy"])
        for approach in report.approaches:
            for fold in range(report.k):
                writer.writerow(
                    [
                        approach,
                        fold + 1,
                        repr(report.train[approach][fold]),
                        repr(report.test[approach][fold]),
                    ]
                )
            writer.writerow(
                [
                    approach,
                    "average",
                    repr(report.train_average(approach)),
                    repr(report.test_average(approach)),
                ]
            )


def _markdown_table(report: ExperimentReport, table: dict[str, list[float]]) -> str:
    header = (
        "| Approach | "
        + " | ".join(f"Fold {i + 1}" for i in range(report.k))
        + " | Average |"
    )
    rule = "|" + "---|" * (report.k + 2)
    rows = [header, rule]
    for approach in report.approaches:
        cells = [f"{100.0 * v:.2f}" for v in table[approach]]
        cells.append(f"{100.0 * report.average(table, approach):.2f}")
        rows.append("| " + approach + " | " + " | ".join(cells) + " |")
    return "\n".join(rows)


def write_results_markdown(report: ExperimentReport, path) -> None:
    parts = [
        "# Transfer comparison",
        "",
        "## Training reconstruction accuracy (%) per fold",
        "",
        _markdown_table(report, report.train),
        "",
        "## Test reconstruction accuracy (%) per fold",
        "",
        _markdown_table(report, report.test),
        "",
    ]
    if report.metadata:
        parts.append("## Run metadata")
        parts.append("")
        for key in sorted(report.metadata):
            parts.append(f"- {key}: {report.metadata[key]}")
        parts.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


def write_results_figure(report: ExperimentReport, path) -> None:
    """Grouped bars of test accuracy per fold, one group per approach."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5), sharey=True)
    width = 0.8 / max(1, report.k)
    x = np.arange(len(report.approaches))
    for ax, table, title in (
        (axes[0], report.train, "train"),
        (axes[1], report.test, "test"),
    ):
        for fold in range(report.k):
            values = [100.0 * table[a][fold] for a in report.approaches]
            ax.bar(x + fold * width, values, width, label=f"fold {fold + 1}")
        avg = [100.0 * report.average(table, a) for a in report.approaches]
        ax.plot(
            x + 0.4 - width / 2, avg, "k_", markersize=18, label="average"
        )
        ax.set_xticks(x + 0.4 - width / 2)
        ax.set_xticklabels(report.approaches, rotation=20, ha="right")
        ax.set_ylabel("reconstruction accuracy (%)")
        ax.set_title(f"{title} accuracy per fold")
        ax.set_ylim(0, 100)
    axes[1].legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


@dataclass
class GenreRow:
    name: str
    accuracy: float | None
    n_songs: int
    n_windows: int
    error: str | None = None


def write_genre_csv(rows: list[GenreRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "accuracy", "n_songs", "n_windows", "error"])
        for row in rows:
            writer.writerow(
                [
                    row.name,
                    "" if row.accuracy is None else repr(row.accuracy),
                    row.n_songs,
                    row.n_windows,
                    row.error or "",
                ]
            )


def write_genre_markdown(rows: list[GenreRow], path) -> None:
    lines = [
        "# Reconstruction accuracy by dataset",
        "",
        "| Dataset | Accuracy (%) |",
        "|---|---|",
    ]
    for row in rows:
        cell = "n/a" if row.accuracy is None else f"{100.0 * row.accuracy:.2f}"
        lines.append(f"| {row.name} | {cell} |")
    lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def write_genre_figure(rows: list[GenreRow], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plotted = [r for r in rows if r.accuracy is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        [r.name for r in plotted],
        [100.0 * r.accuracy for r in plotted],
        color="#446688",
    )
    ax.set_ylabel("reconstruction accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_title("model accuracy per dataset")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
