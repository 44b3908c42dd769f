"""Run artifacts: the training-log CSV, metric CSV/tables, prediction files,
and diagnostic SVG plots.

Floats in the log CSV are written with repr, so a parse of the file
reproduces every value bit for bit and two identically seeded runs produce
byte-identical logs (wall time excluded, by column).
"""

from __future__ import annotations

import csv
from dataclasses import fields
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .metrics import MetricReport
from .network import log_softmax
from .trainer import EpochRecord, TrainLog

_LOG_FIELDS = [f.name for f in fields(EpochRecord)]


def _format_cell(value) -> str:
    # repr of a builtin float reads back exactly; numpy scalars must be
    # unwrapped first or their repr carries the type name
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_train_log(log: TrainLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOG_FIELDS)
        for r in log.records:
            writer.writerow([_format_cell(getattr(r, name)) for name in _LOG_FIELDS])


def read_train_log(path) -> TrainLog:
    p = Path(path)
    if not p.exists():
        raise DataError(f"train log not found: {p}")
    with open(p, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _LOG_FIELDS:
        raise DataError(f"{p}: not a train log (unexpected header)")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(_LOG_FIELDS):
            raise DataError(f"{p}:{lineno}: expected {len(_LOG_FIELDS)} columns")
        values = []
        for name, cell in zip(_LOG_FIELDS, row):
            if name == "epoch":
                values.append(int(cell))
            elif name == "pseudo_hash":
                values.append(cell)
            else:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(f"{p}:{lineno}: bad float {cell!r} in {name}") from None
        records.append(EpochRecord(*values))
    return TrainLog(records)


def write_metrics_csv(report: MetricReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["overall_accuracy", repr(report.overall_accuracy)])
        writer.writerow(["mean_accuracy", repr(report.mean_accuracy)])
        writer.writerow(["mean_iou", repr(report.mean_iou)])
        for k, iou in enumerate(report.per_class_iou):
            writer.writerow([f"iou_class_{k}", "" if np.isnan(iou) else repr(float(iou))])


def format_metrics_table(report: MetricReport) -> str:
    lines = [
        f"{'overall accuracy':<20} {report.overall_accuracy:8.4f}",
        f"{'mean accuracy':<20} {report.mean_accuracy:8.4f}",
        f"{'mean IoU':<20} {report.mean_iou:8.4f}",
    ]
    for k, iou in enumerate(report.per_class_iou):
        shown = "     n/a" if np.isnan(iou) else f"{iou:8.4f}"
        lines.append(f"{f'IoU class {k}':<20} {shown}")
    return "\n".join(lines)


def write_predictions_csv(labels: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "category"])
        for i, lab in enumerate(np.asarray(labels).ravel()):
            writer.writerow([i, int(lab)])


# --- plots -----------------------------------------------------------------


def report_plots(
    log: TrainLog,
    outdir,
    prototypes: np.ndarray | None = None,
    temperature: float = 0.1,
) -> list[Path]:
    """Loss curves and consistent-fraction SVGs from the log; additionally a
    prototype-similarity heatmap when prototype vectors are supplied (the
    log alone does not carry them)."""
    if not log.records:
        raise DataError("cannot plot an empty train log")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    epochs = log.column("epoch")
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, label in [
        ("loss_total", "total"),
        ("loss_ce", "cross-entropy"),
        ("loss_structure", "structure"),
        ("loss_reasoning", "relation matching"),
    ]:
        ax.plot(epochs, log.column(name), label=label, marker="." if len(epochs) < 3 else None)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training losses")
    ax.legend()
    path = out / "loss_curves.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, log.column("consistent_fraction"),
            marker="." if len(epochs) < 3 else None)
    ax.set_xlabel("epoch")
    ax.set_ylabel("consistent-point fraction")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("reliable pseudo-label coverage")
    path = out / "consistent_fraction.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    if prototypes is not None:
        sim = np.exp(log_softmax(prototypes @ prototypes.T / temperature))
        fig, ax = plt.subplots(figsize=(5.5, 5))
        image = ax.imshow(sim, cmap="viridis")
        ax.set_xlabel("prototype")
        ax.set_ylabel("prototype")
        ax.set_title("prototype similarity (row-normalized)")
        fig.colorbar(image, ax=ax, shrink=0.85)
        path = out / "prototype_similarity.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
