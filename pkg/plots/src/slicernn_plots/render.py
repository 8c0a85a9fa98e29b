"""Render slicernn CSV exports into deterministic SVG figures.

Four figure kinds, one per documented CSV contract:

* ``histogram`` - class,count            -> bar chart of review counts
* ``tuning``    - lr,l2,keep_prob,val_acc,best_epoch
                                          -> val accuracy vs each swept value
* ``heatmap``   - class,dim0..dimH-1,count
                                          -> class x hidden-dimension heatmap
                                             (optional second epoch side by side)
* ``metrics``   - epoch,loss,train_acc,val_acc,seconds
                                          -> loss and accuracy learning curves

This package knows nothing about checkpoints or model internals; the CSV
headers are the whole interface.  Output is SVG with no timestamp
metadata and a fixed hash salt, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "slicernn-plots"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

KINDS = ("histogram", "tuning", "heatmap", "metrics")


class FormatError(ValueError):
    """A CSV does not match its documented header or cell types."""


class RenderArgumentError(ValueError):
    """Structurally valid input that cannot be plotted (e.g. no data rows)."""


@dataclass
class FigureJob:
    kind: str
    input_path: Path
    output_path: Path
    second_input: Path | None = None
    title: str | None = None


def _read_rows(path: Path, expected_prefix: list[str], kind: str,
               exact_width: bool = False):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected a header row")
        for want, got in zip(expected_prefix, header):
            if want != got:
                raise FormatError(
                    f"{path}: {kind} CSV expects column {want!r}, got {got!r}"
                )
        if len(header) < len(expected_prefix):
            missing = expected_prefix[len(header):]
            raise FormatError(f"{path}: missing columns {missing}")
        rows = [row for row in reader if row]
    if not rows:
        raise RenderArgumentError(f"{path}: no data rows to plot")
    width = len(header) if exact_width else len(expected_prefix)
    for i, row in enumerate(rows, start=2):
        if len(row) < width:
            raise FormatError(
                f"{path}: row {i} has {len(row)} cells, expected {width}"
            )
    return header, rows


def _float_cell(path, row_num, column, value):
    try:
        return float(value)
    except ValueError:
        raise FormatError(
            f"{path}: row {row_num}, column {column!r}: not a number: {value!r}"
        )


def load_histogram(path: Path) -> dict[int, int]:
    _, rows = _read_rows(path, ["class", "count"], "histogram", exact_width=True)
    out = {}
    for i, row in enumerate(rows, start=2):
        cls = int(_float_cell(path, i, "class", row[0]))
        out[cls] = int(_float_cell(path, i, "count", row[1]))
    return out


def load_tuning(path: Path) -> list[dict]:
    header = ["lr", "l2", "keep_prob", "val_acc", "best_epoch"]
    _, rows = _read_rows(path, header, "tuning", exact_width=True)
    return [
        {name: _float_cell(path, i, name, value)
         for name, value in zip(header, row)}
        for i, row in enumerate(rows, start=2)
    ]


def load_heatmap(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "class" or header[-1] != "count":
        raise FormatError(
            f"{path}: heatmap CSV must start with 'class' and end with 'count'"
        )
    dims = header[1:-1]
    for j, name in enumerate(dims):
        if name != f"dim{j}":
            raise FormatError(f"{path}: expected column 'dim{j}', got {name!r}")
    _, rows = _read_rows(path, ["class"], "heatmap")
    classes, matrix, counts = [], [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {i} has {len(row)} cells, "
                              f"expected {len(header)}")
        classes.append(int(_float_cell(path, i, "class", row[0])))
        matrix.append([_float_cell(path, i, f"dim{j}", v)
                       for j, v in enumerate(row[1:-1])])
        counts.append(int(_float_cell(path, i, "count", row[-1])))
    return classes, matrix, counts


def load_metrics(path: Path) -> list[dict]:
    header = ["epoch", "loss", "train_acc", "val_acc", "seconds"]
    _, rows = _read_rows(path, header, "metrics", exact_width=True)
    out = []
    for i, row in enumerate(rows, start=2):
        entry = {"epoch": int(_float_cell(path, i, "epoch", row[0])),
                 "loss": _float_cell(path, i, "loss", row[1])}
        for name, value in zip(header[2:4], row[2:4]):
            entry[name] = _float_cell(path, i, name, value) if value else None
        out.append(entry)
    return out


def _histogram_figure(job: FigureJob):
    counts = load_histogram(job.input_path)
    classes = sorted(counts)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(c) for c in classes], [counts[c] for c in classes],
           color="#4878a8")
    ax.set_xlabel("score")
    ax.set_ylabel("number of reviews")
    ax.set_title(job.title or "Reviews per score class")
    return fig


def _tuning_figure(job: FigureJob):
    rows = load_tuning(job.input_path)
    params = ("lr", "l2", "keep_prob")
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, param in zip(axes, params):
        pts = sorted((r[param], r["val_acc"]) for r in rows)
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", linestyle="-" if len(xs) > 1 else "")
        if param in ("lr", "l2") and min(xs) > 0:
            ax.set_xscale("log")
        ax.set_xlabel(param)
        ax.set_ylabel("best val accuracy")
    fig.suptitle(job.title or "Hyperparameter tuning")
    fig.tight_layout()
    return fig


def _heatmap_panel(ax, path: Path, label: str):
    classes, matrix, _ = load_heatmap(path)
    im = ax.imshow(matrix, aspect="auto", cmap="viridis")
    ax.set_yticks(range(len(classes)), [str(c) for c in classes])
    ax.set_xlabel("hidden dimension")
    ax.set_ylabel("class")
    ax.set_title(label)
    return im


def _heatmap_figure(job: FigureJob):
    paths = [job.input_path] + ([job.second_input] if job.second_input else [])
    fig, axes = plt.subplots(1, len(paths), figsize=(6 * len(paths), 4),
                             squeeze=False)
    for ax, path in zip(axes[0], paths):
        im = _heatmap_panel(ax, path, path.stem)
        fig.colorbar(im, ax=ax)
    fig.suptitle(job.title or "Per-class mean hidden state at EOS")
    fig.tight_layout()
    return fig


def _metrics_figure(job: FigureJob):
    rows = load_metrics(job.input_path)
    epochs = [r["epoch"] for r in rows]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [r["loss"] for r in rows], marker="o")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean train loss")
    for key, style in (("train_acc", "-o"), ("val_acc", "--s")):
        pts = [(r["epoch"], r[key]) for r in rows if r[key] is not None]
        if pts:
            xs, ys = zip(*pts)
            ax_acc.plot(xs, ys, style, label=key)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    if ax_acc.lines:
        ax_acc.legend()
    fig.suptitle(job.title or "Training metrics")
    fig.tight_layout()
    return fig


_BUILDERS = {
    "histogram": _histogram_figure,
    "tuning": _tuning_figure,
    "heatmap": _heatmap_figure,
    "metrics": _metrics_figure,
}


def render(job: FigureJob) -> Path:
    """Build the figure for the job and write it as a deterministic SVG."""
    if job.kind not in KINDS:
        raise RenderArgumentError(f"unknown figure kind {job.kind!r}")
    fig = _BUILDERS[job.kind](job)
    try:
        fig.savefig(job.output_path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return job.output_path
