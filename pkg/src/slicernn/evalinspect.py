"""Test-set evaluation and hidden-state inspection.

Accuracy is the fraction of reviews whose prediction at the EOS position
matches the label; the confusion matrix uses rows = true class, columns
= predicted class.  Hidden-state dumps average the EOS hidden vector per
true class, which is the aggregate the heatmap renderer consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EncodedReview
from .errors import ArgumentError
from .models import Hyper, Params, eval_outputs


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # [C, C] counts, rows = true class
    per_class: np.ndarray  # [C] row-normalized diagonal
    n: int

    def summary(self) -> str:
        return f"accuracy {self.accuracy:.4f} over {self.n} reviews"

    def to_csv(self, path: str | Path) -> None:
        c = self.confusion.shape[0]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("true_class," + ",".join(f"pred_{j}" for j in range(c)) + "\n")
            for i in range(c):
                fh.write(f"{i}," + ",".join(str(int(v)) for v in self.confusion[i]) + "\n")


@dataclass
class HiddenDump:
    epoch_tag: str
    means: np.ndarray  # [C, H] per-class mean EOS hidden state
    counts: np.ndarray  # [C] reviews per class

    def to_csv(self, path: str | Path) -> None:
        h = self.means.shape[1]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("class," + ",".join(f"dim{j}" for j in range(h)) + ",count\n")
            for cls in range(self.means.shape[0]):
                row = ",".join(repr(float(v)) for v in self.means[cls])
                fh.write(f"{cls},{row},{int(self.counts[cls])}\n")


def evaluate(params: Params, encoded_set: Sequence[EncodedReview],
             hyper: Hyper) -> EvalReport:
    """Exact counts from per-review predictions at the EOS position."""
    if not encoded_set:
        raise ArgumentError("cannot evaluate an empty set")
    c = params.dims.num_classes
    labels = np.array([e.label for e in encoded_set])
    if labels.min() < 0 or labels.max() >= c:
        raise ArgumentError(
            f"labels span {labels.min()}..{labels.max()} but the model has "
            f"{c} classes"
        )
    preds, _ = eval_outputs(params, encoded_set, hyper)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    row_totals = confusion.sum(axis=1)
    per_class = np.divide(
        np.diag(confusion), row_totals,
        out=np.zeros(c, dtype=np.float64), where=row_totals > 0,
    )
    return EvalReport(
        accuracy=float(np.trace(confusion) / len(encoded_set)),
        confusion=confusion,
        per_class=per_class,
        n=len(encoded_set),
    )


def hidden_dump(params: Params, encoded_set: Sequence[EncodedReview],
                hyper: Hyper, epoch_tag: str) -> HiddenDump:
    """Per-class mean hidden state at the EOS step, eval mode."""
    if not encoded_set:
        raise ArgumentError("cannot dump hidden states of an empty set")
    c = params.dims.num_classes
    labels = np.array([e.label for e in encoded_set])
    present = set(labels.tolist())
    missing = [cls for cls in range(c) if cls not in present]
    if missing:
        raise ArgumentError(f"classes {missing} have no reviews in the set")
    _, eos_h = eval_outputs(params, encoded_set, hyper)
    means = np.zeros((c, eos_h.shape[1]))
    counts = np.zeros(c, dtype=np.int64)
    for cls in range(c):
        rows = labels == cls
        means[cls] = eos_h[rows].mean(axis=0)
        counts[cls] = int(rows.sum())
    return HiddenDump(epoch_tag=epoch_tag, means=means, counts=counts)
