"""Confusion matrices and per-class accuracy reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.manifest import CLASS_NAMES
from .errors import DimensionError, LabelError

ALL_ROW = "ALL(accuracy)"


@dataclass(frozen=True)
class EvalReport:
    """Confusion matrix (rows = true class, columns = predicted class)."""

    confusion: np.ndarray
    class_names: tuple[str, ...]
    model: str = "model"

    @classmethod
    def from_predictions(cls, labels: Sequence[int], predictions: Sequence[int], classes: int = 4,
                         model: str = "model", class_names: Sequence[str] | None = None) -> "EvalReport":
        y = np.asarray(labels, dtype=np.int64)
        p = np.asarray(predictions, dtype=np.int64)
        if y.shape != p.shape or y.ndim != 1:
            raise DimensionError(f"labels {y.shape} and predictions {p.shape} must be equal-length vectors")
        for name, arr in (("label", y), ("prediction", p)):
            if arr.size and (arr.min() < 0 or arr.max() >= classes):
                raise LabelError(f"{name}s must lie in 0..{classes - 1}")
        cm = np.zeros((classes, classes), dtype=np.int64)
        np.add.at(cm, (y, p), 1)
        names = tuple(class_names) if class_names is not None else CLASS_NAMES.get(classes, tuple(f"class {i}" for i in range(classes)))
        return cls(cm, names, model)

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def per_class(self) -> list[float | None]:
        """Recall per class; None where the class has no samples."""
        return [None if s == 0 else float(self.confusion[i, i] / s) for i, s in enumerate(self.support)]

    @property
    def overall(self) -> float | None:
        total = self.confusion.sum()
        return None if total == 0 else float(np.trace(self.confusion) / total)

    def to_table(self) -> str:
        """Per-class accuracy rows plus an ``ALL(accuracy)`` row, one model column."""
        width = max(len(ALL_ROW), *(len(n) for n in self.class_names)) + 2
        rows = [f"{'Models':<{width}}{self.model:>10}"]
        for name, acc in zip(self.class_names, self.per_class):
            rows.append(f"{name:<{width}}{_pct(acc):>10}")
        rows.append(f"{ALL_ROW:<{width}}{_pct(self.overall):>10}")
        return "\n".join(rows)

    def confusion_table(self) -> str:
        k = len(self.class_names)
        head = "true \\ pred".ljust(14) + "".join(f"{j:>8}" for j in range(k))
        body = [f"{i:<14}" + "".join(f"{self.confusion[i, j]:>8}" for j in range(k)) for i in range(k)]
        return "\n".join([head] + body)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class", "support", "correct", "accuracy"] + [f"pred_{j}" for j in range(len(self.class_names))])
            for i, name in enumerate(self.class_names):
                acc = self.per_class[i]
                w.writerow([name, int(self.support[i]), int(self.confusion[i, i]), "N/A" if acc is None else repr(acc)]
                           + [int(c) for c in self.confusion[i]])
            ov = self.overall
            w.writerow([ALL_ROW, int(self.confusion.sum()), int(np.trace(self.confusion)), "N/A" if ov is None else repr(ov)])
        return path


def _pct(x: float | None) -> str:
    return "N/A" if x is None else f"{100.0 * x:.2f}%"
