"""Accuracy and the two frequency diagnostics tracked during training."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .autograd import Tensor
from .graph import Graph
from .losses import hfd_loss

HISTORY_COLUMNS = ("epoch", "loss_ce", "loss_lfd", "loss_hfd", "acc_train", "acc_val",
                   "acc_test", "cos_sim", "pd_kl")


def _array(s) -> np.ndarray:
    return s.data if isinstance(s, Tensor) else np.asarray(s, dtype=np.float64)


def accuracy(logits, labels, ids) -> float:
    """Fraction of ``ids`` whose argmax matches the label (ties go to the lowest class)."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("accuracy over an empty id set")
    pred = np.argmax(_array(logits)[ids], axis=1)
    return float(np.mean(pred == np.asarray(labels)[ids]))


def mean_neighbor_cosine(s, g: Graph) -> float:
    """Average cosine similarity over all directed neighbor pairs.

    Rows with zero norm contribute a similarity of 0.
    """
    s = _array(s)
    src, dst = g.directed_pairs
    if len(src) == 0:
        raise ValueError("mean neighbor cosine is undefined on an edgeless graph")
    norms = np.linalg.norm(s, axis=1)
    dots = np.einsum("ij,ij->i", s[src], s[dst])
    denom = norms[src] * norms[dst]
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return float(cos.mean())


def pairwise_distance_kl(s_student, s_teacher, g: Graph) -> float:
    """KL between softmax(|z_j - z_i|) and softmax(|h_j - h_i|) averaged over directed pairs.

    Identical to the high-frequency distillation objective at unit temperature.
    """
    s_student, s_teacher = _array(s_student), _array(s_teacher)
    if s_student.shape != s_teacher.shape:
        raise ValueError(f"shape mismatch {s_student.shape} vs {s_teacher.shape}")
    if g.num_edges == 0:
        raise ValueError("pairwise distance KL is undefined on an edgeless graph")
    return hfd_loss(Tensor(s_student), s_teacher, g, 1.0).item()


@dataclass
class EpochRecord:
    epoch: int
    loss_ce: float
    loss_lfd: float
    loss_hfd: float
    acc_train: float
    acc_val: float
    acc_test: float
    cos_sim: float
    pd_kl: float
    loss_kd: float = math.nan
    loss_total: float = math.nan


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = -1.0

    def append(self, rec: EpochRecord) -> bool:
        """Add a record; return True when it is the new best validation epoch."""
        self.records.append(rec)
        if rec.acc_val > self.best_val_accuracy:
            self.best_val_accuracy = rec.acc_val
            self.best_epoch = rec.epoch
            return True
        return False

    @property
    def best(self) -> EpochRecord:
        for r in self.records:
            if r.epoch == self.best_epoch:
                return r
        raise LookupError("history is empty")

    @property
    def best_test_accuracy(self) -> float:
        return self.best.acc_test

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def __len__(self):
        return len(self.records)


def _fmt(v) -> str:
    return str(int(v)) if isinstance(v, (int, np.integer)) else format(float(v), ".17g")


def curves_export(history: TrainHistory, path) -> None:
    """Write the per-epoch curves as CSV with 17 significant digits."""
    if not history.records:
        raise ValueError("cannot export an empty history")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for r in history.records:
            writer.writerow([_fmt(getattr(r, c)) for c in HISTORY_COLUMNS])


def curves_import(path) -> TrainHistory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != HISTORY_COLUMNS:
            raise ValueError(f"unexpected history header {header}")
        history = TrainHistory()
        for row in reader:
            values = {c: (int(v) if c == "epoch" else float(v)) for c, v in zip(header, row)}
            history.append(EpochRecord(**values))
    return history


RECORD_FIELDS = tuple(f.name for f in fields(EpochRecord))
