"""Full-batch teacher pre-training and teacher-to-MLP distillation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .autograd import backward
from .graph import Graph
from .losses import DistillMode, label_loss, total_loss
from .metrics import EpochRecord, TrainHistory, accuracy, mean_neighbor_cosine, pairwise_distance_kl
from .models import ModelConfig, ModelParams, as_tensors, forward, init_params
from .optim import Adam

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 500
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class DistillConfig:
    mode: DistillMode = DistillMode.FF_G2M
    lam: float = 0.5
    tau1: float = 1.0
    tau2: float = 1.0
    epochs: int = 500
    lr: float = 0.01
    weight_decay: float = 5e-4
    seed: int = 0
    patience: int | None = None
    literal_denominator: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", DistillMode(self.mode))
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("temperatures must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


def _snapshot(tensors) -> ModelParams:
    return {k: t.data.copy() for k, t in tensors.items()}


def _nan_or(x):
    return math.nan if x is None else x


def _fit(g: Graph, params: ModelParams, cfg: ModelConfig, lr, weight_decay, epochs, seed,
         patience, loss_fn, diagnostics, label) -> tuple[ModelParams, TrainHistory]:
    if g.split is None:
        raise ValueError("graph has no train/val/test split")
    split = g.split
    tensors = as_tensors(params, requires_grad=True)
    opt = Adam(list(tensors.values()), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng([seed, 1])
    history = TrainHistory()
    best = _snapshot(tensors)
    stale = 0
    for epoch in range(1, epochs + 1):
        opt.zero_grad()
        try:
            # overflow surfaces as a non-finite value, which the tape already rejects
            with np.errstate(over="ignore", invalid="ignore"):
                out = forward(tensors, g, cfg, training=True, rng=rng)
                loss, parts = loss_fn(out)
                if not math.isfinite(loss.item()):
                    raise FloatingPointError("non-finite loss")
                backward(loss)
                opt.step()
                logits = forward({k: t.data for k, t in tensors.items()}, g, cfg, training=False).data
        except FloatingPointError as exc:
            raise TrainingDiverged(f"{label}: training diverged at epoch {epoch}: {exc}") from exc
        cos, pd = diagnostics(logits)
        rec = EpochRecord(
            epoch=epoch,
            loss_ce=parts["ce"],
            loss_lfd=_nan_or(parts.get("lfd")),
            loss_hfd=_nan_or(parts.get("hfd")),
            acc_train=accuracy(logits, g.labels, split.train_ids),
            acc_val=accuracy(logits, g.labels, split.val_ids) if len(split.val_ids) else math.nan,
            acc_test=accuracy(logits, g.labels, split.test_ids) if len(split.test_ids) else math.nan,
            cos_sim=cos,
            pd_kl=pd,
            loss_kd=_nan_or(parts.get("kd")),
            loss_total=parts["total"],
        )
        if history.append(rec):
            best = _snapshot(tensors)
            stale = 0
        else:
            stale += 1
        if epoch % 50 == 0:
            log.info("%s epoch %d loss %.4f val %.4f test %.4f", label, epoch, rec.loss_total,
                     rec.acc_val, rec.acc_test)
        if patience is not None and stale >= patience:
            break
    return best, history


def _cosine_or_nan(logits, g: Graph) -> float:
    return mean_neighbor_cosine(logits, g) if g.num_edges else math.nan


def train_teacher(g: Graph, cfg: ModelConfig, optim: OptimConfig = OptimConfig()):
    """Pre-train a model on the label loss; returns the best-validation checkpoint."""
    params = init_params(cfg, optim.seed)

    def loss_fn(out):
        loss = label_loss(out, g.labels, g.split.train_ids)
        return loss, {"ce": loss.item(), "total": loss.item()}

    def diagnostics(logits):
        return _cosine_or_nan(logits, g), math.nan

    return _fit(g, params, cfg, optim.lr, optim.weight_decay, optim.epochs, optim.seed,
                optim.patience, loss_fn, diagnostics, f"teacher[{cfg.arch}]")


def teacher_logits(g: Graph, teacher_params: ModelParams, teacher_cfg: ModelConfig) -> np.ndarray:
    return forward(teacher_params, g, teacher_cfg, training=False).data.copy()


def distill_student(g: Graph, teacher_params: ModelParams, teacher_cfg: ModelConfig,
                    student_cfg: ModelConfig, dcfg: DistillConfig, teacher_out=None):
    """Train an MLP student against frozen teacher logits under ``dcfg.mode``."""
    if student_cfg.arch != "mlp":
        raise ValueError("the student must be an MLP")
    if (student_cfg.num_layers, student_cfg.hidden_dim) != (teacher_cfg.num_layers, teacher_cfg.hidden_dim):
        raise ValueError(
            f"student (L={student_cfg.num_layers}, F={student_cfg.hidden_dim}) must match teacher "
            f"(L={teacher_cfg.num_layers}, F={teacher_cfg.hidden_dim})")
    h = teacher_logits(g, teacher_params, teacher_cfg) if teacher_out is None else teacher_out
    params = init_params(student_cfg, dcfg.seed)

    def loss_fn(out):
        return total_loss(out, h, g, g.labels, dcfg)

    def diagnostics(logits):
        if g.num_edges == 0:
            return math.nan, math.nan
        return mean_neighbor_cosine(logits, g), pairwise_distance_kl(logits, h, g)

    return _fit(g, params, student_cfg, dcfg.lr, dcfg.weight_decay, dcfg.epochs, dcfg.seed,
                dcfg.patience, loss_fn, diagnostics, f"student[{dcfg.mode.value}]")
