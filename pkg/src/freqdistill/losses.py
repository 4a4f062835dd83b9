"""Label, node-to-node, low-frequency and high-frequency distillation losses.

Student logits ``z`` are Tensors; teacher logits ``h`` are treated as
constants whatever type they arrive as. Every KL term is
``KL(student || teacher)``.
"""

from __future__ import annotations

import enum

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .graph import Graph


class DistillMode(str, enum.Enum):
    LABEL_ONLY = "label-only"
    GLNN = "glnn"
    LFD_ONLY = "lfd"
    HFD_ONLY = "hfd"
    FF_G2M = "ff-g2m"


def _const(h) -> Tensor:
    data = h.data if isinstance(h, Tensor) else np.asarray(h, dtype=np.float64)
    return Tensor(data)


def _zero() -> Tensor:
    return Tensor(0.0)


def label_loss(logits: Tensor, labels, train_ids) -> Tensor:
    train_ids = np.asarray(train_ids, dtype=np.int64)
    if len(train_ids) == 0:
        raise ValueError("label loss needs at least one labeled node")
    return ag.cross_entropy(logits, np.asarray(labels)[train_ids], rows=train_ids)


def glnn_loss(z: Tensor, h) -> Tensor:
    """Node-to-node KD over every node at unit temperature."""
    return ag.kl_rows(z, _const(h), 1.0)


def _denominator_scale(pairs: int, g: Graph, literal: bool) -> float:
    # kl_rows already averages over pairs; literal mode re-normalizes by |E|
    if not literal or g.num_edges == 0:
        return 1.0
    return pairs / g.num_edges


def lfd_loss(z: Tensor, h, g: Graph, tau1: float = 1.0, literal_denominator: bool = False) -> Tensor:
    """KL between each student neighbor z_j (closed neighborhood) and teacher center h_i."""
    center, member = g.closed_pairs
    loss = ag.kl_rows(ag.gather_rows(z, member), Tensor(_const(h).data[center]), tau1)
    factor = _denominator_scale(len(center), g, literal_denominator)
    return loss if factor == 1.0 else ag.scale(loss, factor)


def hfd_loss(z: Tensor, h, g: Graph, tau2: float = 1.0, literal_denominator: bool = False) -> Tensor:
    """KL between softmax-normalized |z_i - z_j| and |h_i - h_j| over directed edges."""
    if not tau2 > 0:
        raise ValueError(f"temperature must be positive, got {tau2}")
    src, dst = g.directed_pairs
    if len(src) == 0:
        return _zero()
    h_data = _const(h).data
    k_student = ag.elementwise_abs(ag.sub(ag.gather_rows(z, src), ag.gather_rows(z, dst)))
    k_teacher = Tensor(np.abs(h_data[src] - h_data[dst]))
    loss = ag.kl_rows(k_student, k_teacher, tau2)
    factor = _denominator_scale(len(src), g, literal_denominator)
    return loss if factor == 1.0 else ag.scale(loss, factor)


def total_loss(z: Tensor, h, g: Graph, labels, cfg) -> tuple[Tensor, dict]:
    """Weighted objective for ``cfg.mode`` plus a float breakdown of its parts.

    ``cfg`` is any object with ``mode``, ``lam``, ``tau1``, ``tau2`` and
    ``literal_denominator`` attributes.
    """
    mode = DistillMode(cfg.mode)
    if g.split is None:
        raise ValueError("graph has no split")
    ce = label_loss(z, labels, g.split.train_ids)
    parts = {"ce": ce.item(), "kd": float("nan"), "lfd": float("nan"), "hfd": float("nan")}
    lam = cfg.lam
    if mode is DistillMode.LABEL_ONLY or lam == 1.0:
        parts["total"] = parts["ce"]
        return ce, parts

    literal = cfg.literal_denominator
    if mode is DistillMode.GLNN:
        kd = glnn_loss(z, h)
        parts["kd"] = kd.item()
    elif mode is DistillMode.LFD_ONLY:
        kd = lfd_loss(z, h, g, cfg.tau1, literal)
        parts["lfd"] = kd.item()
    elif mode is DistillMode.HFD_ONLY:
        kd = hfd_loss(z, h, g, cfg.tau2, literal)
        parts["hfd"] = kd.item()
    else:
        lfd = lfd_loss(z, h, g, cfg.tau1, literal)
        hfd = hfd_loss(z, h, g, cfg.tau2, literal)
        parts["lfd"], parts["hfd"] = lfd.item(), hfd.item()
        kd = ag.add(lfd, hfd)

    total = ag.add(ag.scale(ce, lam), ag.scale(kd, 1.0 - lam))
    parts["total"] = total.item()
    return total, parts
