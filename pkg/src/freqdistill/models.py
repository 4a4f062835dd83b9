"""GCN, GraphSAGE and GAT teachers and the MLP student.

Models are bias-free. Hidden layers apply linear -> ReLU -> dropout; the
last layer returns raw logits. Parameters live in an ordered ``dict`` of
arrays keyed by layer (and head, for GAT).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Tensor
from .graph import Graph, mean_aggregator, normalized_adjacency

ARCHS = ("gcn", "sage", "gat", "mlp")

ModelParams = dict  # name -> np.ndarray, insertion-ordered


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    in_dim: int
    num_classes: int
    num_layers: int = 2
    hidden_dim: int = 256
    dropout: float = 0.5
    gat_heads: int = 8
    gat_out_heads: int = 1
    gat_slope: float = 0.2

    def __post_init__(self):
        arch = self.arch.lower()
        object.__setattr__(self, "arch", arch)
        if arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {ARCHS}")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ValueError("num_layers and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if arch == "gat" and self.num_layers > 1 and self.hidden_dim % self.gat_heads:
            raise ValueError("GAT hidden_dim must be divisible by gat_heads")

    @property
    def layer_dims(self) -> list[int]:
        return [self.in_dim] + [self.hidden_dim] * (self.num_layers - 1) + [self.num_classes]

    def to_dict(self) -> dict:
        return asdict(self)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    dims = cfg.layer_dims
    params: ModelParams = {}
    for l in range(cfg.num_layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        if cfg.arch == "sage":
            params[f"layer{l}.weight"] = _glorot(rng, 2 * fan_in, fan_out)
        elif cfg.arch == "gat":
            last = l == cfg.num_layers - 1
            heads = cfg.gat_out_heads if last else cfg.gat_heads
            width = fan_out if last else fan_out // heads
            for h in range(heads):
                params[f"layer{l}.head{h}.weight"] = _glorot(rng, fan_in, width)
                params[f"layer{l}.head{h}.att_src"] = _glorot(rng, width, 1)
                params[f"layer{l}.head{h}.att_dst"] = _glorot(rng, width, 1)
        else:
            params[f"layer{l}.weight"] = _glorot(rng, fan_in, fan_out)
    return params


def as_tensors(params: ModelParams, requires_grad: bool = True) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in params.items()}


def _linear(h, w: Tensor) -> Tensor:
    # h is a Tensor for hidden layers, a constant (possibly sparse) matrix at the input
    if isinstance(h, Tensor):
        return ag.matmul(h, w)
    return ag.spmm(h, w)


def _hidden(x: Tensor, cfg: ModelConfig, training: bool, rng) -> Tensor:
    return ag.dropout(ag.relu(x), cfg.dropout, rng, training)


def _as_param_tensors(params) -> dict[str, Tensor]:
    first = next(iter(params.values()))
    return params if isinstance(first, Tensor) else as_tensors(params, requires_grad=False)


def mlp_forward(params, X, cfg: ModelConfig, training: bool = False, rng=None,
                return_hidden: bool = False):
    """Logits of the student MLP; touches no graph structure."""
    p = _as_param_tensors(params)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    h = X
    hidden = []
    for l in range(cfg.num_layers):
        w = p[f"layer{l}.weight"]
        in_width = h.shape[1]
        if in_width != w.shape[0]:
            raise ValueError(f"layer {l}: input width {in_width} does not match weight {w.shape}")
        h = _linear(h, w)
        if l < cfg.num_layers - 1:
            h = _hidden(h, cfg, training, rng)
        hidden.append(h)
    return (h, hidden) if return_hidden else h


def gcn_forward(params, g: Graph, cfg: ModelConfig, training: bool = False, rng=None, adj=None):
    p = _as_param_tensors(params)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    adj = normalized_adjacency(g) if adj is None else adj
    h = g.feature_operand
    for l in range(cfg.num_layers):
        h = ag.spmm(adj, _linear(h, p[f"layer{l}.weight"]))
        if l < cfg.num_layers - 1:
            h = _hidden(h, cfg, training, rng)
    return h


def sage_forward(params, g: Graph, cfg: ModelConfig, training: bool = False, rng=None, agg=None):
    """Mean aggregator: h_i <- [h_i || mean_{j in N(i)} h_j] W."""
    p = _as_param_tensors(params)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    agg = mean_aggregator(g) if agg is None else agg
    h = g.feature_operand
    for l in range(cfg.num_layers):
        w = p[f"layer{l}.weight"]
        if isinstance(h, Tensor):
            both = ag.concat_cols([h, ag.spmm(agg, h)])
            h = ag.matmul(both, w)
        else:
            m = agg @ h
            both = sp.hstack([h, m], format="csr") if sp.issparse(h) else np.hstack([h, m])
            h = ag.spmm(both, w)
        if l < cfg.num_layers - 1:
            h = _hidden(h, cfg, training, rng)
    return h


def _gat_head(h, w: Tensor, a_src: Tensor, a_dst: Tensor, center, member, n, slope):
    wh = _linear(h, w)
    # score(i, j) = a_src . Wh_i + a_dst . Wh_j over the closed neighborhood of i
    s_center = ag.gather_rows(ag.matmul(wh, a_src), center)
    s_member = ag.gather_rows(ag.matmul(wh, a_dst), member)
    scores = ag.leaky_relu(ag.add(s_center, s_member), slope)
    alpha = ag.segment_softmax(scores, center, n)
    msgs = ag.mul(alpha, ag.gather_rows(wh, member))
    return ag.segment_sum(msgs, center, n), alpha


def gat_forward(params, g: Graph, cfg: ModelConfig, training: bool = False, rng=None,
                return_attention: bool = False):
    """Multi-head attention; heads concatenate on hidden layers, average at the output."""
    p = _as_param_tensors(params)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    center, member = g.closed_pairs
    n = g.num_nodes
    h = g.feature_operand
    attention = []
    for l in range(cfg.num_layers):
        last = l == cfg.num_layers - 1
        heads = cfg.gat_out_heads if last else cfg.gat_heads
        outs = []
        layer_alpha = []
        for k in range(heads):
            pre = f"layer{l}.head{k}."
            out, alpha = _gat_head(h, p[pre + "weight"], p[pre + "att_src"], p[pre + "att_dst"],
                                   center, member, n, cfg.gat_slope)
            outs.append(out)
            layer_alpha.append(alpha.data[:, 0])
        attention.append(np.stack(layer_alpha))
        if last:
            h = outs[0]
            for o in outs[1:]:
                h = ag.add(h, o)
            if heads > 1:
                h = ag.scale(h, 1.0 / heads)
        else:
            h = _hidden(ag.concat_cols(outs) if heads > 1 else outs[0], cfg, training, rng)
    return (h, attention) if return_attention else h


def forward(params, g: Graph, cfg: ModelConfig, training: bool = False, rng=None) -> Tensor:
    """Dispatch on ``cfg.arch``; the MLP only sees ``g``'s features."""
    if cfg.arch == "mlp":
        return mlp_forward(params, g.feature_operand, cfg, training, rng)
    if cfg.arch == "gcn":
        return gcn_forward(params, g, cfg, training, rng)
    if cfg.arch == "sage":
        return sage_forward(params, g, cfg, training, rng)
    return gat_forward(params, g, cfg, training, rng)
