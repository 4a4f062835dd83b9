"""Undirected attributed graphs and the normalized operators built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

UNKNOWN_LABEL = -1


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray

    def __post_init__(self):
        for name in ("train_ids", "val_ids", "test_ids"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.train_ids) == 0:
            raise GraphError("train set must be non-empty")
        sets = [set(self.train_ids.tolist()), set(self.val_ids.tolist()), set(self.test_ids.tolist())]
        total = sum(len(s) for s in sets)
        if len(sets[0] | sets[1] | sets[2]) != total:
            raise GraphError("train/val/test ids must be pairwise disjoint and unique")

    def validate(self, num_nodes: int) -> None:
        for name in ("train_ids", "val_ids", "test_ids"):
            ids = getattr(self, name)
            if len(ids) and (ids.min() < 0 or ids.max() >= num_nodes):
                raise GraphError(f"{name} contains ids outside [0, {num_nodes})")

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("train_ids", "val_ids", "test_ids")
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph stored as symmetric CSR neighbor lists.

    ``features`` is either a dense ``(N, d)`` float64 array or a scipy CSR
    matrix (bag-of-words datasets stay sparse). ``labels`` uses
    ``UNKNOWN_LABEL`` for nodes without a class.
    """

    features: np.ndarray | sp.csr_matrix
    labels: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    num_classes: int
    split: Split | None = None
    name: str = field(default="graph", compare=False)

    @property
    def num_nodes(self) -> int:
        return self.labels.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Undirected edge count |E|."""
        return len(self.indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def directed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) for every ordered neighbor pair, 2|E| entries, src-major."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        src.setflags(write=False)
        return src, self.indices

    @cached_property
    def closed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(center, member) over every closed neighborhood, 2|E| + N entries."""
        src, dst = self.directed_pairs
        loops = np.arange(self.num_nodes)
        center = np.concatenate([src, loops])
        member = np.concatenate([dst, loops])
        order = np.lexsort((member, center))
        return center[order], member[order]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    @cached_property
    def sparse_features(self) -> sp.csr_matrix:
        if sp.issparse(self.features):
            return self.features.tocsr()
        return sp.csr_matrix(self.features)

    @cached_property
    def dense_features(self) -> np.ndarray:
        if sp.issparse(self.features):
            return np.asarray(self.features.todense(), dtype=np.float64)
        return self.features

    @cached_property
    def feature_operand(self):
        """Features in whichever form multiplies fastest against weights."""
        if sp.issparse(self.features):
            nnz = self.features.nnz
        else:
            nnz = np.count_nonzero(self.features)
        size = max(self.features.shape[0] * self.features.shape[1], 1)
        if nnz / size < 0.1:
            return self.sparse_features
        return self.dense_features

    def with_split(self, split: Split) -> "Graph":
        split.validate(self.num_nodes)
        return Graph(self.features, self.labels, self.indptr, self.indices,
                     self.num_classes, split, self.name)

    def without_edges(self) -> "Graph":
        n = self.num_nodes
        return Graph(self.features, self.labels, np.zeros(n + 1, dtype=np.int64),
                     np.zeros(0, dtype=np.int64), self.num_classes, self.split, self.name)

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Relabel nodes so that old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        src, dst = self.directed_pairs
        feats = self.features[perm]
        split = None
        if self.split is not None:
            split = Split(inv[self.split.train_ids], inv[self.split.val_ids], inv[self.split.test_ids])
        return build_graph(np.stack([inv[src], inv[dst]], axis=1), feats, self.labels[perm],
                           num_classes=self.num_classes, split=split, name=self.name)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if sp.issparse(self.features) != sp.issparse(other.features):
            return False
        if sp.issparse(self.features):
            same_x = (self.features.shape == other.features.shape
                      and (self.features != other.features).nnz == 0)
        else:
            same_x = np.array_equal(self.features, other.features)
        return (same_x
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and self.num_classes == other.num_classes
                and self.split == other.split)

    __hash__ = None


def build_graph(edges, features, labels, num_classes: int | None = None,
                split: Split | None = None, name: str = "graph") -> Graph:
    """Build a symmetric, deduplicated, self-loop-free graph.

    Directed or duplicated pairs in ``edges`` are symmetrized and merged,
    self-loops are dropped.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = labels.shape[0]
    if sp.issparse(features):
        features = sp.csr_matrix(features, dtype=np.float64)
    else:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise GraphError("features must be a 2-D matrix")
    if features.shape[0] != n:
        raise GraphError(f"feature matrix has {features.shape[0]} rows but there are {n} nodes")

    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2) if len(edges) else np.zeros((0, 2), np.int64)
    if len(edges):
        bad = (edges < 0) | (edges >= n)
        if bad.any():
            k = int(np.argmax(bad.any(axis=1)))
            raise GraphError(f"edge ({edges[k, 0]}, {edges[k, 1]}) references a node outside [0, {n})")
    edges = edges[edges[:, 0] != edges[:, 1]]
    both = np.concatenate([edges, edges[:, ::-1]])
    adj = sp.csr_matrix((np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(n, n))
    adj.sum_duplicates()
    adj.sort_indices()

    known = labels[labels != UNKNOWN_LABEL]
    if len(known) and known.min() < 0:
        raise GraphError("labels must be non-negative class ids or UNKNOWN_LABEL")
    if num_classes is None:
        num_classes = int(known.max()) + 1 if len(known) else 0
    if len(known) and known.max() >= num_classes:
        raise GraphError(f"label {known.max()} is not below num_classes={num_classes}")

    if split is not None:
        split.validate(n)

    indptr = adj.indptr.astype(np.int64)
    indices = adj.indices.astype(np.int64)
    for arr in (labels, indptr, indices):
        arr.setflags(write=False)
    if not sp.issparse(features):
        features.setflags(write=False)
    return Graph(features, labels, indptr, indices, int(num_classes), split, name)


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """D~^{-1/2} (A + I) D~^{-1/2} as a symmetric CSR matrix."""
    n = g.num_nodes
    a_tilde = g.adjacency + sp.identity(n, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    out = (inv_sqrt @ a_tilde @ inv_sqrt).tocsr()
    out.sort_indices()
    return out


def mean_aggregator(g: Graph) -> sp.csr_matrix:
    """Row-normalized adjacency without self-loops; isolated rows are zero."""
    deg = g.degrees.astype(np.float64)
    scale = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return (sp.diags(scale) @ g.adjacency).tocsr()


DENSE_CAP = 4000


def graph_laplacian(g: Graph, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense normalized Laplacian I - D~^{-1/2} A~ D~^{-1/2}."""
    if g.num_nodes > cap:
        raise GraphError(f"graph has {g.num_nodes} nodes, dense Laplacian cap is {cap}")
    return np.eye(g.num_nodes) - normalized_adjacency(g).toarray()


def stratified_split(g: Graph, per_class: int, n_val: int, n_test: int, seed: int) -> Split:
    """Pick ``per_class`` training nodes per class, then val/test from the rest."""
    rng = np.random.default_rng(seed)
    labels = g.labels
    train = []
    for c in range(g.num_classes):
        members = np.flatnonzero(labels == c)
        if len(members) < per_class:
            raise GraphError(f"class {c} has {len(members)} labeled nodes, need {per_class}")
        train.append(rng.choice(members, size=per_class, replace=False))
    train_ids = np.sort(np.concatenate(train)) if train else np.zeros(0, np.int64)

    pool = np.setdiff1d(np.flatnonzero(labels != UNKNOWN_LABEL), train_ids)
    if n_val + n_test > len(pool):
        raise GraphError(f"need {n_val + n_test} labeled nodes for val/test, only {len(pool)} remain")
    pool = rng.permutation(pool)
    return Split(train_ids, np.sort(pool[:n_val]), np.sort(pool[n_val:n_val + n_test]))
