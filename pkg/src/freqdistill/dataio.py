"""Dataset loading, synthetic graphs, and checkpoint/embedding persistence."""

from __future__ import annotations

import csv
import json
import pickle
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import scipy.sparse as sp

from .graph import UNKNOWN_LABEL, Graph, GraphError, Split, build_graph, stratified_split
from .models import ModelConfig, ModelParams

GRAPH_FORMAT = "freqdistill.graph"
GRAPH_VERSION = 1

_ids = {"type": "array", "items": {"type": "integer", "minimum": 0}}

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "num_nodes", "num_classes", "features", "labels", "edges"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": GRAPH_FORMAT},
        "version": {"const": GRAPH_VERSION},
        "name": {"type": "string"},
        "num_nodes": {"type": "integer", "minimum": 0},
        "num_classes": {"type": "integer", "minimum": 0},
        "features": {
            "oneOf": [
                {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                {
                    "type": "object",
                    "required": ["shape", "row", "col", "value"],
                    "additionalProperties": False,
                    "properties": {
                        "shape": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                  "minItems": 2, "maxItems": 2},
                        "row": _ids,
                        "col": _ids,
                        "value": {"type": "array", "items": {"type": "number"}},
                    },
                },
            ]
        },
        "labels": {"type": "array", "items": {"type": "integer", "minimum": UNKNOWN_LABEL}},
        "edges": {"type": "array",
                  "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
        "split": {
            "type": "object",
            "required": ["train", "val", "test"],
            "additionalProperties": False,
            "properties": {"train": _ids, "val": _ids, "test": _ids},
        },
    },
}


class DataFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


# graph JSON ---------------------------------------------------------------------

def graph_to_json(g: Graph) -> dict:
    if sp.issparse(g.features):
        coo = g.features.tocoo()
        feats = {"shape": list(coo.shape), "row": coo.row.tolist(), "col": coo.col.tolist(),
                 "value": coo.data.tolist()}
    else:
        feats = g.features.tolist()
    src, dst = g.directed_pairs
    keep = src < dst
    doc = {
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "name": g.name,
        "num_nodes": g.num_nodes,
        "num_classes": g.num_classes,
        "features": feats,
        "labels": g.labels.tolist(),
        "edges": np.stack([src[keep], dst[keep]], axis=1).tolist(),
    }
    if g.split is not None:
        doc["split"] = {"train": g.split.train_ids.tolist(), "val": g.split.val_ids.tolist(),
                        "test": g.split.test_ids.tolist()}
    return doc


def save_graph_json(g: Graph, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_json(g), fh)


def graph_from_json(doc: dict) -> Graph:
    try:
        jsonschema.validate(doc, GRAPH_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DataFormatError(f"field '{where}': {exc.message}") from None
    n = doc["num_nodes"]
    if len(doc["labels"]) != n:
        raise DataFormatError(f"field 'labels': expected {n} entries, got {len(doc['labels'])}")
    feats = doc["features"]
    if isinstance(feats, dict):
        shape = tuple(feats["shape"])
        if shape[0] != n:
            raise DataFormatError(f"field 'features/shape': {shape[0]} rows for {n} nodes")
        features = sp.csr_matrix((feats["value"], (feats["row"], feats["col"])), shape=shape)
    else:
        if len(feats) != n:
            raise DataFormatError(f"field 'features': {len(feats)} rows for {n} nodes")
        widths = {len(r) for r in feats}
        if len(widths) > 1:
            raise DataFormatError("field 'features': rows have differing lengths")
        features = np.array(feats, dtype=np.float64).reshape(n, widths.pop() if widths else 0)
    for k, (i, j) in enumerate(doc["edges"]):
        if not (0 <= i < n and 0 <= j < n):
            raise DataFormatError(f"field 'edges/{k}': edge ({i}, {j}) references a node outside [0, {n})")
    split = None
    if "split" in doc:
        s = doc["split"]
        split = Split(s["train"], s["val"], s["test"])
    return build_graph(doc["edges"], features, doc["labels"], num_classes=doc["num_classes"],
                       split=split, name=doc.get("name", "graph"))


def load_graph_json(path) -> Graph:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return graph_from_json(doc)
    except (DataFormatError, GraphError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


# Planetoid ----------------------------------------------------------------------

PLANETOID_NAMES = ("cora", "citeseer", "pubmed")


def _unpickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def row_normalize(features):
    if sp.issparse(features):
        sums = np.asarray(features.sum(axis=1)).ravel()
        inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums != 0)
        return sp.csr_matrix(sp.diags(inv) @ features)
    sums = features.sum(axis=1, keepdims=True)
    return np.divide(features, sums, out=np.zeros_like(features), where=sums != 0)


def load_planetoid(root, name: str, normalize_features: bool = True) -> Graph:
    """Read the ``ind.<name>.*`` files with the standard public split.

    Train is the first ``len(y)`` nodes, validation the next 500, test the
    nodes listed in ``test.index``.
    """
    name = name.lower()
    if name not in PLANETOID_NAMES:
        raise DataFormatError(f"unknown Planetoid dataset {name!r}")
    root = Path(root)
    parts = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        path = root / f"ind.{name}.{key}"
        if not path.exists():
            raise FileNotFoundError(f"missing Planetoid file {path}")
        try:
            parts[key] = _unpickle(path)
        except Exception as exc:
            raise DataFormatError(f"corrupt Planetoid file {path}: {exc}") from None
    index_path = root / f"ind.{name}.test.index"
    if not index_path.exists():
        raise FileNotFoundError(f"missing Planetoid file {index_path}")
    test_idx_reorder = np.array([int(line) for line in index_path.read_text().split()], dtype=np.int64)
    test_idx_range = np.sort(test_idx_reorder)

    tx, ty = sp.csr_matrix(parts["tx"]), np.asarray(parts["ty"])
    if name == "citeseer":
        # some test ids are isolated nodes missing from tx/ty
        full = np.arange(test_idx_range.min(), test_idx_range.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_idx_range - test_idx_range.min(), :] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_idx_range - test_idx_range.min(), :] = ty
        ty = ty_ext

    features = sp.vstack([sp.csr_matrix(parts["allx"]), tx]).tolil()
    features[test_idx_reorder, :] = features[test_idx_range, :]
    onehot = np.vstack([np.asarray(parts["ally"]), ty])
    onehot[test_idx_reorder, :] = onehot[test_idx_range, :]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), UNKNOWN_LABEL)

    n = features.shape[0]
    edges = [(int(i), int(j)) for i, nbrs in parts["graph"].items() for j in nbrs
             if int(i) < n and int(j) < n]
    n_train = np.asarray(parts["y"]).shape[0]
    split = Split(np.arange(n_train), np.arange(n_train, n_train + 500), test_idx_range)
    features = features.tocsr().astype(np.float64)
    if normalize_features:
        features = row_normalize(features)
    return build_graph(edges, features, labels, num_classes=onehot.shape[1], split=split, name=name)


# synthetic SBM ------------------------------------------------------------------

@dataclass(frozen=True)
class SbmSpec:
    blocks: int = 2
    nodes_per_block: int = 30
    p_in: float = 0.5
    p_out: float = 0.05
    feature_dim: int = 8
    feature_noise: float = 0.5
    seed: int = 0
    train_per_class: int | None = None
    n_val: int | None = None
    n_test: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must be at least the number of blocks")
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ValueError("blocks and nodes_per_block must be positive")


def generate_sbm(sbm: SbmSpec) -> Graph:
    """Stochastic block model with Gaussian features around one-hot block means."""
    rng = np.random.default_rng(sbm.seed)
    n = sbm.blocks * sbm.nodes_per_block
    labels = np.repeat(np.arange(sbm.blocks), sbm.nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, sbm.p_in, sbm.p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    means = np.eye(sbm.blocks, sbm.feature_dim)
    features = means[labels] + sbm.feature_noise * rng.normal(size=(n, sbm.feature_dim))

    per_class = sbm.train_per_class or max(1, sbm.nodes_per_block // 5)
    rest = n - per_class * sbm.blocks
    n_val = sbm.n_val if sbm.n_val is not None else rest // 2
    n_test = sbm.n_test if sbm.n_test is not None else rest - n_val
    g = build_graph(edges, features, labels, num_classes=sbm.blocks, name="sbm")
    return g.with_split(stratified_split(g, per_class, n_val, n_test, seed=sbm.seed))


# checkpoints --------------------------------------------------------------------

CKPT_MAGIC = b"FQDCKPT\x00"
CKPT_VERSION = 1


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path, extra: dict | None = None) -> None:
    """Versioned header + JSON metadata + little-endian float64 payload."""
    names = list(params)
    payload = b"".join(np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in names)
    meta = {
        "config": cfg.to_dict(),
        "params": [{"name": k, "shape": list(params[k].shape)} for k in names],
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
        "extra": extra or {},
    }
    head = json.dumps(meta, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(head)))
        fh.write(head)
        fh.write(payload)
    tmp.replace(path)


def load_checkpoint(path, expect_arch: str | None = None) -> tuple[ModelParams, ModelConfig, dict]:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, head_len = struct.unpack("<II", blob[8:16])
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(blob) < 16 + head_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        meta = json.loads(blob[16:16 + head_len])
    except ValueError:
        raise CheckpointError(f"{path}: corrupt header") from None
    if not isinstance(meta, dict) or not {"config", "params", "payload_bytes", "crc32"} <= meta.keys():
        raise CheckpointError(f"{path}: header is missing required fields")
    payload = blob[16 + head_len:]
    if len(payload) != meta["payload_bytes"]:
        raise CheckpointError(f"{path}: truncated payload ({len(payload)} of {meta['payload_bytes']} bytes)")
    if zlib.crc32(payload) != meta["crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    cfg = ModelConfig(**meta["config"])
    if expect_arch is not None and cfg.arch != expect_arch.lower():
        raise CheckpointError(f"{path}: checkpoint holds a {cfg.arch} model, expected {expect_arch}")
    params = {}
    offset = 0
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
        params[entry["name"]] = arr.reshape(shape)
        offset += 8 * count
    return params, cfg, meta["extra"]


# embeddings ---------------------------------------------------------------------

def export_embeddings(s, labels, path) -> None:
    s = np.asarray(getattr(s, "data", s), dtype=np.float64)
    labels = np.asarray(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "label"] + [f"c{k}" for k in range(s.shape[1])])
        for i, row in enumerate(s):
            writer.writerow([i, int(labels[i])] + [format(float(v), ".17g") for v in row])


def import_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    labels = np.array([int(r[1]) for r in rows], dtype=np.int64)
    s = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64)
    return s, labels
