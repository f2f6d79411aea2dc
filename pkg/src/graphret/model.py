"""Edge-aware multi-head graph attention network and graph readout.

Layer update for node ``v`` (row-vector convention, ``h @ W``)::

    h'_v = h_v W_s + mean_k sum_{u in N(v)} a^k_uv (h_u W_n^k + e_uv W_e^k)
    a^k_.v = softmax_u LeakyReLU([h_v W_n^k || h_u W_n^k || e_uv W_e^k] . w_att^k)

``N(v)`` is the set of in-neighbours over the graph's message edges. Edge
features are the same input vectors at every layer. Several graphs are
evaluated together by packing them into one disjoint union.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .graph import CaseGraph
from .tensor import ShapeError, Tensor

VARIANTS = ("edgegat", "gat", "gcn")
READOUTS = ("virtual_global", "average")

CHECKPOINT_MAGIC = b"GRAPHRET-CHECKPOINT\n"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class ModelConfig:
    in_dim: int = 32
    layer_dims: list[int] = field(default_factory=lambda: [32, 32])
    edge_dim: int | None = None  # defaults to in_dim
    n_heads: int = 2
    readout: str = "virtual_global"
    variant: str = "edgegat"
    dropout: float = 0.1
    leaky_slope: float = 0.2
    virtual_node: bool = True

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if self.edge_dim is None:
            self.edge_dim = self.in_dim
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        if self.readout == "virtual_global" and not self.virtual_node:
            raise ValueError("virtual_global readout needs graphs built with a virtual node")
        if self.n_heads < 1:
            raise ValueError("n_heads must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not self.layer_dims:
            raise ValueError("need at least one layer")

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class HeadParams:
    W_n: Tensor
    w_att: Tensor | None = None  # column vector, 3*d_out (edgegat) or 2*d_out (gat)
    W_e: Tensor | None = None


@dataclass
class LayerParams:
    W_s: Tensor
    heads: list[HeadParams]

    @property
    def in_dim(self) -> int:
        return self.W_s.rows

    @property
    def out_dim(self) -> int:
        return self.W_s.cols


def _uniform(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    a = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True)


def init_layer(
    rng: np.random.Generator, d_in: int, d_out: int, edge_dim: int, n_heads: int, variant: str
) -> LayerParams:
    W_s = _uniform(rng, d_in, d_out)
    if variant == "gcn":
        return LayerParams(W_s, [HeadParams(_uniform(rng, d_in, d_out))])
    heads = []
    for _ in range(n_heads):
        W_n = _uniform(rng, d_in, d_out)
        if variant == "edgegat":
            W_e = _uniform(rng, edge_dim, d_out)
            heads.append(HeadParams(W_n, _uniform(rng, 3 * d_out, 1), W_e))
        else:
            heads.append(HeadParams(W_n, _uniform(rng, 2 * d_out, 1)))
    return LayerParams(W_s, heads)


class GraphBatch:
    """Disjoint union of graphs with re-indexed message edges."""

    def __init__(self, graphs: Sequence[CaseGraph]):
        self.n_graphs = len(graphs)
        dims = {g.dim for g in graphs if g.n_nodes}
        if len(dims) > 1:
            raise ShapeError(f"graphs in one batch have feature dims {sorted(dims)}")
        dim = dims.pop() if dims else 0
        node_feats, edge_feats = [], []
        src, dst, feat, node_graph, glob = [], [], [], [], []
        n_off = e_off = 0
        for gi, g in enumerate(graphs):
            s, d, f = g.message_edges()
            src.append(s + n_off)
            dst.append(d + n_off)
            feat.append(f + e_off)
            node_feats.append(g.node_features)
            edge_feats.append(g.edge_features)
            node_graph.append(np.full(g.n_nodes, gi, dtype=np.int64))
            glob.append(-1 if g.global_node is None else g.global_node + n_off)
            n_off += g.n_nodes
            e_off += g.n_edges
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
        self.n_nodes = n_off
        self.src = cat(src, np.int64)
        self.dst = cat(dst, np.int64)
        self.edge_feature_index = cat(feat, np.int64)
        self.node_graph = cat(node_graph, np.int64)
        self.global_nodes = np.array(glob, dtype=np.int64)
        self.node_features = np.concatenate(node_feats).reshape(-1, dim) if graphs else np.zeros((0, 0))
        self.edge_features = np.concatenate(edge_feats).reshape(-1, dim) if graphs else np.zeros((0, 0))
        self.in_degree = np.bincount(self.dst, minlength=self.n_nodes)


def _as_batch(g) -> GraphBatch:
    return g if isinstance(g, GraphBatch) else GraphBatch([g])


def layer_forward(
    p: LayerParams,
    g,
    h_nodes: Tensor,
    h_edges: Tensor,
    variant: str = "edgegat",
    training: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    slope: float = 0.2,
    layer_index: int = 0,
    attention: list | None = None,
) -> Tensor:
    """One message-passing layer; returns the updated node matrix.

    ``h_edges`` holds one row per stored edge (``g.edge_features`` order).
    When ``attention`` is a list, each head's per-message-edge weights are
    appended to it as a flat array.
    """
    b = _as_batch(g)
    if h_nodes.cols != p.in_dim:
        raise ShapeError(f"layer {layer_index}: node features have dim {h_nodes.cols}, expected {p.in_dim}")
    if h_nodes.rows != b.n_nodes:
        raise ShapeError(f"layer {layer_index}: {h_nodes.rows} node rows for {b.n_nodes} nodes")
    if variant == "edgegat" and b.src.size and h_edges.cols != p.heads[0].W_e.rows:
        raise ShapeError(
            f"layer {layer_index}: edge features have dim {h_edges.cols}, expected {p.heads[0].W_e.rows}"
        )

    out = T.matmul(h_nodes, p.W_s)
    if b.src.size:
        if variant == "gcn":
            agg = _gcn_aggregate(p.heads[0], b, h_nodes)
        else:
            head_outs = [
                _attention_head(hp, b, h_nodes, h_edges, variant, slope, attention)
                for hp in p.heads
            ]
            agg = head_outs[0]
            for h in head_outs[1:]:
                agg = T.add(agg, h)
            if len(head_outs) > 1:
                agg = T.scale(agg, 1.0 / len(head_outs))
        out = T.add(out, agg)
    if training and dropout > 0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        out = T.dropout(out, dropout, rng, training=True)
    return out


def _attention_head(hp: HeadParams, b: GraphBatch, h_nodes, h_edges, variant, slope, attention):
    z = T.matmul(h_nodes, hp.W_n)
    z_dst = T.gather_rows(z, b.dst)
    z_src = T.gather_rows(z, b.src)
    if variant == "edgegat":
        ze = T.gather_rows(T.matmul(h_edges, hp.W_e), b.edge_feature_index)
        logits_in = T.concat_cols(z_dst, z_src, ze)
        msg = T.add(z_src, ze)
    else:
        logits_in = T.concat_cols(z_dst, z_src)
        msg = z_src
    logits = T.leaky_relu(T.matmul(logits_in, hp.w_att), slope)
    alpha = T.segment_softmax(logits, b.dst, b.n_nodes)
    if attention is not None:
        attention.append(alpha.data[:, 0].copy())
    return T.segment_sum(T.mul(alpha, msg), b.dst, b.n_nodes)


def _gcn_aggregate(hp: HeadParams, b: GraphBatch, h_nodes):
    deg = np.maximum(b.in_degree, 1).astype(np.float64)
    coef = 1.0 / np.sqrt(deg[b.src] * deg[b.dst])
    z_src = T.gather_rows(T.matmul(h_nodes, hp.W_n), b.src)
    weighted = T.mul(z_src, Tensor(coef[:, None]))
    return T.segment_sum(weighted, b.dst, b.n_nodes)


def readout(g, h_nodes: Tensor, mode: str = "virtual_global") -> Tensor:
    """Graph vectors, one row per graph in ``g``."""
    b = _as_batch(g)
    if mode == "virtual_global":
        if np.any(b.global_nodes < 0):
            raise ValueError("virtual_global readout on a graph without a virtual node")
        return T.gather_rows(h_nodes, b.global_nodes)
    if mode == "average":
        return T.segment_mean(h_nodes, b.node_graph, b.n_graphs)
    raise ValueError(f"unknown readout mode {mode!r}")


class EdgeGATNetwork:
    """Stacked layers plus readout; parameters shared by fact and issue graphs."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers: list[LayerParams] = []
        d_in = config.in_dim
        for d_out in config.layer_dims:
            self.layers.append(
                init_layer(rng, d_in, d_out, config.edge_dim, config.n_heads, config.variant)
            )
            d_in = d_out

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for li, layer in enumerate(self.layers):
            out.append((f"layers.{li}.W_s", layer.W_s))
            for k, hp in enumerate(layer.heads):
                out.append((f"layers.{li}.heads.{k}.W_n", hp.W_n))
                if hp.W_e is not None:
                    out.append((f"layers.{li}.heads.{k}.W_e", hp.W_e))
                if hp.w_att is not None:
                    out.append((f"layers.{li}.heads.{k}.w_att", hp.w_att))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def node_states(
        self, g, training: bool = False, rng: np.random.Generator | None = None, attention=None
    ) -> Tensor:
        b = _as_batch(g)
        h = Tensor(b.node_features)
        e = Tensor(b.edge_features)
        for li, layer in enumerate(self.layers):
            h = layer_forward(
                layer, b, h, e,
                variant=self.config.variant,
                training=training,
                dropout=self.config.dropout,
                rng=rng,
                slope=self.config.leaky_slope,
                layer_index=li,
                attention=attention,
            )
        return h

    def graph_vectors(self, graphs, training: bool = False, rng=None) -> Tensor:
        b = _as_batch(graphs) if isinstance(graphs, (GraphBatch, CaseGraph)) else GraphBatch(graphs)
        return readout(b, self.node_states(b, training, rng), self.config.readout)

    def case_representation(
        self, fact_graphs, issue_graphs, training: bool = False, rng=None
    ) -> Tensor:
        """Rows ``readout(fact) || readout(issue)`` of width ``2 * out_dim``."""
        if isinstance(fact_graphs, CaseGraph):
            fact_graphs, issue_graphs = [fact_graphs], [issue_graphs]
        if len(fact_graphs) != len(issue_graphs):
            raise ShapeError("fact and issue graph lists differ in length")
        hf = self.graph_vectors(fact_graphs, training, rng)
        hi = self.graph_vectors(issue_graphs, training, rng)
        return T.concat_cols(hf, hi)

    def encode(self, pairs: Sequence[tuple[CaseGraph, CaseGraph]]) -> np.ndarray:
        """Eval-mode representations as a plain array."""
        if not pairs:
            return np.zeros((0, 2 * self.config.out_dim))
        facts = [p[0] for p in pairs]
        issues = [p[1] for p in pairs]
        return self.case_representation(facts, issues).data


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(net: EdgeGATNetwork, path, extra: dict | None = None) -> None:
    """Write a self-describing checkpoint.

    Layout: the magic line, one line of JSON header, then every tensor as
    little-endian float64 in header order. The header records the payload
    length and its SHA-256.
    """
    named = net.named_parameters()
    payload = b"".join(p.data.astype("<f8").tobytes() for _, p in named)
    header = {
        "format": "graphret-checkpoint",
        "version": CHECKPOINT_VERSION,
        "seed": net.seed,
        "config": asdict(net.config),
        "extra": extra or {},
        "tensors": [{"name": n, "shape": list(p.shape)} for n, p in named],
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)


def load_checkpoint(path) -> tuple[EdgeGATNetwork, dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(network, header)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    raw = path.read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointFormatError(f"{path}: missing checkpoint header")
    rest = raw[len(CHECKPOINT_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointFormatError(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError:
        raise CheckpointFormatError(f"{path}: corrupt header") from None
    if header.get("format") != "graphret-checkpoint":
        raise CheckpointFormatError(f"{path}: not a graphret checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"{path}: checkpoint version {header.get('version')} != supported {CHECKPOINT_VERSION}"
        )
    payload = rest[nl + 1:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointFormatError(
            f"{path}: payload has {len(payload)} bytes, header says {header['payload_bytes']}"
        )
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointFormatError(f"{path}: payload checksum mismatch")

    net = EdgeGATNetwork(ModelConfig(**header["config"]), seed=header["seed"])
    named = dict(net.named_parameters())
    offset = 0
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in named or named[name].shape != shape:
            raise CheckpointFormatError(f"{path}: unexpected tensor {name} {shape}")
        n = int(np.prod(shape)) * 8
        named[name].data[...] = np.frombuffer(payload[offset:offset + n], dtype="<f8").reshape(shape)
        offset += n
    return net, header

