"""Text-attributed case graphs built from relation triplets.

Each case section (fact or issue) becomes one graph. Entities are nodes,
relations are head->tail edges, and an optional virtual global node holds
the encoding of the whole section text. Every entity ``u`` gets one edge
``u -> global`` whose feature copies ``u``'s node feature; message passing
also runs that edge in reverse so the global node and the entities see
each other.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

SECTIONS = ("fact", "issue")
_ARTICLES = ("the ", "a ", "an ")
_WS = re.compile(r"\s+")


class GraphConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class Triplet:
    head: str
    relation: str
    tail: str
    section: str = "fact"

    def __post_init__(self):
        if not self.head.strip() or not self.tail.strip():
            raise ValueError(f"triplet head and tail must be non-empty: {self!r}")
        if self.section not in SECTIONS:
            raise ValueError(f"unknown section {self.section!r}")


def entity_key(text: str) -> str:
    """Deduplication key: lowercase, collapsed whitespace, no leading article."""
    key = _WS.sub(" ", text.strip().lower())
    for art in _ARTICLES:
        if key.startswith(art) and len(key) > len(art):
            key = key[len(art):]
            break
    return key


def relation_key(text: str) -> str:
    return _WS.sub(" ", text.strip().lower())


@dataclass(eq=False)
class CaseGraph:
    """One section of one case as a text-attributed multigraph."""

    case_id: str
    section: str
    node_texts: list[str]
    node_features: np.ndarray  # (n_nodes, dim)
    edge_src: np.ndarray  # (n_edges,)
    edge_dst: np.ndarray
    edge_texts: list[str]
    edge_features: np.ndarray  # (n_edges, dim)
    edge_is_global: np.ndarray  # bool, edges entity -> global node
    global_node: int | None

    @property
    def n_nodes(self) -> int:
        return len(self.node_texts)

    @property
    def n_edges(self) -> int:
        return len(self.edge_texts)

    @property
    def dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def nodes(self) -> list[tuple[int, str, np.ndarray]]:
        return [(i, t, self.node_features[i]) for i, t in enumerate(self.node_texts)]

    @property
    def edges(self) -> list[tuple[int, int, str, np.ndarray]]:
        return [
            (int(s), int(d), t, self.edge_features[i])
            for i, (s, d, t) in enumerate(zip(self.edge_src, self.edge_dst, self.edge_texts))
        ]

    def message_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed edges used for aggregation: ``(src, dst, feature_row)``.

        Global edges appear twice, once per direction, sharing one feature row.
        """
        glob = np.flatnonzero(self.edge_is_global)
        src = np.concatenate([self.edge_src, self.edge_dst[glob]])
        dst = np.concatenate([self.edge_dst, self.edge_src[glob]])
        feat = np.concatenate([np.arange(self.n_edges), glob])
        return src.astype(np.int64), dst.astype(np.int64), feat.astype(np.int64)

    def neighbors(self, v: int) -> set[int]:
        src, dst, _ = self.message_edges()
        return set(src[dst == v].tolist()) | set(dst[src == v].tolist())

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "section": self.section,
            "global_node": self.global_node,
            "nodes": [
                {"id": i, "text": t, "feature": f.tolist()} for i, t, f in self.nodes
            ],
            "edges": [
                {"src": s, "dst": d, "text": t, "feature": f.tolist(), "global": bool(g)}
                for (s, d, t, f), g in zip(self.edges, self.edge_is_global)
            ],
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "CaseGraph":
        nodes, edges = rec["nodes"], rec["edges"]
        dim = len(nodes[0]["feature"]) if nodes else 0
        return cls(
            case_id=rec["case_id"],
            section=rec["section"],
            node_texts=[n["text"] for n in nodes],
            node_features=np.array([n["feature"] for n in nodes], dtype=np.float64).reshape(-1, dim),
            edge_src=np.array([e["src"] for e in edges], dtype=np.int64),
            edge_dst=np.array([e["dst"] for e in edges], dtype=np.int64),
            edge_texts=[e["text"] for e in edges],
            edge_features=np.array([e["feature"] for e in edges], dtype=np.float64).reshape(-1, dim),
            edge_is_global=np.array([e["global"] for e in edges], dtype=bool),
            global_node=rec["global_node"],
        )


def _as_triplet(t, section: str) -> Triplet:
    if isinstance(t, Triplet):
        return t
    h, r, tail = t
    return Triplet(h, r, tail, section)


def build_graph(
    case_id: str,
    section: str,
    triplets: Sequence,
    section_text: str,
    encoder,
    virtual_node: bool = True,
) -> CaseGraph:
    """Build the graph of one case section.

    ``triplets`` may be :class:`Triplet` objects or plain ``(h, r, t)``
    tuples; identical triplets (after key normalisation) collapse to one
    edge, distinct relations between the same pair stay parallel.
    """
    trips = [_as_triplet(t, section) for t in triplets]
    for t in trips:
        if t.section != section:
            raise GraphConstructionError(
                f"{case_id}: triplet tagged {t.section!r} passed to the {section!r} graph"
            )

    node_index: dict[str, int] = {}
    rel_edges: list[tuple[int, int, str]] = []
    seen = set()
    for t in trips:
        h, tl, r = entity_key(t.head), entity_key(t.tail), relation_key(t.relation)
        if (h, r, tl) in seen:
            continue
        seen.add((h, r, tl))
        for key in (h, tl):
            node_index.setdefault(key, len(node_index))
        rel_edges.append((node_index[h], node_index[tl], r))

    node_texts = list(node_index)
    feats = [encoder.encode(t) for t in node_texts]
    edge_texts = [r for _, _, r in rel_edges]
    edge_feats = [encoder.encode(r) for r in edge_texts]
    src = [s for s, _, _ in rel_edges]
    dst = [d for _, d, _ in rel_edges]
    is_global = [False] * len(rel_edges)

    global_node = None
    if virtual_node:
        global_node = len(node_texts)
        node_texts.append(f"<global:{section}>")
        feats.append(encoder.encode_global(section_text))
        for u in range(global_node):
            src.append(u)
            dst.append(global_node)
            edge_texts.append(node_texts[u])
            edge_feats.append(feats[u])
            is_global.append(True)

    dims = {len(f) for f in feats} | {len(f) for f in edge_feats}
    if len(dims) > 1:
        raise GraphConstructionError(f"{case_id}/{section}: encoder produced dims {sorted(dims)}")
    dim = dims.pop() if dims else getattr(encoder, "dim", 0)

    return CaseGraph(
        case_id=case_id,
        section=section,
        node_texts=node_texts,
        node_features=np.array(feats, dtype=np.float64).reshape(-1, dim),
        edge_src=np.array(src, dtype=np.int64),
        edge_dst=np.array(dst, dtype=np.int64),
        edge_texts=edge_texts,
        edge_features=np.array(edge_feats, dtype=np.float64).reshape(-1, dim),
        edge_is_global=np.array(is_global, dtype=bool),
        global_node=global_node,
    )


# -- naive triplet extraction ---------------------------------------------

RELATION_VERBS = frozenset(
    """is are was were be been has have had filed files applied applies sought seeks
    claimed claims appealed appeals received receives granted grants denied denies
    refused refuses rejected rejects issued issues alleged alleges argued argues
    submitted submits requested requests entered enters made makes found finds
    holds held obtained obtains lives lived worked works owns owned""".split()
)
_SENT_SPLIT = re.compile(r"(?<=[.!?])\s+")
_EDGE_PUNCT = ".,;:!?\"'()[]"


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENT_SPLIT.split(text.strip()) if s]


def extract_triplets_naive(sentences: Sequence[str], section: str = "fact") -> list[Triplet]:
    """Single-verb pattern extraction: ``<subject> <verb> <object>``.

    The first word from :data:`RELATION_VERBS` after position 0 splits the
    sentence. The sentence-initial capital is dropped; everything else keeps
    its surface form. Sentences without a match are skipped.
    """
    out = []
    for sent in sentences:
        words = [w.strip(_EDGE_PUNCT) for w in sent.split()]
        words = [w for w in words if w]
        if len(words) < 3:
            continue
        words[0] = words[0][:1].lower() + words[0][1:]
        for i in range(1, len(words) - 1):
            if words[i].lower() in RELATION_VERBS:
                out.append(
                    Triplet(" ".join(words[:i]), words[i].lower(), " ".join(words[i + 1:]), section)
                )
                break
    return out


class GraphBuilder(TransformerMixin, BaseEstimator):
    """Turns :class:`~graphret.io.CaseRecord` objects into (fact, issue) graph pairs."""

    def __init__(self, encoder=None, virtual_node: bool = True):
        self.encoder = encoder
        self.virtual_node = virtual_node

    def fit(self, X=None, y=None):
        return self

    def _encoder(self):
        if self.encoder is None:
            from .encoder import HashingEncoder

            return HashingEncoder()
        return self.encoder

    def build_case(self, case) -> tuple[CaseGraph, CaseGraph]:
        enc = self._encoder()
        fact = build_graph(case.case_id, "fact", case.fact_triplets, case.fact_text, enc, self.virtual_node)
        issue = build_graph(case.case_id, "issue", case.issue_triplets, case.issue_text, enc, self.virtual_node)
        return fact, issue

    def transform(self, X) -> list[tuple[CaseGraph, CaseGraph]]:
        return [self.build_case(c) for c in X]
