"""Graph-based case retrieval: text-attributed case graphs, edge-aware
graph attention, contrastive training, and BM25 two-stage ranking."""

from .bm25 import BM25, build_index
from .encoder import HashingEncoder, TableEncoder
from .estimator import EdgeGATRetriever
from .graph import CaseGraph, GraphBuilder, Triplet, build_graph, extract_triplets_naive
from .io import CaseRecord, load_cases, load_labels
from .metrics import EvalReport, evaluate
from .model import EdgeGATNetwork, ModelConfig, load_checkpoint, save_checkpoint
from .ranking import RankedList, rank_one_stage, rank_two_stage
from .training import TrainConfig, contrastive_loss

__version__ = "0.1.0"

__all__ = [
    "BM25",
    "build_index",
    "HashingEncoder",
    "TableEncoder",
    "EdgeGATRetriever",
    "CaseGraph",
    "GraphBuilder",
    "Triplet",
    "build_graph",
    "extract_triplets_naive",
    "CaseRecord",
    "load_cases",
    "load_labels",
    "EvalReport",
    "evaluate",
    "EdgeGATNetwork",
    "ModelConfig",
    "load_checkpoint",
    "save_checkpoint",
    "RankedList",
    "rank_one_stage",
    "rank_two_stage",
    "TrainConfig",
    "contrastive_loss",
]
