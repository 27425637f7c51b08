"""Unsupervised antisymmetric graph neural network for community detection."""

from uagnn.graph import (
    EdgeSplit,
    Graph,
    GraphFormatError,
    generate_sbm,
    homophily,
    load_graph,
    normalize_sym,
    save_graph,
    split_edges,
    to_adjacency,
)
from uagnn.kmeans import Partition, kmeans
from uagnn.metrics import conductance, hungarian, macro_f1, nmi
from uagnn.model import Aggregation, HyperParams, ModelParams, decode, encode, init_params
from uagnn.sparse import SparseMatrix
from uagnn.training import random_search, train

__version__ = "0.1.0"

__all__ = [
    "Aggregation",
    "EdgeSplit",
    "Graph",
    "GraphFormatError",
    "HyperParams",
    "ModelParams",
    "Partition",
    "SparseMatrix",
    "conductance",
    "decode",
    "encode",
    "generate_sbm",
    "homophily",
    "hungarian",
    "init_params",
    "kmeans",
    "load_graph",
    "macro_f1",
    "nmi",
    "normalize_sym",
    "random_search",
    "save_graph",
    "split_edges",
    "to_adjacency",
    "train",
]
