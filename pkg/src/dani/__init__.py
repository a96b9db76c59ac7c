"""Directed network inference from timestamped diffusion cascades."""

from .cascades import CascadeCorpus, CascadeVector, DegenerateCascade, build_corpus, dataset_stats
from .inference import WeightedEdgeList, infer, select_edges, transition_matrix, cooccurrence, dani_weights
from .io import CascadeLog, FormatError, RawCascade, parse_cascades, parse_edge_list, write_edge_list
from .pipeline import infer_pipeline

__all__ = [
    "CascadeCorpus",
    "CascadeLog",
    "CascadeVector",
    "DegenerateCascade",
    "FormatError",
    "RawCascade",
    "WeightedEdgeList",
    "build_corpus",
    "cooccurrence",
    "dani_weights",
    "dataset_stats",
    "infer",
    "infer_pipeline",
    "parse_cascades",
    "parse_edge_list",
    "select_edges",
    "transition_matrix",
    "write_edge_list",
]
