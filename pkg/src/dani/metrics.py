"""Scores comparing an inferred graph to the ground truth.

Link metrics treat every ordered pair ``u != v`` as a binary classification.
Structural metrics (conductance, density, clustering, connected nodes) are
computed on the undirected projection of the graph.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

JS_EPSILON = 1e-9


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def link_f1(truth: nx.DiGraph, inferred: nx.DiGraph) -> tuple[float, float, float]:
    """``(F1, macro F1, micro F1)`` over all ordered node pairs of the union node set.

    Micro F1 of a single-label binary problem is the accuracy.
    """
    nodes = set(truth.nodes) | set(inferred.nodes)
    n = len(nodes)
    total = n * (n - 1)
    true_edges = {(u, v) for u, v in truth.edges if u != v}
    pred_edges = {(u, v) for u, v in inferred.edges if u != v}
    tp = len(true_edges & pred_edges)
    fp = len(pred_edges) - tp
    fn = len(true_edges) - tp
    tn = total - tp - fp - fn
    if not true_edges:
        logger.warning("ground truth has no edges; F1 reported as 0")
    f1_pos = _f1(tp, fp, fn) if true_edges else 0.0
    # no negatives on either side (complete graphs) counts as perfect agreement
    f1_neg = _f1(tn, fn, fp) if (tn + fp + fn) else 1.0
    accuracy = (tp + tn) / total if total else 1.0
    return f1_pos, (f1_pos + f1_neg) / 2, accuracy


@dataclass(frozen=True)
class DegreeDistribution:
    support: tuple[int, ...]
    mass: tuple[float, ...]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.support, self.mass))


def degrees(graph: nx.DiGraph, mode: str = "total") -> dict:
    if mode == "total":
        return dict(graph.degree())
    if mode == "in":
        return dict(graph.in_degree())
    if mode == "out":
        return dict(graph.out_degree())
    raise ValueError(f"unknown degree mode {mode!r}")


def degree_distribution(graph: nx.DiGraph, mode: str = "total") -> DegreeDistribution:
    values = list(degrees(graph, mode).values())
    if not values:
        return DegreeDistribution((), ())
    support, counts = np.unique(values, return_counts=True)
    mass = counts / counts.sum()
    return DegreeDistribution(tuple(int(s) for s in support), tuple(float(m) for m in mass))


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def js_distance(p: DegreeDistribution, q: DegreeDistribution, eps: float = JS_EPSILON) -> float:
    """``sqrt((KL(P||Q) + KL(Q||P)) / 2)`` after additive smoothing on the union support."""
    support = sorted(set(p.support) | set(q.support))
    if not support:
        return 0.0
    pd, qd = p.as_dict(), q.as_dict()
    pv = np.array([pd.get(s, 0.0) for s in support]) + eps
    qv = np.array([qd.get(s, 0.0) for s in support]) + eps
    pv /= pv.sum()
    qv /= qv.sum()
    return math.sqrt(max((_kl(pv, qv) + _kl(qv, pv)) / 2, 0.0))


def undirected(graph: nx.DiGraph) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(graph.nodes)
    g.add_edges_from((u, v) for u, v in graph.edges if u != v)
    return g


def conductance(graph: nx.Graph, cluster: Iterable) -> float:
    cluster = set(cluster)
    volume = sum(graph.degree(u) for u in cluster)
    if volume == 0:
        return 0.0
    cut = sum(1 for u in cluster for v in graph.neighbors(u) if v not in cluster)
    return cut / volume


def cluster_density(graph: nx.Graph, cluster: Iterable) -> float | None:
    cluster = set(cluster)
    size = len(cluster)
    if size < 2:
        return None
    internal = graph.subgraph(cluster).number_of_edges()
    return internal / (size * (size - 1) / 2)


def connected_node_count(graph: nx.DiGraph) -> int:
    return sum(1 for _, d in undirected(graph).degree() if d >= 1)


def structural_profile(graph: nx.DiGraph, communities: Sequence[Iterable]) -> dict[str, float]:
    """Average conductance, average density, connected nodes, average clustering and average community size."""
    communities = [set(c) for c in communities]
    extra = set().union(*communities) - set(graph.nodes) if communities else set()
    if extra:
        raise ValueError(f"communities contain nodes not in the graph: {sorted(extra)[:5]}")
    g = undirected(graph)
    cnd = [conductance(g, c) for c in communities]
    dens = [d for d in (cluster_density(g, c) for c in communities) if d is not None]
    return {
        "Cnd": float(np.mean(cnd)) if cnd else 0.0,
        "rho": float(np.mean(dens)) if dens else 0.0,
        "CN": float(sum(1 for _, d in g.degree() if d >= 1)),
        "CC": float(nx.average_clustering(g)) if g.number_of_nodes() else 0.0,
        "ACS": float(np.mean([len(c) for c in communities])) if communities else 0.0,
    }


def relative_difference(gt: float, inferred: float) -> float:
    """``|gt - inferred| / gt``; a zero ground truth gives 0 when both are zero, else ``inf``."""
    if gt == 0:
        if inferred == 0:
            return 0.0
        logger.warning("relative difference with zero ground truth and inferred value %g: inf", inferred)
        return math.inf
    return abs(gt - inferred) / gt


def link_report(
    truth: nx.DiGraph,
    inferred: nx.DiGraph,
    truth_communities: Sequence[Iterable],
    inferred_communities: Sequence[Iterable],
    degree_mode: str = "total",
) -> dict[str, float]:
    f1, mf1, mif1 = link_f1(truth, inferred)
    js = js_distance(degree_distribution(truth, degree_mode), degree_distribution(inferred, degree_mode))
    gt = structural_profile(truth, truth_communities)
    inf = structural_profile(inferred, inferred_communities)
    return {
        "F1": f1,
        "MF1": mf1,
        "mF1": mif1,
        "JS": js,
        "dCN": relative_difference(gt["CN"], inf["CN"]),
        "drho": relative_difference(gt["rho"], inf["rho"]),
        "dCC": relative_difference(gt["CC"], inf["CC"]),
        "dCnd": relative_difference(gt["Cnd"], inf["Cnd"]),
    }


def write_histogram(dist: DegreeDistribution, stream) -> None:
    """TSV of ``degree<TAB>probability`` rows."""
    for degree, prob in zip(dist.support, dist.mass):
        stream.write(f"{degree}\t{prob:.6f}\n")


def flagged_metrics(report: Mapping[str, float]) -> list[str]:
    """Names of metrics whose value is not finite."""
    return [k for k, v in report.items() if not math.isfinite(v)]
