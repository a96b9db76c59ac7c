"""Baseline community detection and community-assignment comparison."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)


def label_propagation(graph: nx.DiGraph | nx.Graph, seed: int = 0, max_iters: int = 100) -> list[set]:
    """Synchronous label propagation on the undirected projection.

    Initial labels are a seeded permutation of ``0..n-1``. Each round every
    node takes the most frequent label among itself and its neighbours, ties
    going to the smallest label; all nodes update at once. Stops at a fixed
    point or after ``max_iters`` rounds.
    """
    nodes = sorted(graph.nodes)
    if not nodes:
        return []
    index = {u: i for i, u in enumerate(nodes)}
    g = graph.to_undirected(as_view=True) if graph.is_directed() else graph
    neighbours = [[index[v] for v in g.neighbors(u) if v != u] for u in nodes]
    rng = np.random.default_rng(seed)
    labels = rng.permutation(len(nodes)).tolist()

    for _ in range(max_iters):
        new = []
        for i, nbrs in enumerate(neighbours):
            if not nbrs:
                new.append(labels[i])
                continue
            votes = Counter(labels[j] for j in nbrs)
            votes[labels[i]] += 1
            top = max(votes.values())
            new.append(min(label for label, c in votes.items() if c == top))
        if new == labels:
            break
        labels = new

    groups: dict[int, set] = {}
    for u, label in zip(nodes, labels):
        groups.setdefault(label, set()).add(u)
    return sorted(groups.values(), key=lambda c: sorted(c))


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    @classmethod
    def of(cls, a: Sequence[Iterable], b: Sequence[Iterable]) -> ConfusionMatrix:
        a = [set(c) for c in a]
        b = [set(c) for c in b]
        return cls(np.array([[len(x & y) for y in b] for x in a], dtype=np.int64).reshape(len(a), len(b)))

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _xlogx_ratio(n: np.ndarray, ratio: np.ndarray) -> float:
    mask = n > 0
    return float(np.sum(n[mask] * np.log(ratio[mask])))


def nmi(a: Sequence[Iterable], b: Sequence[Iterable]) -> float:
    """Normalised mutual information of two (possibly overlapping) community assignments.

    Overlaps are counted in every community a node belongs to. When both
    numerator and denominator vanish (single-community assignments) the
    result is 1 for identical assignments and 0 otherwise.
    """
    if not a or not b:
        raise ValueError("nmi needs two non-empty community assignments")
    cm = ConfusionMatrix.of(a, b)
    n = cm.counts.astype(np.float64)
    rows, cols, total = cm.row_sums.astype(np.float64), cm.col_sums.astype(np.float64), float(cm.total)
    if total == 0:
        return 0.0
    num = -2.0 * _xlogx_ratio(n, n * total / np.outer(rows, cols).clip(min=1))
    den = _xlogx_ratio(rows, rows / total) + _xlogx_ratio(cols, cols / total)
    if den == 0:
        same = sorted(map(sorted, map(set, a))) == sorted(map(sorted, map(set, b)))
        return 1.0 if same and num == 0 else 0.0
    return num / den


def same_community_pairs(communities: Sequence[Iterable]) -> set[tuple]:
    pairs = set()
    for c in communities:
        pairs.update(combinations(sorted(c), 2))
    return pairs


def pwf(truth: Sequence[Iterable], inferred: Sequence[Iterable]) -> float:
    """Pairwise F1 over node pairs that share a community."""
    h_truth = same_community_pairs(truth)
    h_inf = same_community_pairs(inferred)
    if not h_inf:
        logger.warning("inferred assignment has no same-community pairs; PWF reported as 0")
        return 0.0
    common = len(h_truth & h_inf)
    if not h_truth or not common:
        return 0.0
    precision = common / len(h_inf)
    recall = common / len(h_truth)
    return 2 * precision * recall / (precision + recall)


def average_community_size(communities: Sequence[Iterable]) -> float:
    sizes = [len(set(c)) for c in communities]
    return float(np.mean(sizes)) if sizes else 0.0


def community_report(truth: Sequence[Iterable], inferred: Sequence[Iterable]) -> dict[str, float]:
    from .metrics import relative_difference

    return {
        "NMI": nmi(truth, inferred),
        "PWF": pwf(truth, inferred),
        "dACS": relative_difference(average_community_size(truth), average_community_size(inferred)),
    }
