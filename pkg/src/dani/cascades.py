"""Rank-ordered cascade vectors built from timed cascades."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .io import CascadeLog, RawCascade

logger = logging.getLogger(__name__)


class DegenerateCascade(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CascadeVector:
    """Node indices in infection order; the node at position ``i`` has rank ``i + 1``."""

    id: str
    order: np.ndarray  # int64 node indices

    def __len__(self) -> int:
        return int(self.order.size)

    @property
    def entries(self) -> list[tuple[int, int]]:
        return [(int(node), rank) for rank, node in enumerate(self.order, start=1)]

    def rank_of(self) -> dict[int, int]:
        return {int(node): rank for rank, node in enumerate(self.order, start=1)}

    def __eq__(self, other):
        if not isinstance(other, CascadeVector):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.order, other.order)

    def __hash__(self):
        return hash((self.id, self.order.tobytes()))


def to_cascade_vector(cascade: RawCascade, index: Mapping[str, int]) -> CascadeVector:
    """Sort by time, breaking ties by node label, and assign ranks 1..r.

    Raises ``DegenerateCascade`` for cascades with fewer than two events.
    """
    if len(cascade.events) < 2:
        raise DegenerateCascade(f"cascade {cascade.id} has {len(cascade.events)} event(s); need at least 2")
    ordered = sorted(cascade.events, key=lambda ev: (ev[1], ev[0]))
    return CascadeVector(cascade.id, np.array([index[node] for node, _ in ordered], dtype=np.int64))


@dataclass
class CascadeCorpus:
    """Cascade vectors over a fixed node vocabulary.

    ``nodes[i]`` is the label of node index ``i``. ``dropped`` counts input
    cascades discarded for having fewer than two events.
    """

    nodes: list[str]
    vectors: list[CascadeVector]
    dropped: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def __len__(self) -> int:
        return len(self.vectors)

    def index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.nodes)}

    def participating_nodes(self) -> set[str]:
        seen = set()
        for cv in self.vectors:
            seen.update(cv.order.tolist())
        return {self.nodes[i] for i in seen}


def build_corpus(cascades: Iterable[RawCascade], nodes: Sequence[str] | None = None) -> CascadeCorpus:
    """Convert raw cascades to vectors, dropping those with fewer than two events.

    ``nodes`` fixes the vocabulary (and index order); when omitted it is the
    sorted union of all cascade nodes.
    """
    if isinstance(cascades, CascadeLog) and nodes is None:
        nodes = cascades.nodes
    cascades = list(cascades)
    if nodes is None:
        nodes = sorted({node for c in cascades for node in c.nodes})
    nodes = list(nodes)
    index = {label: i for i, label in enumerate(nodes)}
    if len(index) != len(nodes):
        raise ValueError("duplicate node labels in vocabulary")
    vectors = []
    dropped = 0
    for cascade in cascades:
        missing = [n for n in cascade.nodes if n not in index]
        if missing:
            raise ValueError(f"cascade {cascade.id} uses unknown node(s) {missing[:3]}")
        if len(cascade.events) < 2:
            dropped += 1
            continue
        vectors.append(to_cascade_vector(cascade, index))
    if dropped:
        logger.warning("dropped %d cascade(s) with fewer than 2 events", dropped)
    return CascadeCorpus(nodes=nodes, vectors=vectors, dropped=dropped)


@dataclass(frozen=True)
class DatasetStats:
    num_cascades: int
    num_nodes: int
    mean_length: float
    length_variance: float

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("cascades", self.num_cascades),
            ("nodes", self.num_nodes),
            ("mean_length", self.mean_length),
            ("length_variance", self.length_variance),
        ]


def dataset_stats(vectors: Sequence[CascadeVector], nodes: Sequence[str] | int) -> DatasetStats:
    if not vectors:
        raise ValueError("dataset_stats needs at least one cascade")
    n_nodes = nodes if isinstance(nodes, int) else len(nodes)
    lengths = np.array([len(v) for v in vectors], dtype=np.float64)
    return DatasetStats(
        num_cascades=len(vectors),
        num_nodes=n_nodes,
        mean_length=float(lengths.mean()),
        length_variance=float(lengths.var()),
    )
