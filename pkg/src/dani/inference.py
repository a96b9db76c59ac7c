"""Edge weights from cascade vectors: Markov transition accumulation times co-occurrence similarity.

For a cascade with ranks ``l``, every ordered pair with ``l_u < l_v`` gets
``d_uv = l_v * (l_v - l_u)``. Each source row is normalised per cascade, the
rows are summed over all cascades and normalised once more, giving the
transition matrix ``lam``. Independently, ``theta_uv`` is the number of
cascades in which ``u`` precedes ``v`` divided by the number of cascades
containing ``u`` or ``v``. The edge weight is ``theta_uv / lam_uv``.

All matrices are sparse: int64 pair keys ``u * n_nodes + v`` in ascending
order alongside a value array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import networkx as nx
import numpy as np

from .cascades import CascadeCorpus, CascadeVector
from .numerics import KeyedExactSum, exact_group_sum, keyed_sum

# pairs materialised at once; bounds peak memory on long cascades
BLOCK_PAIRS = 1 << 22


@lru_cache(maxsize=512)
def rank_table(length: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cascade transition values for a cascade of ``length`` nodes.

    Returns ``(i, j, lam)`` over all position pairs ``i < j`` (0-based), where
    ``lam`` is the row-normalised ``d`` value. It depends only on the ranks,
    so one table serves every cascade of the same length.
    """
    i, j = (a.astype(np.int64) for a in np.triu_indices(length, k=1))
    li, lj = i + 1, j + 1
    d = lj * (lj - li)
    row_sum = np.bincount(i, weights=d, minlength=length)
    lam = d.astype(np.float64) / row_sum[i]
    for arr in (i, j, lam):
        arr.setflags(write=False)
    return i, j, lam


def _pair_blocks(vectors: Sequence[CascadeVector], n_nodes: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(keys, lam)`` blocks covering every ordered pair of every cascade."""
    by_length: dict[int, list[np.ndarray]] = {}
    for cv in vectors:
        by_length.setdefault(len(cv), []).append(cv.order)
    for length in sorted(by_length):
        i, j, lam = rank_table(length)
        mat = np.stack(by_length.pop(length))
        step = max(1, BLOCK_PAIRS // lam.size)
        for lo in range(0, mat.shape[0], step):
            rows = mat[lo : lo + step]
            keys = (rows[:, i] * n_nodes + rows[:, j]).reshape(-1)
            yield keys, np.tile(lam, rows.shape[0])


def _pair_sums(vectors: Sequence[CascadeVector], n_nodes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(keys, summed lam, cascade counts)`` over all ordered pairs, streamed block by block."""
    acc = KeyedExactSum(n_nodes * n_nodes)
    for keys, values in _pair_blocks(vectors, n_nodes):
        acc.add(keys, values)
    return acc.result()


def normalize_rows(keys: np.ndarray, values: np.ndarray, n_nodes: int) -> np.ndarray:
    """Divide each value by the exact sum of its source row."""
    src = keys // n_nodes
    totals = exact_group_sum(src, values, n_nodes)
    return values / totals[src]


@dataclass(frozen=True, eq=False)
class TransitionAccumulator:
    """Sparse nonnegative matrix keyed by source then target node index."""

    n_nodes: int
    keys: np.ndarray
    values: np.ndarray

    @property
    def src(self) -> np.ndarray:
        return self.keys // self.n_nodes

    @property
    def dst(self) -> np.ndarray:
        return self.keys % self.n_nodes

    def __len__(self) -> int:
        return int(self.keys.size)

    def get(self, u: int, v: int) -> float:
        k = u * self.n_nodes + v
        pos = np.searchsorted(self.keys, k)
        if pos < self.keys.size and self.keys[pos] == k:
            return float(self.values[pos])
        return 0.0

    def rows(self) -> dict[int, dict[int, float]]:
        out: dict[int, dict[int, float]] = {}
        for u, v, x in zip(self.src.tolist(), self.dst.tolist(), self.values.tolist()):
            out.setdefault(u, {})[v] = x
        return out

    def row_sums(self) -> dict[int, float]:
        totals = exact_group_sum(self.src, self.values, self.n_nodes)
        return {int(u): float(totals[u]) for u in np.unique(self.src)}

    def normalized(self) -> TransitionAccumulator:
        return TransitionAccumulator(self.n_nodes, self.keys, normalize_rows(self.keys, self.values, self.n_nodes))

    def identical(self, other: TransitionAccumulator) -> bool:
        """Bitwise equality of structure and values."""
        return (
            self.n_nodes == other.n_nodes
            and np.array_equal(self.keys, other.keys)
            and self.values.tobytes() == other.values.tobytes()
        )


def cascade_transition_row(cv: CascadeVector, n_nodes: int) -> TransitionAccumulator:
    """Row-stochastic transition matrix of a single cascade."""
    i, j, lam = rank_table(len(cv))
    keys = cv.order[i] * n_nodes + cv.order[j]
    order = np.argsort(keys)
    return TransitionAccumulator(n_nodes, keys[order], lam[order].copy())


def _normalized(unique: np.ndarray, sums: np.ndarray, n_nodes: int) -> np.ndarray:
    return normalize_rows(unique, sums, n_nodes) if unique.size else sums


def accumulate(rows: Iterable[TransitionAccumulator]) -> TransitionAccumulator:
    """Sum per-cascade transition matrices and normalise the rows of the total."""
    rows = list(rows)
    if not rows:
        raise ValueError("accumulate needs at least one transition matrix")
    n_nodes = rows[0].n_nodes
    if any(r.n_nodes != n_nodes for r in rows):
        raise ValueError("transition matrices disagree on n_nodes")
    keys = np.concatenate([r.keys for r in rows])
    values = np.concatenate([r.values for r in rows])
    unique, sums, _ = keyed_sum(keys, values, n_nodes * n_nodes)
    return TransitionAccumulator(n_nodes, unique, _normalized(unique, sums, n_nodes))


def transition_matrix(vectors: Sequence[CascadeVector], n_nodes: int) -> TransitionAccumulator:
    """Same result as ``accumulate`` over ``cascade_transition_row``, without per-cascade objects."""
    unique, sums, _ = _pair_sums(vectors, n_nodes)
    return TransitionAccumulator(n_nodes, unique, _normalized(unique, sums, n_nodes))


@dataclass(frozen=True, eq=False)
class CooccurrenceStats:
    """Cascade participation counts.

    ``participation[u]`` is ``|In(u)|``. ``keys``/``counts`` give, for each
    ordered pair seen, the number of cascades in which ``u`` precedes ``v``.
    """

    n_nodes: int
    participation: np.ndarray
    keys: np.ndarray
    counts: np.ndarray

    def _lookup(self, u: int, v: int) -> int:
        k = u * self.n_nodes + v
        pos = np.searchsorted(self.keys, k)
        if pos < self.keys.size and self.keys[pos] == k:
            return int(self.counts[pos])
        return 0

    def ordered(self, u: int, v: int) -> int:
        return self._lookup(u, v)

    def unordered(self, u: int, v: int) -> int:
        return self._lookup(u, v) + self._lookup(v, u)

    def reverse_counts(self) -> np.ndarray:
        """``ordered(v, u)`` for every stored key ``(u, v)``."""
        if not self.keys.size:
            return np.zeros(0, dtype=np.int64)
        rev = (self.keys % self.n_nodes) * self.n_nodes + self.keys // self.n_nodes
        pos = np.searchsorted(self.keys, rev)
        pos_c = np.minimum(pos, self.keys.size - 1)
        hit = self.keys[pos_c] == rev
        return np.where(hit, self.counts[pos_c], 0)

    def theta_values(self) -> np.ndarray:
        """``theta`` for every stored key, vectorised."""
        u = self.keys // self.n_nodes
        v = self.keys % self.n_nodes
        union = self.participation[u] + self.participation[v] - (self.counts + self.reverse_counts())
        return self.counts / union


def cooccurrence(vectors: Sequence[CascadeVector], n_nodes: int) -> CooccurrenceStats:
    if vectors:
        participation = np.bincount(np.concatenate([cv.order for cv in vectors]), minlength=n_nodes)
    else:
        participation = np.zeros(n_nodes, dtype=np.int64)
    unique, _, counts = _pair_sums(vectors, n_nodes)
    return CooccurrenceStats(n_nodes, participation.astype(np.int64), unique, counts)


def theta(stats: CooccurrenceStats, u: int, v: int) -> float:
    """Order-constrained Jaccard similarity of the cascade sets of ``u`` and ``v``."""
    num = stats.ordered(u, v)
    if num == 0:
        return 0.0
    union = int(stats.participation[u]) + int(stats.participation[v]) - stats.unordered(u, v)
    return num / union


class WeightedEdgeList:
    """Inferred edges ``(u, v, w)`` with ``w > 0``, stored sorted by node index pair."""

    def __init__(self, nodes: Sequence[str], src: np.ndarray, dst: np.ndarray, weight: np.ndarray):
        self.nodes = list(nodes)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.weight.size)

    def __iter__(self) -> Iterator[tuple[str, str, float]]:
        nodes = self.nodes
        for u, v, w in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()):
            yield nodes[u], nodes[v], w

    def as_dict(self) -> dict[tuple[str, str], float]:
        return {(u, v): w for u, v, w in self}

    def identical(self, other: WeightedEdgeList) -> bool:
        return (
            self.nodes == other.nodes
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and self.weight.tobytes() == other.weight.tobytes()
        )

    def __repr__(self) -> str:
        return f"WeightedEdgeList({len(self)} edges over {len(self.nodes)} nodes)"


def _join_weights(lam_keys, lam_values, theta_keys, theta_values, nodes, n_nodes) -> WeightedEdgeList:
    pos = np.searchsorted(theta_keys, lam_keys)
    pos_c = np.minimum(pos, max(theta_keys.size - 1, 0))
    if theta_keys.size:
        hit = theta_keys[pos_c] == lam_keys
    else:
        hit = np.zeros(lam_keys.size, dtype=bool)
    th = np.where(hit, theta_values[pos_c] if theta_keys.size else 0.0, 0.0)
    keep = (lam_values > 0) & (th > 0)
    keys = lam_keys[keep]
    return WeightedEdgeList(nodes, keys // n_nodes, keys % n_nodes, th[keep] / lam_values[keep])


def dani_weights(
    lam: TransitionAccumulator, stats: CooccurrenceStats, nodes: Sequence[str] | None = None
) -> WeightedEdgeList:
    """``w = theta / lam`` for every pair with positive ``lam`` and ``theta``."""
    if lam.n_nodes != stats.n_nodes:
        raise ValueError("transition matrix and co-occurrence stats disagree on n_nodes")
    if nodes is None:
        nodes = [str(i) for i in range(lam.n_nodes)]
    return _join_weights(lam.keys, lam.values, stats.keys, stats.theta_values(), nodes, lam.n_nodes)


def infer(corpus: CascadeCorpus) -> WeightedEdgeList:
    """Full inference in one pass over the pair contributions."""
    n = corpus.n_nodes
    vectors = corpus.vectors
    unique, sums, counts = _pair_sums(vectors, n)
    lam = _normalized(unique, sums, n)
    if vectors:
        participation = np.bincount(np.concatenate([cv.order for cv in vectors]), minlength=n).astype(np.int64)
    else:
        participation = np.zeros(n, dtype=np.int64)
    stats = CooccurrenceStats(n, participation, unique, counts)
    return _join_weights(unique, lam, unique, stats.theta_values(), corpus.nodes, n)


def select_edges(
    edges: WeightedEdgeList, *, top_k: int | None = None, threshold: float | None = None
) -> nx.DiGraph:
    """Turn weighted edges into a graph over the full node vocabulary.

    With neither option every positive-weight edge is kept. ``top_k`` keeps
    the K heaviest edges, ties broken by ``(u, v)`` label order; ``threshold``
    keeps edges with ``w >= threshold``.
    """
    if top_k is not None and threshold is not None:
        raise ValueError("top_k and threshold are mutually exclusive")
    keep = np.ones(len(edges), dtype=bool)
    if top_k is not None:
        if isinstance(top_k, bool) or int(top_k) != top_k or top_k <= 0:
            raise ValueError(f"top_k must be a positive integer, got {top_k!r}")
        label_rank = np.empty(len(edges.nodes), dtype=np.int64)
        label_rank[np.argsort(np.array(edges.nodes, dtype=object), kind="stable")] = np.arange(len(edges.nodes))
        if len(edges):
            order = np.lexsort((label_rank[edges.dst], label_rank[edges.src], -edges.weight))
            keep = np.zeros(len(edges), dtype=bool)
            keep[order[: int(top_k)]] = True
    elif threshold is not None:
        if not np.isfinite(threshold) or threshold < 0:
            raise ValueError(f"threshold must be a nonnegative number, got {threshold!r}")
        keep = edges.weight >= threshold

    graph = nx.DiGraph()
    graph.add_nodes_from(edges.nodes)
    nodes = edges.nodes
    for u, v, w in zip(edges.src[keep].tolist(), edges.dst[keep].tolist(), edges.weight[keep].tolist()):
        graph.add_edge(nodes[u], nodes[v], weight=w)
    return graph

