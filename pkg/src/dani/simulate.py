"""Planted-partition ground truth graphs and continuous-time independent cascade simulation."""

from __future__ import annotations

import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .io import RawCascade

logger = logging.getLogger(__name__)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SbmConfig:
    n: int
    k: int
    p_in: float
    p_out: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.k > self.n:
            raise ValueError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


def node_label(i: int, n: int) -> str:
    return f"n{i:0{len(str(n - 1))}d}"


def generate_sbm(config: SbmConfig) -> tuple[nx.DiGraph, list[set[str]]]:
    """Directed planted-partition graph and its blocks.

    Nodes are split into ``k`` contiguous blocks whose sizes differ by at most
    one. Each ordered pair ``u != v`` is linked independently with ``p_in``
    inside a block and ``p_out`` across blocks.
    """
    n, k = config.n, config.k
    if config.p_in <= config.p_out:
        logger.warning("p_in (%g) <= p_out (%g): no community structure planted", config.p_in, config.p_out)
    if n < 2 * k:
        logger.warning("n=%d < 2k=%d: some blocks have a single node and no internal edges", n, 2 * k)
    block = np.arange(n) * k // n
    labels = [node_label(i, n) for i in range(n)]
    rng = np.random.default_rng(config.seed)
    prob = np.where(block[:, None] == block[None, :], config.p_in, config.p_out)
    np.fill_diagonal(prob, 0.0)
    adj = rng.random((n, n)) < prob

    graph = nx.DiGraph()
    graph.add_nodes_from(labels)
    src, dst = np.nonzero(adj)
    graph.add_edges_from((labels[u], labels[v]) for u, v in zip(src.tolist(), dst.tolist()))
    communities = [{labels[i] for i in np.flatnonzero(block == b)} for b in range(k)]
    return graph, communities


@dataclass(frozen=True)
class SimConfig:
    num_cascades: int
    beta: float = 0.3
    rate: float = 1.0
    horizon: float = 10.0
    seed: int = 0
    min_length: int = 2

    def __post_init__(self):
        if self.num_cascades < 1:
            raise ValueError("num_cascades must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.min_length < 2:
            raise ValueError("min_length must be >= 2")


class _Adjacency:
    """Out-neighbour index arrays, nodes in sorted label order."""

    def __init__(self, graph: nx.DiGraph):
        self.labels = sorted(graph.nodes)
        index = {label: i for i, label in enumerate(self.labels)}
        self.out = [
            np.array(sorted(index[v] for v in graph.successors(label)), dtype=np.int64) for label in self.labels
        ]


def _spread(adj: _Adjacency, source: int, config: SimConfig, rng: np.random.Generator) -> dict[int, float]:
    """One cascade from ``source``; returns ``{node: infection time}``."""
    times = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    scale = 1.0 / config.rate
    while heap:
        t_u, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        nbrs = adj.out[u]
        if not nbrs.size:
            continue
        hit = rng.random(nbrs.size) < config.beta
        delays = rng.exponential(scale, nbrs.size)
        for v, ok, dt in zip(nbrs.tolist(), hit.tolist(), delays.tolist()):
            if not ok or v in done:
                continue
            t_v = t_u + dt
            if t_v <= config.horizon and t_v < times.get(v, math.inf):
                times[v] = t_v
                heapq.heappush(heap, (t_v, v))
    return times


def _simulate_one(adj: _Adjacency, index: int, config: SimConfig, budget: int, source: int | None):
    """Draw cascade ``index`` from its own RNG stream. Returns ``(events, attempts)``."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed & (2**64 - 1), index]))
    n = len(adj.labels)
    for attempt in range(1, budget + 1):
        src = int(rng.integers(n)) if source is None else source
        times = _spread(adj, src, config, rng)
        if len(times) >= config.min_length:
            ordered = sorted(times.items(), key=lambda kv: (kv[1], kv[0]))
            return [(adj.labels[v], t) for v, t in ordered], attempt
    return None, budget


def _simulate_range(args):
    adj, indices, config, budget, source = args
    return [_simulate_one(adj, i, config, budget, source) for i in indices]


def simulate_cascades(
    graph: nx.DiGraph, config: SimConfig, *, source: str | None = None, workers: int = 1
) -> list[RawCascade]:
    """Continuous-time independent cascades over ``graph``.

    Each cascade starts at a uniformly random node (or ``source``) at time 0.
    Every infected node tries each out-edge once; with probability ``beta``
    the target gets a candidate time ``t_u + Exp(rate)`` and keeps the
    earliest candidate not exceeding ``horizon``. Cascades shorter than
    ``min_length`` are redrawn from a fresh source. Cascade ``i`` uses its own
    RNG stream seeded from ``(seed, i)``, so ``workers`` does not change the
    output.
    """
    if graph.number_of_edges() == 0:
        raise GenerationError("graph has no edges")
    adj = _Adjacency(graph)
    src = None
    if source is not None:
        if source not in graph:
            raise ValueError(f"unknown source node {source!r}")
        src = adj.labels.index(source)

    m = config.num_cascades
    budget = 100 * m
    if workers <= 1:
        results = []
        used = 0
        for i in range(m):
            events, attempts = _simulate_one(adj, i, config, budget - used, src)
            used += attempts
            if events is None:
                break
            results.append((events, attempts))
    else:
        chunks = [list(range(w, m, workers)) for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_range, [(adj, c, config, budget, src) for c in chunks]))
        results = [None] * m
        for chunk, part in zip(chunks, parts):
            for i, r in zip(chunk, part):
                results[i] = r
        used = 0
        for i, r in enumerate(results):
            used += r[1]
            if r[0] is None or used > budget:
                results = results[:i]
                break

    if len(results) < m:
        raise GenerationError(
            f"produced {len(results)} of {m} cascades with >= {config.min_length} nodes "
            f"within {budget} attempts; graph too sparse or horizon too short"
        )
    return [RawCascade(f"c{i}", tuple(events)) for i, (events, _) in enumerate(results)]
