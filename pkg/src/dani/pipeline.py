"""Staged map / shuffle / reduce execution of the edge-weight computation.

The dataflow mirrors a MapReduce job over partitioned cascades::

    mapper1   (cascade, u, v) -> d_uv            one record per ordered pair
    mapper2   (cascade, u)    -> d_uv            re-keyed by the first node
    reducer1  (cascade, u)    -> sum of d        row sums
    reducer2  (u, v)          -> d / row sum     per-cascade transition values
    reducer3  (u, v)          -> lam_uv          summed over cascades, rows normalised
    mapper3   u               -> 1               one record per participation
    mapper4   (u, v)          -> 1               one record per ordered pair
    reducer4  (u, v)          -> theta_uv
    reducer5  (u, v)          -> theta / lam

Map tasks run per partition and reduce tasks per hash bucket, each on a
thread pool. Shuffles are the only synchronisation points. Large partitions
are cut into input splits of bounded pair count and processed in waves;
reducer3 and reducer4 fold each wave's pieces into exact per-bucket
accumulators, so memory stays bounded without changing results. Reducers process
their keys in ascending order and every floating point sum is exact (see
:mod:`dani.numerics`), so the output is bitwise identical to
:func:`dani.inference.infer` for any partition count or scheduling.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .cascades import CascadeCorpus, CascadeVector
from .inference import WeightedEdgeList, normalize_rows
from .numerics import DENSE_KEY_LIMIT, KeyedExactSum, group_keys

# ordered pairs per map task and wave
SPLIT_PAIRS = 1 << 21

logger = logging.getLogger(__name__)


class KeyedRecord(NamedTuple):
    key: tuple[int, ...]
    value: float


@dataclass
class Records:
    """A batch of keyed records in columnar form."""

    key_names: tuple[str, ...]
    keys: tuple[np.ndarray, ...]
    values: np.ndarray

    @classmethod
    def empty(cls, key_names: tuple[str, ...], dtype=np.int64) -> Records:
        return cls(key_names, tuple(np.zeros(0, dtype=np.int64) for _ in key_names), np.zeros(0, dtype=dtype))

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self) -> Iterator[KeyedRecord]:
        cols = [k.tolist() for k in self.keys]
        for i, value in enumerate(self.values.tolist()):
            yield KeyedRecord(tuple(c[i] for c in cols), value)

    def take(self, idx: np.ndarray) -> Records:
        return Records(self.key_names, tuple(k[idx] for k in self.keys), self.values[idx])

    @staticmethod
    def concat(parts: Sequence[Records], key_names: tuple[str, ...]) -> Records:
        parts = [p for p in parts if len(p)]
        if not parts:
            return Records.empty(key_names)
        keys = tuple(np.concatenate([p.keys[i] for p in parts]) for i in range(len(key_names)))
        return Records(key_names, keys, np.concatenate([p.values for p in parts]))


@dataclass(frozen=True)
class Stage:
    name: str
    kind: str  # "map" | "shuffle" | "reduce"
    inputs: tuple[str, ...] = ()


DANI_TOPOLOGY: tuple[Stage, ...] = (
    Stage("mapper1", "map", ("cascades",)),
    Stage("mapper2", "map", ("mapper1",)),
    Stage("shuffle_rows", "shuffle", ("mapper1", "mapper2")),
    Stage("reducer1", "reduce", ("shuffle_rows",)),
    Stage("reducer2", "reduce", ("shuffle_rows", "reducer1")),
    Stage("shuffle_sources", "shuffle", ("reducer2",)),
    Stage("reducer3", "reduce", ("shuffle_sources",)),
    Stage("mapper3", "map", ("cascades",)),
    Stage("mapper4", "map", ("cascades",)),
    Stage("shuffle_counts", "shuffle", ("mapper3", "mapper4")),
    Stage("reducer4", "reduce", ("shuffle_counts",)),
    Stage("shuffle_pairs", "shuffle", ("reducer3", "reducer4")),
    Stage("reducer5", "reduce", ("shuffle_pairs",)),
)


@dataclass(frozen=True)
class StagePlan:
    partitions: int = 1
    stages: tuple[Stage, ...] = DANI_TOPOLOGY
    workers: int | None = None
    debug_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        seen = {"cascades"}
        for stage in self.stages:
            missing = [i for i in stage.inputs if i not in seen]
            if missing:
                raise ValueError(f"stage {stage.name} reads {missing} before they are produced")
            seen.add(stage.name)
        if tuple(self.stages) != DANI_TOPOLOGY:
            raise ValueError("only the fixed edge-weight topology is supported")


def partition_cascades(vectors: Sequence[CascadeVector], p: int) -> list[list[CascadeVector]]:
    """Round-robin split: cascade ``i`` goes to partition ``i % p``."""
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise ValueError(f"partition count must be a positive integer, got {p!r}")
    parts: list[list[CascadeVector]] = [[] for _ in range(p)]
    for i, cv in enumerate(vectors):
        parts[i % p].append(cv)
    return parts


# -- hashing ---------------------------------------------------------------

_MIX = (np.uint64(0x9E3779B97F4A7C15), np.uint64(0xC2B2AE3D27D4EB4F), np.uint64(0x165667B19E3779F9))


def bucket_of(columns: Sequence[np.ndarray], n_buckets: int) -> np.ndarray:
    """Deterministic hash partitioner over int64 key columns."""
    with np.errstate(over="ignore"):
        h = np.zeros(columns[0].shape, dtype=np.uint64)
        for col, mix in zip(columns, _MIX):
            h ^= col.astype(np.uint64) * mix
            h ^= h >> np.uint64(29)
        h *= _MIX[1]
        h ^= h >> np.uint64(32)
    return (h % np.uint64(n_buckets)).astype(np.int64)


def _route(columns: Sequence[np.ndarray], n_buckets: int) -> tuple[np.ndarray, np.ndarray] | None:
    """Stable bucket order of the records plus bucket boundaries; ``None`` means one bucket."""
    if n_buckets == 1:
        return None
    buckets = bucket_of(columns, n_buckets)
    # narrow dtype lets the stable sort run as a radix sort
    if n_buckets <= 1 << 16:
        buckets = buckets.astype(np.uint16)
    order = np.argsort(buckets, kind="stable")
    return order, np.searchsorted(buckets[order], np.arange(n_buckets + 1))


def _split(records: Records, columns: Sequence[np.ndarray], n_buckets: int, route=False) -> list[Records]:
    if not len(records):
        return [Records.empty(records.key_names, records.values.dtype) for _ in range(n_buckets)]
    if route is False:
        route = _route(columns, n_buckets)
    if route is None:
        return [records]
    order, bounds = route
    return [records.take(order[bounds[b]:bounds[b + 1]]) for b in range(n_buckets)]


def _lookup(table: np.ndarray, query: np.ndarray, key_space: int) -> np.ndarray:
    """Positions of ``query`` keys in the ascending, duplicate-free ``table``; every query must be present."""
    if key_space <= DENSE_KEY_LIMIT:
        index = np.empty(key_space, dtype=np.int64)
        index[table] = np.arange(table.size, dtype=np.int64)
        return index[query]
    return np.searchsorted(table, query)


# -- the job ---------------------------------------------------------------


@lru_cache(maxsize=512)
def _position_pairs(length: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = (a.astype(np.int64) for a in np.triu_indices(length, k=1))
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def _by_length(cascades: Sequence[CascadeVector], ids: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """``(cascade ids, order matrix)`` per distinct cascade length, in input order within a length."""
    groups: dict[int, list[int]] = {}
    for idx, cv in enumerate(cascades):
        groups.setdefault(len(cv), []).append(idx)
    for length in sorted(groups):
        idx = groups[length]
        yield ids[idx], np.stack([cascades[k].order for k in idx]).astype(np.int64)


class _Job:
    def __init__(self, partitions: Sequence[Sequence[CascadeVector]], plan: StagePlan, nodes: Sequence[str]):
        self.partitions = [list(p) for p in partitions]
        self.plan = plan
        self.nodes = list(nodes)
        self.n = len(self.nodes)
        self.n_parts = len(self.partitions)
        self.n_buckets = max(plan.partitions, 1)
        # more threads than cores only adds contention
        workers = plan.workers or min(self.n_buckets, os.cpu_count() or 1)
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self._dumped: set[str] = set()
        if plan.debug_dir is not None:
            Path(plan.debug_dir).mkdir(parents=True, exist_ok=True)

    # each map task gets (partition number, cascades)
    def _map(self, fn, inputs):
        return list(self.pool.map(fn, *zip(*inputs))) if inputs else []

    def _shuffle(self, outputs: Sequence[Records], key_fn, routes=None) -> list[list[Records]]:
        """Route every task output into buckets. Returns ``[bucket][task]`` pieces.

        ``routes`` lets a co-partitioned shuffle reuse the bucket assignment
        already computed for records with the same keys.
        """
        if routes is None:
            split = list(self.pool.map(lambda r: _split(r, key_fn(r), self.n_buckets), outputs))
        else:
            split = list(self.pool.map(lambda r, rt: _split(r, (), self.n_buckets, rt), outputs, routes))
        return [[pieces[b] for pieces in split] for b in range(self.n_buckets)]

    def _routes(self, outputs: Sequence[Records], key_fn) -> list:
        return list(self.pool.map(lambda r: _route(key_fn(r), self.n_buckets) if len(r) else None, outputs))

    def _dump(self, name: str, outputs: Sequence[Records]) -> None:
        """Append a stage's records to ``<debug_dir>/<name>.tsv`` (one file across waves)."""
        if self.plan.debug_dir is None:
            return
        path = Path(self.plan.debug_dir) / f"{name}.tsv"
        fresh = name not in self._dumped
        self._dumped.add(name)
        with path.open("w" if fresh else "a", encoding="utf-8") as fh:
            if fresh:
                names = outputs[0].key_names if outputs else ("key",)
                fh.write("\t".join(("task",) + names + ("value",)) + "\n")
            for task, records in enumerate(outputs):
                for rec in records:
                    fh.write("\t".join([str(task), *map(str, rec.key), repr(rec.value)]) + "\n")

    def _waves(self) -> list[list[tuple[int, int, list[CascadeVector]]]]:
        """Cut each partition into splits; wave ``w`` holds every partition's split ``w``.

        A wave carries at most about ``SPLIT_PAIRS`` ordered pairs in total.
        """
        budget = max(SPLIT_PAIRS // self.n_parts, 1)
        per_part = []
        for part, cascades in enumerate(self.partitions):
            splits, start, size = [], 0, 0
            for idx, cv in enumerate(cascades):
                pairs = len(cv) * (len(cv) - 1) // 2
                if size and size + pairs > budget:
                    splits.append((part, start, cascades[start:idx]))
                    start, size = idx, 0
                size += pairs
            splits.append((part, start, cascades[start:]))
            per_part.append(splits)
        n_waves = max(len(s) for s in per_part) if per_part else 0
        return [[s[w] for s in per_part if w < len(s)] for w in range(n_waves)]

    # mappers -------------------------------------------------------------

    def _cascade_ids(self, part: int, start: int, count: int) -> np.ndarray:
        return (start + np.arange(count, dtype=np.int64)) * self.n_parts + part

    def mapper1(self, part: int, start: int, cascades: list[CascadeVector]) -> Records:
        names = ("cascade", "u", "v")
        if not cascades:
            return Records.empty(names)
        cids = self._cascade_ids(part, start, len(cascades))
        chunks = []
        for ids, mat in _by_length(cascades, cids):
            i, j = _position_pairs(mat.shape[1])
            li, lj = i + 1, j + 1
            d = lj * (lj - li)
            chunks.append((
                np.repeat(ids, i.size),
                mat[:, i].reshape(-1),
                mat[:, j].reshape(-1),
                np.tile(d, ids.size),
            ))
        cols = [np.concatenate([c[k] for c in chunks]) for k in range(4)]
        return Records(names, tuple(cols[:3]), cols[3])

    @staticmethod
    def mapper2(records: Records) -> Records:
        return Records(("cascade", "u"), records.keys[:2], records.values)

    def mapper3(self, part: int, start: int, cascades: list[CascadeVector]) -> Records:
        if not cascades:
            return Records.empty(("u",))
        nodes = np.concatenate([cv.order for cv in cascades]).astype(np.int64)
        return Records(("u",), (nodes,), np.ones(nodes.size, dtype=np.int64))

    def mapper4(self, part: int, start: int, cascades: list[CascadeVector]) -> Records:
        """One record per ordered pair, map-side combined into per-pair counts."""
        if not cascades:
            return Records.empty(("u", "v"))
        keys = []
        for _, mat in _by_length(cascades, np.zeros(len(cascades), dtype=np.int64)):
            i, j = _position_pairs(mat.shape[1])
            keys.append((mat[:, i] * self.n + mat[:, j]).reshape(-1))
        keys = np.concatenate(keys)
        if self.n * self.n <= DENSE_KEY_LIMIT:
            counts = np.bincount(keys, minlength=self.n * self.n)
            unique = np.flatnonzero(counts)
            counts = counts[unique]
        else:
            unique, counts = np.unique(keys, return_counts=True)
        return Records(("u", "v"), (unique // self.n, unique % self.n), counts.astype(np.int64))

    # reducers ------------------------------------------------------------

    def reducer1(self, pieces: list[Records]) -> Records:
        """Row sums of ``d`` per (cascade, source)."""
        rec = Records.concat(pieces, ("cascade", "u"))
        if not len(rec):
            return rec
        composite = rec.keys[0] * self.n + rec.keys[1]
        keys, inverse = group_keys(composite, (int(rec.keys[0].max()) + 1) * self.n)
        # integer d values; float partial sums are exact far beyond any cascade length
        sums = np.bincount(inverse, weights=rec.values, minlength=keys.size).astype(np.int64)
        return Records(("cascade", "u"), (keys // self.n, keys % self.n), sums)

    def reducer2(self, pairs: list[Records], row_sums: Records) -> Records:
        """Per-cascade transition values, re-keyed by node pair."""
        rec = Records.concat(pairs, ("cascade", "u", "v"))
        if not len(rec):
            return Records(("u", "v"), (np.zeros(0, dtype=np.int64),) * 2, np.zeros(0))
        row_keys = row_sums.keys[0] * self.n + row_sums.keys[1]
        key_space = (int(row_sums.keys[0].max()) + 1) * self.n
        pos = _lookup(row_keys, rec.keys[0] * self.n + rec.keys[1], key_space)
        totals = row_sums.values
        lam = rec.values.astype(np.float64) / totals[pos].astype(np.float64)
        return Records(("u", "v"), rec.keys[1:], lam)

    def reducer3_add(self, acc: KeyedExactSum, pieces: list[Records]) -> None:
        rec = Records.concat(pieces, ("u", "v"))
        if len(rec):
            acc.add(rec.keys[0] * self.n + rec.keys[1], rec.values)

    def reducer3(self, acc: KeyedExactSum) -> Records:
        """Summed transition values with rows normalised; every row lives in one bucket."""
        keys, sums, _ = acc.result()
        if not keys.size:
            return Records(("u", "v"), (np.zeros(0, dtype=np.int64),) * 2, np.zeros(0))
        lam = normalize_rows(keys, sums, self.n)
        return Records(("u", "v"), (keys // self.n, keys % self.n), lam)

    def reducer4_nodes(self, pieces: list[Records]) -> Records:
        rec = Records.concat(pieces, ("u",))
        counts = np.bincount(rec.keys[0], minlength=self.n).astype(np.int64) if len(rec) else np.zeros(self.n, np.int64)
        present = np.flatnonzero(counts)
        return Records(("u",), (present.astype(np.int64),), counts[present])

    def reducer4_add(self, acc: Records, pieces: list[Records]) -> Records:
        """Fold a wave's pair counts into the bucket's running totals."""
        rec = Records.concat([acc, *pieces], ("u", "v"))
        if not len(rec):
            return rec
        keys = rec.keys[0] * self.n + rec.keys[1]
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        counts = np.add.reduceat(rec.values[order], starts)
        keys = keys[starts]
        return Records(("u", "v"), (keys // self.n, keys % self.n), counts)

    def reducer4_pairs(self, totals: Records, participation: np.ndarray) -> Records:
        """theta per ordered pair; both directions of a pair share a bucket."""
        if not len(totals):
            return Records(("u", "v"), (np.zeros(0, dtype=np.int64),) * 2, np.zeros(0))
        keys = totals.keys[0] * self.n + totals.keys[1]
        counts = totals.values
        u, v = keys // self.n, keys % self.n
        rev = v * self.n + u
        pos = np.minimum(np.searchsorted(keys, rev), keys.size - 1)
        rev_counts = np.where(keys[pos] == rev, counts[pos], 0)
        union = participation[u] + participation[v] - (counts + rev_counts)
        return Records(("u", "v"), (u, v), counts / union)

    def reducer5(self, lam_pieces: list[Records], theta_pieces: list[Records]) -> Records:
        """Join lam and theta on (u, v) and divide."""
        lam = Records.concat(lam_pieces, ("u", "v"))
        th = Records.concat(theta_pieces, ("u", "v"))
        empty = Records(("u", "v"), (np.zeros(0, dtype=np.int64),) * 2, np.zeros(0))
        if not len(lam) or not len(th):
            return empty
        lk = lam.keys[0] * self.n + lam.keys[1]
        tk = th.keys[0] * self.n + th.keys[1]
        lo, to = np.argsort(lk), np.argsort(tk)
        lk, lv = lk[lo], lam.values[lo]
        tk, tv = tk[to], th.values[to]
        pos = np.minimum(np.searchsorted(tk, lk), tk.size - 1)
        hit = tk[pos] == lk
        t = np.where(hit, tv[pos], 0.0)
        keep = (lv > 0) & (t > 0)
        keys = lk[keep]
        return Records(("u", "v"), (keys // self.n, keys % self.n), t[keep] / lv[keep])

    # driver --------------------------------------------------------------

    def run(self) -> WeightedEdgeList:
        try:
            return self._run()
        finally:
            self.pool.shutdown()

    def _run(self) -> WeightedEdgeList:
        n = self.n
        by_row = lambda r: (r.keys[0], r.keys[1])
        by_pair = lambda r: (r.keys[0], r.keys[1])
        # both directions of a pair go to the same count bucket
        by_unordered = lambda r: (np.minimum(r.keys[0], r.keys[1]), np.maximum(r.keys[0], r.keys[1]))

        lam_acc = [KeyedExactSum(n * n) for _ in range(self.n_buckets)]
        count_acc = [Records.empty(("u", "v")) for _ in range(self.n_buckets)]
        participation = np.zeros(n, dtype=np.int64)

        for tasks in self._waves():
            m1 = self._map(self.mapper1, tasks)
            self._dump("mapper1", m1)
            m2 = list(self.pool.map(self.mapper2, m1))
            self._dump("mapper2", m2)
            # pair records and row-sum records are co-partitioned on (cascade, u)
            routes = self._routes(m1, by_row)
            pairs_b = self._shuffle(m1, by_row, routes)
            rows_b = self._shuffle(m2, by_row, routes)
            del routes
            del m1, m2
            r1 = list(self.pool.map(self.reducer1, rows_b))
            self._dump("reducer1", r1)
            r2 = list(self.pool.map(self.reducer2, pairs_b, r1))
            self._dump("reducer2", r2)
            del pairs_b, rows_b, r1
            src_b = self._shuffle(r2, lambda r: (r.keys[0],))
            del r2
            list(self.pool.map(self.reducer3_add, lam_acc, src_b))
            del src_b

            m3 = self._map(self.mapper3, tasks)
            m4 = self._map(self.mapper4, tasks)
            self._dump("mapper3", m3)
            self._dump("mapper4", m4)
            node_b = self._shuffle(m3, lambda r: (r.keys[0],))
            # participation counts are small: collected here, broadcast to every pair reducer
            for rec in self.pool.map(self.reducer4_nodes, node_b):
                participation[rec.keys[0]] += rec.values
            pair_b = self._shuffle(m4, by_unordered)
            del m3, m4, node_b
            count_acc = list(self.pool.map(self.reducer4_add, count_acc, pair_b))
            del pair_b

        r3 = list(self.pool.map(self.reducer3, lam_acc))
        self._dump("reducer3", r3)
        del lam_acc
        r4 = list(self.pool.map(lambda totals: self.reducer4_pairs(totals, participation), count_acc))
        self._dump("reducer4", r4)
        del count_acc

        lam_b = self._shuffle(r3, by_pair)
        th_b = self._shuffle(r4, by_pair)
        del r3, r4
        r5 = list(self.pool.map(self.reducer5, lam_b, th_b))
        self._dump("reducer5", r5)

        out = Records.concat(r5, ("u", "v"))
        order = np.argsort(out.keys[0] * n + out.keys[1])
        return WeightedEdgeList(self.nodes, out.keys[0][order], out.keys[1][order], out.values[order])


def run_pipeline(
    partitions: Sequence[Sequence[CascadeVector]], plan: StagePlan, nodes: Sequence[str]
) -> WeightedEdgeList:
    """Run the staged job over pre-partitioned cascades of a corpus with vocabulary ``nodes``."""
    return _Job(partitions, plan, nodes).run()


def infer_pipeline(
    corpus: CascadeCorpus, partitions: int = 1, workers: int | None = None, debug_dir: Path | None = None
) -> WeightedEdgeList:
    plan = StagePlan(partitions=partitions, workers=workers, debug_dir=debug_dir)
    return run_pipeline(partition_cascades(corpus.vectors, partitions), plan, corpus.nodes)
