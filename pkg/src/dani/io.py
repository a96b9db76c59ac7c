"""Readers and writers for cascade logs, edge lists, community files and metric reports.

Cascade file layout::

    <node_id>,<label>        one header line per node
    ...
                             blank separator line
    <node_id>,<time>;<node_id>,<time>;...   one cascade per line

Edge lists are ``u<TAB>v`` or ``u<TAB>v<TAB>w`` lines. Community files hold
one community per line with space-separated node labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

import networkx as nx


class FormatError(ValueError):
    """Raised for malformed input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RawCascade:
    id: str
    events: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"cascade {self.id} has no events")
        seen = set()
        for node, t in self.events:
            if node in seen:
                raise ValueError(f"cascade {self.id}: duplicate node {node!r}")
            if not math.isfinite(t) or t < 0:
                raise ValueError(f"cascade {self.id}: bad time {t!r} for node {node!r}")
            seen.add(node)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def nodes(self) -> list[str]:
        return [node for node, _ in self.events]


@dataclass
class CascadeLog:
    """A parsed cascade file: header vocabulary plus the cascades in file order."""

    nodes: list[str]
    cascades: list[RawCascade] = field(default_factory=list)

    def __iter__(self) -> Iterator[RawCascade]:
        return iter(self.cascades)

    def __len__(self) -> int:
        return len(self.cascades)

    def __getitem__(self, i):
        return self.cascades[i]


def _parse_time(token: str, lineno: int) -> float:
    try:
        t = float(token)
    except ValueError:
        raise FormatError(f"non-numeric time {token!r}", lineno) from None
    if not math.isfinite(t) or t < 0:
        raise FormatError(f"time must be finite and nonnegative, got {token!r}", lineno)
    return t


def _read_header(lines: Iterator[tuple[int, str]]) -> dict[str, str]:
    labels: dict[str, str] = {}
    seen_labels: set[str] = set()
    for lineno, line in lines:
        if not line.strip():
            return labels
        node_id, sep, label = line.partition(",")
        if not sep or not node_id or not label:
            raise FormatError(f"header line must be '<node_id>,<label>', got {line!r}", lineno)
        if node_id in labels:
            raise FormatError(f"node id {node_id!r} declared twice", lineno)
        if label in seen_labels:
            raise FormatError(f"label {label!r} declared twice", lineno)
        labels[node_id] = label
        seen_labels.add(label)
    return labels


def _stripped(stream: IO[str]) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(stream, start=1):
        yield lineno, raw.rstrip("\r\n")


def _iter_body(lines: Iterator[tuple[int, str]], labels: Mapping[str, str]) -> Iterator[RawCascade]:
    index = 0
    pending_blank: int | None = None
    for lineno, line in lines:
        if not line.strip():
            pending_blank = pending_blank or lineno
            continue
        if pending_blank is not None:
            raise FormatError("blank line inside cascade body", pending_blank)
        events = []
        seen = set()
        for token in line.split(";"):
            parts = token.split(",")
            if len(parts) != 2:
                raise FormatError(f"event {token!r} is not '<node>,<time>'", lineno)
            node_id, raw_time = parts[0].strip(), parts[1].strip()
            if node_id not in labels:
                raise FormatError(f"unknown node id {node_id!r}", lineno)
            if node_id in seen:
                raise FormatError(f"duplicate node {node_id!r} in cascade", lineno)
            seen.add(node_id)
            events.append((labels[node_id], _parse_time(raw_time, lineno)))
        yield RawCascade(f"c{index}", tuple(events))
        index += 1


def iter_cascades(stream: IO[str]) -> tuple[list[str], Iterator[RawCascade]]:
    """Read the header, then return ``(nodes, cascades)`` with cascades as a lazy iterator.

    Only the cascade currently being parsed is held in memory.
    """
    lines = _stripped(stream)
    labels = _read_header(lines)
    return list(labels.values()), _iter_body(lines, labels)


def parse_cascades(stream: IO[str]) -> CascadeLog:
    nodes, cascades = iter_cascades(stream)
    return CascadeLog(nodes=nodes, cascades=list(cascades))


def write_cascades(nodes: Iterable[str], cascades: Iterable[RawCascade], stream: IO[str]) -> None:
    """Write a cascade file. Node ids are positions in ``nodes``; times use ``repr``."""
    nodes = list(nodes)
    ids = {label: str(i) for i, label in enumerate(nodes)}
    for label in nodes:
        if any(ch in label for ch in ",;\n\t") or not label:
            raise ValueError(f"label {label!r} cannot be serialized")
        stream.write(f"{ids[label]},{label}\n")
    stream.write("\n")
    for cascade in cascades:
        stream.write(";".join(f"{ids[node]},{t!r}" for node, t in cascade.events))
        stream.write("\n")


# -- edge lists ------------------------------------------------------------


def parse_edge_list(stream: IO[str]) -> nx.DiGraph:
    graph = nx.DiGraph()
    for lineno, line in _stripped(stream):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise FormatError(f"expected 'u<TAB>v[<TAB>w]', got {line!r}", lineno)
        u, v = parts[0], parts[1]
        if not u or not v:
            raise FormatError("empty node id", lineno)
        if u == v:
            raise FormatError(f"self-loop on {u!r}", lineno)
        if len(parts) == 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise FormatError(f"weight {parts[2]!r} is not a number", lineno) from None
            if not math.isfinite(w):
                raise FormatError(f"weight {parts[2]!r} is not finite", lineno)
            if graph.has_edge(u, v):
                graph.remove_edge(u, v)
            graph.add_edge(u, v, weight=w)
        else:
            if graph.has_edge(u, v):
                graph.remove_edge(u, v)
            graph.add_edge(u, v)
    return graph


def format_weight(w: float) -> str:
    return format(w, "#.12g")


def _edge_rows(edges) -> list[tuple[str, str, float | None]]:
    if isinstance(edges, nx.DiGraph):
        return [(u, v, d.get("weight")) for u, v, d in edges.edges(data=True)]
    return [(u, v, w) for u, v, w in edges]


def write_edge_list(edges, stream: IO[str]) -> None:
    """Write edges sorted by weight descending, then ``(u, v)`` ascending.

    Accepts a ``networkx.DiGraph`` (optional ``weight`` attribute) or any
    iterable of ``(u, v, w)`` triples such as a ``WeightedEdgeList``.
    Unweighted edges sort after weighted ones and are written without a
    weight column.
    """
    rows = _edge_rows(edges)
    rows.sort(key=lambda r: (r[2] is None, -(r[2] or 0.0), r[0], r[1]))
    for u, v, w in rows:
        if w is None:
            stream.write(f"{u}\t{v}\n")
        else:
            stream.write(f"{u}\t{v}\t{format_weight(w)}\n")


# -- communities -----------------------------------------------------------


def parse_communities(stream: IO[str]) -> list[set[str]]:
    lines = list(_stripped(stream))
    while lines and not lines[-1][1].strip():
        lines.pop()
    communities = []
    for lineno, line in lines:
        members = line.split()
        if not members:
            raise FormatError("empty community line", lineno)
        communities.append(set(members))
    return communities


def write_communities(communities: Iterable[Iterable[str]], stream: IO[str]) -> None:
    for members in communities:
        members = sorted(members)
        if not members:
            raise ValueError("communities must be non-empty")
        stream.write(" ".join(members) + "\n")


# -- metric reports --------------------------------------------------------


def format_metric(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6f}"


def write_report(report: Mapping[str, float], stream: IO[str]) -> None:
    stream.write("metric,value\n")
    for name, value in report.items():
        stream.write(f"{name},{format_metric(value)}\n")


def parse_report(stream: IO[str]) -> dict[str, float]:
    lines = list(_stripped(stream))
    if not lines or lines[0][1] != "metric,value":
        raise FormatError("missing 'metric,value' header", 1)
    report = {}
    for lineno, line in lines[1:]:
        if not line:
            continue
        name, sep, value = line.rpartition(",")
        if not sep:
            raise FormatError(f"bad report line {line!r}", lineno)
        try:
            report[name] = float(value)
        except ValueError:
            raise FormatError(f"bad value {value!r}", lineno) from None
    return report
