"""Deliberately naive dense implementation of the edge weights, used as a test oracle.

Nothing here shares code with :mod:`dani.inference`: timestamps are sorted,
ranks assigned, and every quantity is built in plain Python N x N lists.
"""

from __future__ import annotations

from typing import Sequence

from .io import RawCascade


def reference_infer(cascades: Sequence[RawCascade], nodes: Sequence[str] | None = None) -> dict[tuple[str, str], float]:
    """Return ``{(u, v): w}`` for every pair with a positive weight."""
    cascades = [c for c in cascades if len(c.events) >= 2]
    if nodes is None:
        nodes = sorted({node for c in cascades for node, _ in c.events})
    nodes = list(nodes)
    n = len(nodes)
    idx = {label: i for i, label in enumerate(nodes)}

    total = [[0.0] * n for _ in range(n)]
    members = [set() for _ in range(n)]
    before = [[0] * n for _ in range(n)]

    for ci, cascade in enumerate(cascades):
        ordered = sorted(cascade.events, key=lambda ev: (ev[1], ev[0]))
        rank = {}
        for r, (node, _) in enumerate(ordered, start=1):
            rank[idx[node]] = r
            members[idx[node]].add(ci)

        d = [[0] * n for _ in range(n)]
        for u, lu in rank.items():
            for v, lv in rank.items():
                if lu < lv:
                    d[u][v] = lv * (lv - lu)
                    before[u][v] += 1
        for u in range(n):
            row = sum(d[u])
            if row:
                for v in range(n):
                    if d[u][v]:
                        total[u][v] += d[u][v] / row

    weights = {}
    for u in range(n):
        row = sum(total[u])
        for v in range(n):
            if u == v or total[u][v] == 0:
                continue
            lam = total[u][v] / row
            union = len(members[u] | members[v])
            theta = before[u][v] / union if union else 0.0
            if theta > 0:
                weights[(nodes[u], nodes[v])] = theta / lam
    return weights
