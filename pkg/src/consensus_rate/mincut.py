"""Global minimum cut of an undirected graph with nonnegative edge costs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CapacityError, InvalidInputError
from .graph import DisjointSet, Edge, Graph, canonical, components

EXHAUSTIVE_CAP = 16


@dataclass(frozen=True)
class CutResult:
    """A bipartition ``(S, V \\ S)``; ``S`` always contains node 0."""

    value: float
    partition: tuple[tuple[int, ...], tuple[int, ...]]
    cut_edges: tuple[Edge, ...]

    def to_json(self) -> dict:
        return {
            "value": self.value if math.isfinite(self.value) else "inf",
            "partition": [list(self.partition[0]), list(self.partition[1])],
            "cut_edges": [list(e) for e in self.cut_edges],
        }


def _cost_vector(g: Graph, costs) -> np.ndarray:
    if costs is None:
        c = g.attr_vector()
    elif isinstance(costs, Mapping):
        lookup = {canonical(*e): float(v) for e, v in costs.items()}
        try:
            c = np.array([lookup[e] for e in g.edges], dtype=float)
        except KeyError as exc:
            raise InvalidInputError(f"no cost for edge {exc.args[0]}") from None
    else:
        c = np.asarray(costs, dtype=float).reshape(-1)
        if c.shape != (g.m,):
            raise InvalidInputError(f"expected {g.m} costs, got {c.shape[0]}")
    if np.isnan(c).any() or (c < 0).any():
        raise InvalidInputError("edge costs must be nonnegative")
    return c


def _result(g: Graph, c: np.ndarray, side: set[int]) -> CutResult:
    if 0 not in side:
        side = set(range(g.n)) - side
    S = tuple(sorted(side))
    T = tuple(v for v in range(g.n) if v not in side)
    crossing = [k for k, (i, j) in enumerate(g.edges) if (i in side) != (j in side)]
    value = float(sum(c[k] for k in crossing))
    return CutResult(value, (S, T), tuple(g.edges[k] for k in crossing))


def _phases(W: np.ndarray) -> tuple[float, list[int]]:
    """Stoer-Wagner on a dense symmetric weight matrix; returns (value, one side)."""
    W = W.copy()
    groups = [[v] for v in range(len(W))]
    active = list(range(len(W)))
    best, best_side = math.inf, groups[0]
    while len(active) > 1:
        idx = np.array(active)
        sub = W[np.ix_(idx, idx)]
        added = np.zeros(len(idx), dtype=bool)
        added[0] = True
        conn = sub[0].copy()
        prev = last = 0
        cut_of_phase = math.inf
        for _ in range(len(idx) - 1):
            # maximum-adjacency order; argmax takes the lowest index on ties
            cand = np.where(added, -np.inf, conn)
            nxt = int(np.argmax(cand))
            cut_of_phase = float(cand[nxt])
            added[nxt] = True
            conn += sub[nxt]
            prev, last = last, nxt
        s, t = active[prev], active[last]
        if cut_of_phase < best:
            best, best_side = cut_of_phase, list(groups[t])
        W[s, :] += W[t, :]
        W[:, s] += W[:, t]
        W[s, s] = 0.0
        groups[s].extend(groups[t])
        active.remove(t)
    return best, best_side


def stoer_wagner(g: Graph, costs: Mapping[Edge, float] | Sequence[float] | np.ndarray | None = None) -> CutResult:
    """Minimum-weight set of edges whose removal disconnects ``g``.

    ``costs`` may be a mapping, a vector in edge order, or omitted to use the
    graph's edge attributes. Infinite costs mark uncuttable links; their
    endpoints are merged before the search, and the value is ``inf`` when no
    finite cut remains. A disconnected ``g`` yields value 0 with the
    component of node 0 as ``S``.
    """
    if g.n < 2:
        raise InvalidInputError("min-cut needs at least 2 nodes")
    c = _cost_vector(g, costs)
    comps = components(g)
    if len(comps) > 1:
        return _result(g, c, set(comps[0]))

    merged = DisjointSet(g.n)
    for (i, j), ck in zip(g.edges, c):
        if math.isinf(ck):
            merged.union(i, j)
    roots = sorted({merged.find(v) for v in range(g.n)}, key=lambda r: min(
        v for v in range(g.n) if merged.find(v) == r))
    if len(roots) == 1:
        return _result(g, c, {0})
    label = {r: k for k, r in enumerate(roots)}
    node_label = [label[merged.find(v)] for v in range(g.n)]
    W = np.zeros((len(roots), len(roots)))
    for (i, j), ck in zip(g.edges, c):
        a, b = node_label[i], node_label[j]
        if a != b:
            W[a, b] += ck
            W[b, a] += ck
    _, side = _phases(W)
    side_labels = set(side)
    return _result(g, c, {v for v in range(g.n) if node_label[v] in side_labels})


def exhaustive_mincut(g: Graph, costs: Mapping[Edge, float] | Sequence[float] | np.ndarray | None = None) -> CutResult:
    """Minimum over all ``2^(n-1) - 1`` bipartitions (testing oracle)."""
    if g.n < 2:
        raise InvalidInputError("min-cut needs at least 2 nodes")
    if g.n > EXHAUSTIVE_CAP:
        raise CapacityError(f"exhaustive min-cut limited to n <= {EXHAUSTIVE_CAP}", cap=EXHAUSTIVE_CAP)
    c = _cost_vector(g, costs)
    n = g.n
    codes = np.arange(1, 1 << (n - 1), dtype=np.int64)
    # column v says whether node v sits on the far side (node 0 never does)
    far = np.zeros((len(codes), n), dtype=bool)
    for v in range(1, n):
        far[:, v] = (codes >> (v - 1)) & 1
    if g.m:
        ends = np.array(g.edges)
        crossing = far[:, ends[:, 0]] != far[:, ends[:, 1]]
        values = np.where(crossing, c, 0.0).sum(axis=1)
    else:
        values = np.zeros(len(codes))
    best = int(np.argmin(values))
    return _result(g, c, {v for v in range(n) if not far[best, v]})
