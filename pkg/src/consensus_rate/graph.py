"""Undirected simple graphs, connectivity, Laplacian spectra and supergraphs.

Edges are stored canonically as ``(i, j)`` with ``i < j`` and kept in
lexicographic order, so iteration order (and therefore every downstream
output) is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError

Edge = tuple[int, int]

# Eigenvalues closer than this to zero are treated as zero.
SPECTRAL_TOL = 1e-9


def canonical(i: int, j: int) -> Edge:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``attr`` optionally maps each edge to a nonnegative scalar (a probability,
    a cost, a distance...). It does not take part in equality or hashing.
    """

    n: int
    edges: tuple[Edge, ...] = ()
    attr: Mapping[Edge, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"node count must be a positive integer, got {self.n!r}")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise InvalidInputError(f"self-loop at node {i}")
            e = canonical(i, j)
            if not (0 <= e[0] and e[1] < self.n):
                raise InvalidInputError(f"edge {e} out of range for n={self.n}")
            if e in seen:
                raise InvalidInputError(f"duplicate edge {e}")
            seen.add(e)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(sorted(seen)))
        if self.attr is not None:
            attr = {canonical(*e): float(v) for e, v in self.attr.items()}
            missing = seen.difference(attr)
            extra = set(attr).difference(seen)
            if missing or extra:
                raise InvalidInputError(
                    f"attr keys must match edges (missing={sorted(missing)}, extra={sorted(extra)})"
                )
            if any(v < 0 or math.isnan(v) for v in attr.values()):
                raise InvalidInputError("edge attributes must be nonnegative")
            object.__setattr__(self, "attr", attr)

    @property
    def m(self) -> int:
        return len(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return canonical(i, j) in self.edge_set

    @property
    def edge_set(self) -> frozenset[Edge]:
        # cached on first use; the instance is frozen so this never goes stale
        cached = self.__dict__.get("_edge_set")
        if cached is None:
            cached = frozenset(self.edges)
            object.__setattr__(self, "_edge_set", cached)
        return cached

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def attr_vector(self) -> np.ndarray:
        """Edge attributes in edge order."""
        if self.attr is None:
            raise InvalidInputError("graph has no edge attributes")
        return np.array([self.attr[e] for e in self.edges], dtype=float)

    def with_attr(self, values: Mapping[Edge, float] | Sequence[float] | np.ndarray) -> "Graph":
        if isinstance(values, Mapping):
            attr = dict(values)
        else:
            values = list(values)
            if len(values) != self.m:
                raise InvalidInputError(f"expected {self.m} attribute values, got {len(values)}")
            attr = dict(zip(self.edges, values))
        return Graph(self.n, self.edges, attr)

    def without_attr(self) -> "Graph":
        return Graph(self.n, self.edges)

    def subgraph(self, edges: Iterable[Edge]) -> "Graph":
        """Spanning subgraph with the given edges (attributes carried over)."""
        edges = [canonical(*e) for e in edges]
        attr = None if self.attr is None else {e: self.attr[e] for e in edges}
        return Graph(self.n, tuple(edges), attr)


class DisjointSet:
    """Union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.count -= 1
        return True


def components(g: Graph) -> list[list[int]]:
    """Connected components, each sorted, ordered by smallest node."""
    ds = DisjointSet(g.n)
    for i, j in g.edges:
        ds.union(i, j)
    groups: dict[int, list[int]] = {}
    for v in range(g.n):
        groups.setdefault(ds.find(v), []).append(v)
    return sorted(groups.values(), key=lambda c: c[0])


def is_connected(g: Graph) -> bool:
    ds = DisjointSet(g.n)
    for i, j in g.edges:
        ds.union(i, j)
    return ds.count == 1


def edges_connected(n: int, edges: Iterable[Edge]) -> bool:
    ds = DisjointSet(n)
    for i, j in edges:
        ds.union(i, j)
        if ds.count == 1:
            return True
    return ds.count == 1


def laplacian(g: Graph) -> np.ndarray:
    L = np.zeros((g.n, g.n))
    for i, j in g.edges:
        L[i, j] = L[j, i] = -1.0
        L[i, i] += 1.0
        L[j, j] += 1.0
    return L


def fiedler_value(g: Graph) -> float:
    """Second smallest Laplacian eigenvalue (algebraic connectivity)."""
    if g.n < 2:
        raise InvalidInputError("Fiedler value needs at least 2 nodes")
    lam = np.linalg.eigvalsh(laplacian(g))[1]
    return 0.0 if lam < SPECTRAL_TOL else float(lam)


def path_fiedler_constant(n: int) -> float:
    """``2(1 - cos(pi/n))``, the smallest Fiedler value of any connected graph on n nodes."""
    if n < 2:
        raise InvalidInputError("need n >= 2")
    return 2.0 * (1.0 - math.cos(math.pi / n))


def supergraph(graphs: Sequence[Graph], n: int | None = None) -> Graph:
    """Union of edge sets; ``n`` is required when ``graphs`` is empty."""
    if not graphs:
        if n is None:
            raise InvalidInputError("node count required for an empty collection")
        return Graph(n)
    sizes = {g.n for g in graphs}
    if n is not None:
        sizes.add(n)
    if len(sizes) != 1:
        raise InvalidInputError(f"graphs on different node sets: {sorted(sizes)}")
    edges = set()
    for g in graphs:
        edges.update(g.edges)
    return Graph(sizes.pop(), tuple(edges))


# -- edge bitmasks over a fixed base edge list ------------------------------------


def edge_mask(edges: Iterable[Edge], index: Mapping[Edge, int]) -> int:
    mask = 0
    for e in edges:
        mask |= 1 << index[canonical(*e)]
    return mask


def mask_edges(mask: int, base: Sequence[Edge]) -> list[Edge]:
    return [e for b, e in enumerate(base) if mask >> b & 1]


class MaskConnectivity:
    """Memoized connectivity test for edge subsets of a base edge list."""

    def __init__(self, n: int, base: Sequence[Edge]):
        self.n = n
        self.base = list(base)
        self._memo: dict[int, bool] = {}

    def __call__(self, mask: int) -> bool:
        mask = int(mask)
        hit = self._memo.get(mask)
        if hit is None:
            hit = edges_connected(self.n, mask_edges(mask, self.base))
            self._memo[mask] = hit
        return hit

    def many(self, masks: np.ndarray) -> np.ndarray:
        """Vectorized over an integer array of masks."""
        masks = np.asarray(masks)
        uniq, inverse = np.unique(masks, return_inverse=True)
        flags = np.fromiter((self(int(u)) for u in uniq), dtype=bool, count=len(uniq))
        return flags[inverse].reshape(masks.shape)


# -- constructors ---------------------------------------------------------------


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise InvalidInputError("cycle needs n >= 3")
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def star_graph(n: int) -> Graph:
    return Graph(n, tuple((0, j) for j in range(1, n)))


def circulant_regular_graph(n: int, d: int) -> Graph:
    """A connected d-regular graph on n nodes (circulant construction)."""
    if not (1 <= d <= n - 1) or (n * d) % 2:
        raise InvalidInputError(f"no {d}-regular graph on {n} nodes")
    edges = set()
    for i in range(n):
        for s in range(1, d // 2 + 1):
            edges.add(canonical(i, (i + s) % n))
        if d % 2:
            edges.add(canonical(i, (i + n // 2) % n))
    return Graph(n, tuple(edges))


def random_connected_graph(n: int, rng: np.random.Generator, extra_p: float = 0.3) -> Graph:
    """Random spanning tree plus independent extra edges."""
    edges = set()
    order = rng.permutation(n)
    for k in range(1, n):
        edges.add(canonical(order[k], order[rng.integers(k)]))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra_p:
                edges.add((i, j))
    return Graph(n, tuple(edges))


def random_geometric_graph(
    n: int, n_edges: int, rng: np.random.Generator, max_tries: int = 10_000
) -> tuple[Graph, np.ndarray]:
    """Nodes uniform on the unit square, joined when closer than a radius.

    The radius is set between the ``n_edges``-th and next pairwise distance so
    the edge count is exact; layouts that come out disconnected are redrawn.
    Returns the graph (attr = Euclidean distance) and the node positions.
    """
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if not (n - 1 <= n_edges <= len(pairs)):
        raise InvalidInputError(f"cannot place {n_edges} edges on {n} nodes")
    for _ in range(max_tries):
        pos = rng.random((n, 2))
        dist = np.array([np.hypot(*(pos[i] - pos[j])) for i, j in pairs])
        order = np.argsort(dist, kind="stable")
        chosen = order[:n_edges]
        g = Graph(n, tuple(pairs[k] for k in chosen), {pairs[k]: dist[k] for k in chosen})
        if is_connected(g):
            return g, pos
    raise InvalidInputError(f"no connected layout found in {max_tries} draws")


# -- text format ----------------------------------------------------------------


def parse_graph(text: str) -> Graph:
    """Parse ``n <N>`` followed by ``<i> <j> [attr]`` lines; ``#`` starts a comment."""
    n = None
    edges: list[Edge] = []
    attrs: list[float | None] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if parts[0] != "n" or len(parts) != 2:
                raise InvalidInputError(f"line {lineno}: expected header 'n <N>'")
            n = int(parts[1])
            continue
        if len(parts) not in (2, 3):
            raise InvalidInputError(f"line {lineno}: expected '<i> <j> [attr]'")
        edges.append((int(parts[0]), int(parts[1])))
        attrs.append(float(parts[2]) if len(parts) == 3 else None)
    if n is None:
        raise InvalidInputError("missing 'n <N>' header")
    have = [a is not None for a in attrs]
    if any(have) and not all(have):
        raise InvalidInputError("either every edge carries an attribute or none does")
    attr = {canonical(*e): a for e, a in zip(edges, attrs)} if edges and all(have) else None
    return Graph(n, tuple(edges), attr)


def read_graph(path: str | Path) -> Graph:
    return parse_graph(Path(path).read_text())


def format_graph(g: Graph) -> str:
    lines = [f"n {g.n}"]
    for e in g.edges:
        if g.attr is None:
            lines.append(f"{e[0]} {e[1]}")
        else:
            lines.append(f"{e[0]} {e[1]} {g.attr[e]!r}")
    return "\n".join(lines) + "\n"


def write_graph(g: Graph, path: str | Path) -> None:
    Path(path).write_text(format_graph(g))
