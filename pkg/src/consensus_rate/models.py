"""Random averaging models: distributions over (graph, weight matrix) pairs.

Four families are provided. ``GossipModel`` activates one link per step,
``LinkFailureModel`` keeps each base link independently, ``DAdjacentModel``
activates every link around one node, and ``ExplicitModel`` is a finite
list of realizations. All matrices are symmetric, doubly stochastic, and
have every positive entry and every diagonal entry at least ``delta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import CapacityError, InvalidInputError
from .graph import Edge, Graph, MaskConnectivity, canonical, edge_mask, mask_edges, read_graph

PROB_TOL = 1e-12
LINK_FAILURE_CAP = 20


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Symmetric doubly stochastic matrix validated against a lower bound ``delta``."""

    values: np.ndarray
    delta: float

    def __post_init__(self):
        W = np.array(self.values, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {W.shape}")
        if not np.array_equal(W, W.T):
            raise InvalidInputError("matrix is not exactly symmetric")
        if (W < 0).any():
            raise InvalidInputError("matrix has negative entries")
        if np.abs(W.sum(axis=1) - 1.0).max() > PROB_TOL:
            raise InvalidInputError("row sums differ from 1")
        pos = W[W > 0]
        # relative slack so that e.g. 1 - 0.9 still counts as >= 0.1
        floor = self.delta * (1 - 1e-12)
        if pos.size and pos.min() < floor:
            raise InvalidInputError(f"positive entry {pos.min():g} below delta={self.delta:g}")
        if np.diag(W).min() < floor:
            raise InvalidInputError(f"diagonal entry below delta={self.delta:g}")
        W.setflags(write=False)
        object.__setattr__(self, "values", W)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def graph(self) -> Graph:
        """Induced graph: an edge wherever an off-diagonal entry is positive."""
        i, j = np.nonzero(np.triu(self.values, 1))
        return Graph(self.n, tuple(zip(i.tolist(), j.tolist())))


def metropolis_weights(g: Graph) -> np.ndarray:
    """``W_ij = 1/(1+max(d_i,d_j))`` on edges, diagonal fills rows to 1."""
    deg = g.degrees()
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    W[np.diag_indices(g.n)] = 1.0 - W.sum(axis=1)
    return W


def gossip_matrix(n: int, edge: Edge, alpha: float) -> np.ndarray:
    i, j = edge
    W = np.eye(n)
    W[i, i] = W[j, j] = 1.0 - alpha
    W[i, j] = W[j, i] = alpha
    return W


def _check_distribution(p: np.ndarray, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if (p < 0).any() or abs(p.sum() - 1.0) > PROB_TOL:
        raise InvalidInputError(f"{what} must be nonnegative and sum to 1 (sum={p.sum()!r})")
    return p


class NetworkModel:
    """Common interface. Subclasses fill in the sampling and support details."""

    kind: str = ""
    n: int
    delta: float
    base: Graph

    # -- sampling --------------------------------------------------------------
    def sample_graph(self, rng: np.random.Generator) -> Graph:
        raise NotImplementedError

    def sample_matrix(self, g: Graph, rng: np.random.Generator) -> StochasticMatrix:
        raise NotImplementedError

    def sample_masks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Vectorized graph sampling as bitmasks over ``self.base.edges``."""
        raise NotImplementedError

    def matrices_for_masks(self, masks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Weight matrices for a batch of sampled masks, shape ``(T, n, n)``."""
        uniq, inverse = np.unique(masks, return_inverse=True)
        table = np.stack([self.sample_matrix(self.mask_graph(int(u)), rng).values for u in uniq])
        return table[inverse.reshape(-1)]

    # -- support ---------------------------------------------------------------
    def realizable_graphs(self, cap: int = LINK_FAILURE_CAP) -> list[Graph]:
        raise NotImplementedError

    def graph_probability(self, g: Graph) -> float:
        raise NotImplementedError

    def support(self, cap: int = LINK_FAILURE_CAP) -> tuple[list[Graph], np.ndarray]:
        graphs = self.realizable_graphs(cap)
        return graphs, np.array([self.graph_probability(g) for g in graphs])

    # -- bitmask helpers ---------------------------------------------------------
    @property
    def edge_index(self) -> dict[Edge, int]:
        return {e: b for b, e in enumerate(self.base.edges)}

    def mask_of(self, g: Graph) -> int:
        return edge_mask(g.edges, self.edge_index)

    def mask_graph(self, mask: int) -> Graph:
        return Graph(self.n, tuple(mask_edges(mask, self.base.edges)))

    def connectivity(self) -> MaskConnectivity:
        conn = self.__dict__.get("_connectivity")
        if conn is None:
            conn = self._connectivity = MaskConnectivity(self.n, self.base.edges)
        return conn

    def _check_node_set(self, g: Graph):
        if g.n != self.n:
            raise InvalidInputError(f"graph has {g.n} nodes, model has {self.n}")

    def _is_base_subgraph(self, g: Graph) -> bool:
        return g.n == self.n and g.edge_set <= self.base.edge_set


class GossipModel(NetworkModel):
    """One base link per step, link ``e`` drawn with probability ``p[e]``.

    ``alpha`` fixes the averaging weight; ``alpha=None`` draws it uniformly
    from ``[delta, 1-delta]`` at each step.
    """

    kind = "gossip"

    def __init__(self, base: Graph, p: Sequence[float] | None = None, alpha: float | None = 0.5, delta: float = 0.1):
        if base.m == 0:
            raise InvalidInputError("gossip needs at least one link")
        if p is None:
            p = base.attr_vector() if base.attr is not None else np.full(base.m, 1.0 / base.m)
        p = np.asarray(p, dtype=float)
        if p.shape != (base.m,):
            raise InvalidInputError(f"expected {base.m} link probabilities")
        if not 0 < delta <= 0.5:
            raise InvalidInputError("delta must lie in (0, 1/2]")
        if alpha is not None and not (delta <= alpha <= 1 - delta):
            raise InvalidInputError(f"alpha={alpha} outside [delta, 1-delta]")
        self.base = base.without_attr()
        self.n = base.n
        self.p = _check_distribution(p, "gossip link probabilities")
        self.alpha = alpha
        self.delta = float(delta)

    def sample_graph(self, rng):
        e = self.base.edges[rng.choice(self.base.m, p=self.p)]
        return Graph(self.n, (e,))

    def sample_matrix(self, g, rng):
        if g.m != 1 or not self._is_base_subgraph(g):
            raise InvalidInputError(f"{g.edges} is not a one-link graph of the gossip base")
        alpha = self.alpha if self.alpha is not None else rng.uniform(self.delta, 1 - self.delta)
        return StochasticMatrix(gossip_matrix(self.n, g.edges[0], alpha), self.delta)

    def sample_masks(self, rng, size):
        idx = rng.choice(self.base.m, size=size, p=self.p)
        return np.left_shift(np.int64(1), idx.astype(np.int64))

    def matrices_for_masks(self, masks, rng):
        if self.alpha is not None:
            return super().matrices_for_masks(masks, rng)
        masks = np.asarray(masks, dtype=np.int64).reshape(-1)
        idx = np.log2(masks).round().astype(int)
        ends = np.array(self.base.edges)[idx]
        alpha = rng.uniform(self.delta, 1 - self.delta, size=len(masks))
        W = np.broadcast_to(np.eye(self.n), (len(masks), self.n, self.n)).copy()
        t = np.arange(len(masks))
        i, j = ends[:, 0], ends[:, 1]
        W[t, i, i] = W[t, j, j] = 1 - alpha
        W[t, i, j] = W[t, j, i] = alpha
        return W

    def realizable_graphs(self, cap=LINK_FAILURE_CAP):
        return [Graph(self.n, (e,)) for e in self.base.edges]

    def graph_probability(self, g):
        self._check_node_set(g)
        if g.m != 1 or not self._is_base_subgraph(g):
            return 0.0
        return float(self.p[self.edge_index[g.edges[0]]])


class LinkFailureModel(NetworkModel):
    """Each base link present independently with probability ``p[e]``; Metropolis weights."""

    kind = "link_failure"

    def __init__(self, base: Graph, p: Sequence[float] | float | None = None, delta: float | None = None):
        if p is None:
            p = base.attr_vector()
        p = np.broadcast_to(np.asarray(p, dtype=float), (base.m,)).copy()
        if ((p < 0) | (p > 1)).any():
            raise InvalidInputError("link probabilities must lie in [0, 1]")
        self.base = base.without_attr()
        self.n = base.n
        self.p = p
        bound = 1.0 / self.n
        if delta is not None and delta > bound:
            raise InvalidInputError(f"Metropolis weights only guarantee delta <= 1/n = {bound:g}")
        self.delta = bound if delta is None else float(delta)

    def sample_graph(self, rng):
        keep = rng.random(self.base.m) < self.p
        return Graph(self.n, tuple(e for e, k in zip(self.base.edges, keep) if k))

    def sample_matrix(self, g, rng=None):
        if not self._is_base_subgraph(g):
            raise InvalidInputError("graph is not a subgraph of the link-failure base")
        return StochasticMatrix(metropolis_weights(g), self.delta)

    def sample_masks(self, rng, size):
        if self.base.m > 62:
            raise CapacityError("bitmask sampling supports at most 62 links", cap=62)
        keep = rng.random((size, self.base.m)) < self.p
        weights = np.left_shift(np.int64(1), np.arange(self.base.m, dtype=np.int64))
        return (keep * weights).sum(axis=1, dtype=np.int64)

    def realizable_graphs(self, cap=LINK_FAILURE_CAP):
        if self.base.m > cap:
            raise CapacityError(f"link-failure enumeration limited to {cap} links (have {self.base.m})", cap=cap)
        return [self.mask_graph(mask) for mask in range(1 << self.base.m)]

    def graph_probability(self, g):
        self._check_node_set(g)
        if not self._is_base_subgraph(g):
            return 0.0
        on = g.edge_set
        prob = 1.0
        for e, pe in zip(self.base.edges, self.p):
            prob *= pe if e in on else 1.0 - pe
        return prob


class DAdjacentModel(NetworkModel):
    """All links around one node at a time on a d-regular base, node ``i`` w.p. ``q[i]``."""

    kind = "d_adjacent"

    def __init__(self, base: Graph, q: Sequence[float] | None = None, delta: float | None = None):
        deg = base.degrees()
        if base.m == 0 or (deg != deg[0]).any():
            raise InvalidInputError("d-adjacent model needs a d-regular base graph with d >= 1")
        q = np.full(base.n, 1.0 / base.n) if q is None else np.asarray(q, dtype=float)
        if q.shape != (base.n,):
            raise InvalidInputError(f"expected {base.n} node activation probabilities")
        self.base = base.without_attr()
        self.n = base.n
        self.d = int(deg[0])
        self.q = _check_distribution(q, "node activation probabilities")
        bound = 1.0 / self.n
        if delta is not None and delta > bound:
            raise InvalidInputError(f"Metropolis weights only guarantee delta <= 1/n = {bound:g}")
        self.delta = bound if delta is None else float(delta)
        self._hoods = [
            Graph(self.n, tuple(e for e in self.base.edges if i in e)) for i in range(self.n)
        ]

    def neighborhood(self, i: int) -> Graph:
        return self._hoods[i]

    def sample_graph(self, rng):
        return self._hoods[rng.choice(self.n, p=self.q)]

    def sample_matrix(self, g, rng=None):
        if g not in self._hoods:
            raise InvalidInputError("graph is not a node neighborhood of the base")
        return StochasticMatrix(metropolis_weights(g), self.delta)

    def sample_masks(self, rng, size):
        table = np.array([self.mask_of(h) for h in self._hoods], dtype=np.int64)
        return table[rng.choice(self.n, size=size, p=self.q)]

    def realizable_graphs(self, cap=LINK_FAILURE_CAP):
        # d = 1 makes partners share a neighborhood; keep each graph once
        out: list[Graph] = []
        for h in self._hoods:
            if h not in out:
                out.append(h)
        return out

    def graph_probability(self, g):
        self._check_node_set(g)
        return float(sum(qi for qi, h in zip(self.q, self._hoods) if h == g))


class ExplicitModel(NetworkModel):
    """Finite list of ``(graph, probability, matrix)`` realizations.

    A realization given without a matrix uses Metropolis weights on its graph.
    ``delta`` defaults to the smallest positive entry over all matrices.
    """

    kind = "explicit"

    def __init__(
        self,
        n: int,
        realizations: Sequence[tuple[Graph, float, np.ndarray | StochasticMatrix | None]],
        delta: float | None = None,
    ):
        if not realizations:
            raise InvalidInputError("explicit model needs at least one realization")
        graphs, probs, mats = [], [], []
        for g, p, W in realizations:
            if g.n != n:
                raise InvalidInputError(f"realization on {g.n} nodes, model has {n}")
            g = g.without_attr()
            if g in graphs:
                raise InvalidInputError(f"graph {g.edges} listed twice")
            W = metropolis_weights(g) if W is None else np.asarray(getattr(W, "values", W), dtype=float)
            graphs.append(g)
            probs.append(float(p))
            mats.append(W)
        probs = _check_distribution(np.array(probs), "realization probabilities")
        if delta is None:
            delta = min(W[W > 0].min() for W in mats)
        self.n = n
        self.delta = float(delta)
        self.graphs = graphs
        self.p = probs
        self.matrices = [StochasticMatrix(W, self.delta) for W in mats]
        for g, S in zip(graphs, self.matrices):
            if S.graph() != g:
                raise InvalidInputError(f"matrix for {g.edges} induces {S.graph().edges}")
        union = sorted({e for g in graphs for e in g.edges})
        self.base = Graph(n, tuple(union))
        self._masks = np.array([self.mask_of(g) for g in graphs], dtype=np.int64)

    def sample_graph(self, rng):
        return self.graphs[rng.choice(len(self.graphs), p=self.p)]

    def sample_matrix(self, g, rng=None):
        try:
            return self.matrices[self.graphs.index(g.without_attr())]
        except ValueError:
            raise InvalidInputError(f"{g.edges} is not a realization of this model") from None

    def sample_masks(self, rng, size):
        return self._masks[rng.choice(len(self.graphs), size=size, p=self.p)]

    def matrices_for_masks(self, masks, rng):
        table = np.stack([S.values for S in self.matrices])
        lookup = {int(m): k for k, m in enumerate(self._masks)}
        idx = np.array([lookup[int(m)] for m in np.asarray(masks).reshape(-1)])
        return table[idx]

    def realizable_graphs(self, cap=LINK_FAILURE_CAP):
        return list(self.graphs)

    def graph_probability(self, g):
        self._check_node_set(g)
        try:
            return float(self.p[self.graphs.index(g.without_attr())])
        except ValueError:
            return 0.0


# -- module-level operations --------------------------------------------------------


def sample_graph(model: NetworkModel, rng: np.random.Generator) -> Graph:
    return model.sample_graph(rng)


def sample_matrix(model: NetworkModel, g: Graph, rng: np.random.Generator) -> StochasticMatrix:
    return model.sample_matrix(g, rng)


def realizable_graphs(model: NetworkModel, cap: int = LINK_FAILURE_CAP) -> list[Graph]:
    return model.realizable_graphs(cap)


def graph_probability(model: NetworkModel, g: Graph) -> float:
    return model.graph_probability(g)


def toy_model(p: Sequence[float] = (1 / 3, 1 / 3, 1 / 3)) -> ExplicitModel:
    """Five nodes, three two-link realizations.

    Pairwise unions {G1,G2} and {G2,G3} are connected, {G1,G3} is not, and
    every single realization is disconnected, so the maximal disconnected
    collections are {G2} and {G1,G3}.
    """
    g1 = Graph(5, ((0, 1), (2, 3)))
    g2 = Graph(5, ((1, 2), (0, 4)))
    g3 = Graph(5, ((0, 1), (3, 4)))
    return ExplicitModel(5, [(g1, p[0], None), (g2, p[1], None), (g3, p[2], None)])


# -- JSON configuration ---------------------------------------------------------------

_KEYS = {
    "gossip": {"type", "graph", "p", "alpha", "delta"},
    "link_failure": {"type", "graph", "p", "delta"},
    "d_adjacent": {"type", "graph", "p", "delta"},
    "explicit": {"type", "n", "realizations", "delta"},
}


def _edge_key(key: str) -> Edge:
    try:
        i, j = key.replace(",", "-").split("-")
        return canonical(int(i), int(j))
    except ValueError:
        raise InvalidInputError(f"bad edge key {key!r}; use 'i-j'") from None


def _edge_values(base: Graph, value: Any, default_uniform: float | None) -> np.ndarray | None:
    if value is None:
        return base.attr_vector() if base.attr is not None else (
            None if default_uniform is None else np.full(base.m, default_uniform)
        )
    if value == "uniform":
        if default_uniform is None:
            raise InvalidInputError("'uniform' is not meaningful for this model; give a number")
        return np.full(base.m, default_uniform)
    if isinstance(value, (int, float)):
        return np.full(base.m, float(value))
    if isinstance(value, Mapping):
        values = {_edge_key(k): float(v) for k, v in value.items()}
        if set(values) != set(base.edges):
            raise InvalidInputError("'p' must give a value for every graph edge and nothing else")
        return np.array([values[e] for e in base.edges])
    if isinstance(value, list):
        return np.asarray(value, dtype=float)
    raise InvalidInputError(f"cannot interpret 'p' = {value!r}")


def model_from_dict(cfg: Mapping[str, Any], base_dir: str | Path = ".") -> NetworkModel:
    """Build a model from a parsed JSON config (schema in README)."""
    kind = cfg.get("type")
    if kind not in _KEYS:
        raise InvalidInputError(f"unknown model type {kind!r}; expected one of {sorted(_KEYS)}")
    unknown = set(cfg) - _KEYS[kind]
    if unknown:
        raise InvalidInputError(f"unknown keys for {kind} model: {sorted(unknown)}")
    delta = cfg.get("delta")

    if kind == "explicit":
        n = int(cfg["n"])
        reals = []
        for r in cfg["realizations"]:
            extra = set(r) - {"edges", "p", "matrix"}
            if extra:
                raise InvalidInputError(f"unknown realization keys: {sorted(extra)}")
            g = Graph(n, tuple(tuple(e) for e in r["edges"]))
            reals.append((g, float(r["p"]), None if r.get("matrix") is None else np.array(r["matrix"], dtype=float)))
        return ExplicitModel(n, reals, delta=delta)

    if "graph" not in cfg:
        raise InvalidInputError(f"{kind} model needs a 'graph' file")
    path = Path(cfg["graph"])
    base = read_graph(path if path.is_absolute() else Path(base_dir) / path)
    if kind == "gossip":
        p = _edge_values(base, cfg.get("p"), 1.0 / max(base.m, 1))
        alpha = cfg.get("alpha", 0.5)
        alpha = None if alpha == "uniform" else alpha
        return GossipModel(base, p, alpha=alpha, delta=0.1 if delta is None else delta)
    if kind == "link_failure":
        p = _edge_values(base, cfg.get("p"), None)
        if p is None:
            raise InvalidInputError("link_failure model needs 'p' or edge attributes")
        return LinkFailureModel(base, p, delta=delta)
    q = cfg.get("p")
    return DAdjacentModel(base, None if q in (None, "uniform") else q, delta=delta)


def load_model(path: str | Path) -> NetworkModel:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    return model_from_dict(cfg, base_dir=path.parent)


def model_is_graph_deterministic(model: NetworkModel) -> bool:
    """True when the weight matrix is a fixed function of the sampled graph."""
    return not (isinstance(model, GossipModel) and model.alpha is None)
