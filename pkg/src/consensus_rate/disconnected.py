"""Disconnected and maximal disconnected collections of realizable graphs.

A collection is a set of realizable graphs; it is *disconnected* when the
union of its edges leaves the network disconnected, and *maximal* when
adding any further realizable graph would connect it. The rate of consensus
is ``-log`` of the largest probability mass carried by a maximal collection.

Everything here is exhaustive and meant for small models. Subsets are
enumerated as bitmasks over the realizable graphs; the edge union of every
subset is built by a subset DP and connectivity is memoized per edge mask.
Link-failure models are handled through subgraphs of the base graph instead
(a collection's best completion is "every subgraph of some spanning
subgraph"), which avoids the doubly exponential collection space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityError, InvalidInputError
from .graph import Graph, MaskConnectivity, components
from .models import LINK_FAILURE_CAP, LinkFailureModel, NetworkModel

ENUMERATION_CAP = 20


class SubmaskIndices(Sequence[int]):
    """All submasks of ``mask`` in increasing order, as a lazy sequence.

    For link-failure models the realizable graph with index ``k`` is the
    subgraph whose edge mask is ``k``, so these are the member indices of the
    collection "every subgraph of ``mask``".
    """

    def __init__(self, mask: int):
        self.mask = int(mask)
        self._bits = [b for b in range(self.mask.bit_length()) if self.mask >> b & 1]

    def __len__(self) -> int:
        return 1 << len(self._bits)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return sum(1 << b for t, b in enumerate(self._bits) if k >> t & 1)

    def __iter__(self) -> Iterator[int]:
        for k in range(len(self)):
            yield self[k]

    def __contains__(self, x) -> bool:
        return isinstance(x, (int, np.integer)) and x >= 0 and (int(x) & ~self.mask) == 0

    def __repr__(self) -> str:
        return f"SubmaskIndices({self.mask:#b})"


@dataclass(frozen=True)
class Collection:
    """Member indices into ``realizable_graphs(model)``, their supergraph and mass."""

    members: Sequence[int]
    supergraph: Graph
    p: float

    @property
    def is_disconnected(self) -> bool:
        return len(components(self.supergraph)) > 1

    def to_json(self) -> dict:
        return {
            "members": list(self.members),
            "p": self.p,
            "supergraph_components": components(self.supergraph),
        }


@dataclass(frozen=True)
class RateResult:
    """Rate of consensus ``I`` (nats) with its witness.

    ``p_max`` is ``None`` only when no disconnected collection exists at all.
    ``witness`` is a maximal ``Collection``, a ``CutResult``, or ``None``.
    """

    rate: float
    p_max: float | None
    witness: object = None
    method: str = "brute"

    def __post_init__(self):
        if self.method not in {"brute", "mincut", "closed-form", "empirical"}:
            raise InvalidInputError(f"unknown method tag {self.method!r}")
        if math.isfinite(self.rate) and self.p_max:
            if abs(self.rate + math.log(self.p_max)) > 1e-12 * max(1.0, abs(self.rate)):
                raise InvalidInputError("rate and p_max disagree")

    @classmethod
    def from_p_max(cls, p_max: float | None, witness=None, method: str = "brute") -> "RateResult":
        if p_max is None or p_max <= 0.0:
            return cls(math.inf, p_max, witness, method)
        return cls(-math.log(p_max), p_max, witness, method)


# -- subset machinery -------------------------------------------------------------------


def _support_masks(model: NetworkModel, cap: int) -> tuple[list[Graph], np.ndarray, np.ndarray]:
    graphs, probs = model.support(cap)
    if len(graphs) > cap:
        raise CapacityError(f"collection enumeration limited to {cap} realizable graphs (have {len(graphs)})", cap=cap)
    masks = np.array([model.mask_of(g) for g in graphs], dtype=np.int64)
    return graphs, masks, probs


def _subset_tables(masks: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge union and probability mass of every subset, indexed by subset bitmask."""
    m = len(masks)
    unions = np.zeros(1 << m, dtype=np.int64)
    mass = np.zeros(1 << m)
    for b in range(m):
        lo, hi = 1 << b, 1 << (b + 1)
        unions[lo:hi] = unions[:lo] | masks[b]
        mass[lo:hi] = mass[:lo] + probs[b]
    return unions, mass


def _members(subset: int) -> tuple[int, ...]:
    return tuple(b for b in range(subset.bit_length()) if subset >> b & 1)


def is_disconnected_collection(model: NetworkModel, members: Sequence[int]) -> bool:
    """True iff the supergraph of the listed realizable graphs is disconnected."""
    graphs = model.realizable_graphs()
    union = set()
    for k in members:
        union.update(graphs[k].edges)
    return len(components(Graph(model.n, tuple(union)))) > 1


def _collection(model: NetworkModel, members, union_mask: int, p: float) -> Collection:
    return Collection(members, model.mask_graph(union_mask), float(p))


def _link_failure_spanning(model: LinkFailureModel, cap: int):
    """Disconnected spanning subgraphs E' of the base and their collection masses.

    The heaviest collection with supergraph E' is "all subgraphs of E'", whose
    mass is the probability that no link outside E' shows up.
    """
    m = model.base.m
    if m > cap:
        raise CapacityError(f"link-failure enumeration limited to {cap} links (have {m})", cap=cap)
    conn = model.connectivity()
    full = (1 << m) - 1
    subsets = np.arange(1 << m, dtype=np.int64)
    connected = conn.many(subsets)
    # log of prod over links outside E' of (1 - p_e), accumulated by subset DP on the complement
    with np.errstate(divide="ignore"):
        log_off = np.log1p(-model.p)
    absent = np.zeros(1 << m)
    for b in range(m):
        lo, hi = 1 << b, 1 << (b + 1)
        absent[lo:hi] = absent[:lo] + log_off[b]
    mass = np.exp(absent[full ^ subsets])
    return subsets, connected, mass, conn


def enumerate_maximal_collections(model: NetworkModel, cap: int = ENUMERATION_CAP) -> list[Collection]:
    """All maximal disconnected collections, in increasing subset order.

    The empty collection is never reported: when every realizable graph is
    connected the result is the empty list.
    """
    if isinstance(model, LinkFailureModel):
        subsets, connected, mass, conn = _link_failure_spanning(model, min(cap, LINK_FAILURE_CAP))
        m = model.base.m
        out = []
        for s in np.flatnonzero(~connected):
            s = int(s)
            if all(conn(s | 1 << b) for b in range(m) if not s >> b & 1):
                out.append(_collection(model, SubmaskIndices(s), s, mass[s]))
        return out

    graphs, masks, probs = _support_masks(model, cap)
    conn = model.connectivity()
    unions, mass = _subset_tables(masks, probs)
    disconnected = ~conn.many(unions)
    disconnected[0] = False
    maximal = disconnected.copy()
    subsets = np.arange(len(unions), dtype=np.int64)
    for b, gm in enumerate(masks):
        outside = (subsets >> b & 1) == 0
        check = maximal & outside
        idx = np.flatnonzero(check)
        if idx.size:
            maximal[idx] &= conn.many(unions[idx] | gm)
    return [
        _collection(model, _members(int(s)), int(unions[s]), mass[s])
        for s in np.flatnonzero(maximal)
    ]


def p_max_over_all_disconnected(model: NetworkModel, cap: int = ENUMERATION_CAP) -> float:
    """Largest mass over every disconnected collection (0 when there are none)."""
    if isinstance(model, LinkFailureModel):
        _, connected, mass, _ = _link_failure_spanning(model, min(cap, LINK_FAILURE_CAP))
        return float(mass[~connected].max()) if (~connected).any() else 0.0
    graphs, masks, probs = _support_masks(model, cap)
    conn = model.connectivity()
    unions, mass = _subset_tables(masks, probs)
    disconnected = ~conn.many(unions)
    disconnected[0] = False
    return float(mass[disconnected].max()) if disconnected.any() else 0.0


def p_max_brute(model: NetworkModel, cap: int = ENUMERATION_CAP) -> RateResult:
    """Rate from the heaviest maximal collection; ties go to the first in order."""
    maximal = enumerate_maximal_collections(model, cap)
    if not maximal:
        return RateResult(math.inf, None, None, "brute")
    best = maximal[int(np.argmax([c.p for c in maximal]))]
    return RateResult.from_p_max(best.p, best, "brute")
