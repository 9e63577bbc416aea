"""Rate of consensus for gossip and link-failure models via a single min-cut.

Gossip: weight each link by its activation probability; the heaviest
disconnected collection carries ``1 - mincut``. Link failure: weight each
link by ``-log(1 - p)``; the rate is the min-cut value itself. All rates are
in nats.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np

from .disconnected import RateResult
from .errors import InvalidInputError
from .graph import Graph, circulant_regular_graph, is_connected
from .mincut import stoer_wagner


def _probabilities(g: Graph, p) -> np.ndarray:
    if p is None:
        return g.attr_vector()
    p = np.broadcast_to(np.asarray(p, dtype=float), (g.m,)).copy()
    return p


def gossip_rate(g: Graph, p: Sequence[float] | np.ndarray | None = None) -> RateResult:
    """``I = -log(1 - mincut(V, E, P))`` for gossip with link probabilities ``p``."""
    p = _probabilities(g, p)
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"gossip probabilities must be nonnegative and sum to 1 (sum={p.sum()!r})")
    cut = stoer_wagner(g, p)
    if not is_connected(g):
        return RateResult(0.0, 1.0, cut, "mincut")
    p_max = 1.0 - cut.value
    # a cut holding all the mass up to rounding means every realization connects
    if p_max <= 1e-12:
        return RateResult(math.inf, 0.0, cut, "mincut")
    return RateResult.from_p_max(p_max, cut, "mincut")


def link_failure_rate(g: Graph, p: Sequence[float] | np.ndarray | None = None) -> RateResult:
    """``I = mincut(V, E, -log(1 - P))`` for independent link failures."""
    p = _probabilities(g, p)
    if ((p < 0) | (p > 1)).any():
        raise InvalidInputError("link probabilities must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        costs = -np.log1p(-p)
    cut = stoer_wagner(g, costs)
    rate = cut.value
    if math.isinf(rate):
        return RateResult(math.inf, 0.0, cut, "mincut")
    return RateResult(rate, math.exp(-rate), cut, "mincut")


def _check_regular(n: int, d: int):
    if not (2 <= d <= n - 1) or (n * d) % 2:
        raise InvalidInputError(f"need 2 <= d <= n-1 and n*d even (n={n}, d={d})")


def regular_gossip_rate(n: int, d: int) -> RateResult:
    """Uniform gossip on a connected d-regular graph: ``I = -log(1 - 2/n)`` for any d."""
    _check_regular(n, d)
    return RateResult.from_p_max(1.0 - 2.0 / n, None, "closed-form")


def regular_link_failure_rate(n: int, d: int, p: float) -> RateResult:
    """Uniform link failures on a connected d-regular graph: ``I = -d log(1 - p)``."""
    _check_regular(n, d)
    if not 0 <= p <= 1:
        raise InvalidInputError("p must lie in [0, 1]")
    if p == 1:
        warnings.warn("links never fail: every realization is the full connected graph", stacklevel=2)
        return RateResult(math.inf, 0.0, None, "closed-form")
    rate = -d * math.log1p(-p)
    return RateResult(rate, math.exp(-rate), None, "closed-form")


def regular_graph(n: int, d: int) -> Graph:
    """Connected d-regular graph used to cross-check the closed forms."""
    _check_regular(n, d)
    return circulant_regular_graph(n, d)
