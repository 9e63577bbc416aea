"""Transmission-power allocation over Rayleigh-fading links.

A link with power ``S`` and channel constant ``K`` is online with probability
``exp(-K/S)``. The consensus rate of the resulting link-failure network is the
min-cut under costs ``c(S) = -log(1 - exp(-K/S))``. Each cost is concave for
``S >= K/x*`` (see :func:`cost_concavity_knee`) but convex below it, so the
rate is concave, and the power-minimization problem convex, only on the box
where every link sits above its knee. We minimize the exact penalty
``sum(S) + mu * max(0, I* - I)`` with a constant-step projected subgradient
method either way; outside the box it is a local method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .disconnected import RateResult
from .errors import InvalidInputError
from .graph import Graph, is_connected
from .mincut import CutResult, stoer_wagner

MIN_POWER_FRACTION = 1e-6
FEASIBILITY_TOL = 1e-6
DEFAULT_MU = 500.0
DEFAULT_BETA = 1e-4
DEFAULT_ITERS = 200_000


def link_probability(S, K):
    """Probability ``exp(-K/S)`` that a fading link is online."""
    S, K = np.asarray(S, dtype=float), np.asarray(K, dtype=float)
    if (S <= 0).any():
        raise InvalidInputError("power must be positive")
    if (K <= 0).any():
        raise InvalidInputError("channel constant K must be positive")
    out = np.exp(-K / S)
    return float(out) if out.ndim == 0 else out


def edge_cost(S, K):
    """``-log(1 - exp(-K/S))``, written to stay accurate at both ends."""
    S, K = np.asarray(S, dtype=float), np.asarray(K, dtype=float)
    if (S <= 0).any():
        raise InvalidInputError("power must be positive")
    x = K / S
    # -log(1 - e^-x) = -log(-expm1(-x)); tiny x is the large-cost end
    out = -np.log(-np.expm1(-x))
    return float(out) if out.ndim == 0 else out


def edge_cost_derivative(S, K):
    """``dc/dS = (K/S^2) e^{-K/S} / (1 - e^{-K/S})``."""
    S, K = np.asarray(S, dtype=float), np.asarray(K, dtype=float)
    if (S <= 0).any():
        raise InvalidInputError("power must be positive")
    x = K / S
    out = (K / S**2) * np.exp(-x) / -np.expm1(-x)
    return float(out) if out.ndim == 0 else out


def edge_cost_second_derivative(S, K):
    """``d2c/dS2 = (K/S^3) f/(1-f) (x/(1-f) - 2)`` with ``x = K/S``, ``f = e^{-x}``."""
    S, K = np.asarray(S, dtype=float), np.asarray(K, dtype=float)
    if (S <= 0).any():
        raise InvalidInputError("power must be positive")
    x = K / S
    one_minus_f = -np.expm1(-x)
    out = (K / S**3) * (np.exp(-x) / one_minus_f) * (x / one_minus_f - 2.0)
    return float(out) if out.ndim == 0 else out


def cost_concavity_knee() -> float:
    """Root ``x*`` of ``x = 2(1 - e^{-x})`` (about 1.5936).

    The link cost is concave in ``S`` only where ``K/S <= x*``, i.e.
    ``S >= K/x*``; below that it is convex (it vanishes with every
    derivative as ``S -> 0``).
    """
    return brentq(lambda x: x - 2.0 * -math.expm1(-x), 0.5, 5.0, xtol=1e-15)


def single_link_optimum(K: float, I_star: float) -> float:
    """Smallest power whose link cost reaches ``I_star``: ``K / -log(1 - e^{-I*})``."""
    if I_star <= 0:
        raise InvalidInputError("I_star must be positive")
    return K / -math.log(-math.expm1(-I_star))


@dataclass(frozen=True)
class FadingNetwork:
    """Base graph with per-edge channel constants ``K`` and powers ``S`` (edge order)."""

    graph: Graph
    K: np.ndarray
    S: np.ndarray
    s_min: float = field(default=0.0)

    def __post_init__(self):
        K = np.array(self.K, dtype=float).reshape(-1)
        S = np.array(self.S, dtype=float).reshape(-1)
        if K.shape != (self.graph.m,) or S.shape != (self.graph.m,):
            raise InvalidInputError("K and S need one entry per edge")
        if (K <= 0).any() or not np.isfinite(K).all():
            raise InvalidInputError("K must be positive and finite")
        s_min = self.s_min or MIN_POWER_FRACTION * float(K.min())
        if (S < s_min * (1 - 1e-12)).any():
            raise InvalidInputError(f"powers must be at least S_min={s_min:g}")
        K.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "s_min", s_min)

    @classmethod
    def from_distances(cls, graph: Graph, S, scale: float = 6.25, alpha: float = 2.0,
                       distances=None) -> "FadingNetwork":
        """``K = scale * d^alpha`` with ``d`` taken from the graph attributes by default."""
        d = graph.attr_vector() if distances is None else np.asarray(distances, dtype=float)
        return cls(graph, scale * d**alpha, np.broadcast_to(np.asarray(S, dtype=float), (graph.m,)))

    def with_powers(self, S) -> "FadingNetwork":
        return replace(self, S=np.maximum(np.asarray(S, dtype=float), self.s_min))

    @property
    def total_power(self) -> float:
        return float(self.S.sum())

    def probabilities(self) -> np.ndarray:
        return link_probability(self.S, self.K)

    def costs(self) -> np.ndarray:
        return edge_cost(self.S, self.K)


def _min_cut(net: FadingNetwork) -> CutResult:
    return stoer_wagner(net.graph, net.costs())


def rate_of_allocation(net: FadingNetwork) -> RateResult:
    """Consensus rate of the fading network; the witness is the minimizing cut."""
    cut = _min_cut(net)
    if not is_connected(net.graph):
        return RateResult(0.0, 1.0, cut, "mincut")
    return RateResult(cut.value, math.exp(-cut.value), cut, "mincut")


def penalty_objective(net: FadingNetwork, mu: float, I_star: float) -> float:
    if mu <= 0:
        raise InvalidInputError("mu must be positive")
    return net.total_power + mu * max(0.0, I_star - rate_of_allocation(net).rate)


def _cut_mask(net: FadingNetwork, cut: CutResult) -> np.ndarray:
    crossing = set(cut.cut_edges)
    return np.array([e in crossing for e in net.graph.edges], dtype=bool)


def subgradient(net: FadingNetwork, mu: float, I_star: float, cut: CutResult | None = None) -> np.ndarray:
    """A subgradient of the penalty objective at ``net.S``."""
    cut = cut or _min_cut(net)
    g = np.ones(net.graph.m)
    if cut.value < I_star:
        mask = _cut_mask(net, cut)
        g[mask] -= mu * edge_cost_derivative(net.S[mask], net.K[mask])
    return g


def subgradient_step(net: FadingNetwork, mu: float, I_star: float, beta: float) -> FadingNetwork:
    if beta <= 0:
        raise InvalidInputError("beta must be positive")
    if mu <= 0:
        raise InvalidInputError("mu must be positive")
    g = subgradient(net, mu, I_star)
    return net.with_powers(net.S - beta * g)


@dataclass
class AllocationResult:
    network: FadingNetwork
    total_power: float
    rate: float
    violation: float
    iterations: int
    feasible: bool
    objective_trace: np.ndarray
    best_trace: np.ndarray

    @property
    def powers(self) -> np.ndarray:
        return self.network.S

    def to_json(self) -> dict:
        net = self.network
        P, c = net.probabilities(), net.costs()
        return {
            "edges": [
                {"i": i, "j": j, "S": float(s), "K": float(k), "P_ij": float(p), "c_ij": float(cc)}
                for (i, j), s, k, p, cc in zip(net.graph.edges, net.S, net.K, P, c)
            ],
            "total_power": self.total_power,
            "rate": self.rate,
            "violation": self.violation,
            "iterations": self.iterations,
            "feasible": self.feasible,
        }


def optimize_allocation(net0: FadingNetwork, mu: float = DEFAULT_MU, I_star: float = 0.0,
                        beta: float = DEFAULT_BETA, iters: int = DEFAULT_ITERS,
                        tol: float = FEASIBILITY_TOL) -> AllocationResult:
    """Projected subgradient descent on the exact penalty, keeping the best feasible iterate.

    An iterate counts as feasible when ``I >= I_star - tol``. Without any
    feasible iterate the least-violating one is returned.
    """
    if iters < 1:
        raise InvalidInputError("iters must be at least 1")
    if beta <= 0 or mu <= 0:
        raise InvalidInputError("beta and mu must be positive")
    g = net0.graph
    costs_of = lambda S: edge_cost(S, net0.K)
    S = net0.S.copy()
    K = net0.K
    edge_pos = {e: k for k, e in enumerate(g.edges)}
    objective = np.empty(iters + 1)
    best_trace = np.full(iters + 1, np.inf)
    best_S, best_total = None, math.inf
    least_S, least_violation = S.copy(), math.inf

    for t in range(iters + 1):
        cut = stoer_wagner(g, costs_of(S))
        rate = cut.value
        total = float(S.sum())
        violation = max(0.0, I_star - rate)
        objective[t] = total + mu * violation
        if rate >= I_star - tol and total < best_total:
            best_S, best_total = S.copy(), total
        elif best_S is None and violation < least_violation:
            least_S, least_violation = S.copy(), violation
        best_trace[t] = best_total
        if t == iters:
            break
        step = np.full(g.m, beta)
        if rate < I_star:
            idx = [edge_pos[e] for e in cut.cut_edges]
            step[idx] -= beta * mu * edge_cost_derivative(S[idx], K[idx])
        S = np.maximum(net0.s_min, S - step)

    chosen = best_S if best_S is not None else least_S
    net = net0.with_powers(chosen)
    rate = rate_of_allocation(net).rate
    return AllocationResult(
        network=net,
        total_power=net.total_power,
        rate=rate,
        violation=max(0.0, I_star - rate),
        iterations=iters,
        feasible=best_S is not None,
        objective_trace=objective,
        best_trace=best_trace,
    )


def uniform_power_for_rate(graph: Graph, K, I_star: float) -> float:
    """Common power ``S`` on every link at which the consensus rate equals ``I_star``."""
    if I_star <= 0:
        raise InvalidInputError("I_star must be positive")
    if not is_connected(graph):
        raise InvalidInputError("a disconnected network has rate 0 at any power")
    K = np.asarray(K, dtype=float)

    def gap(log_s):
        return stoer_wagner(graph, edge_cost(math.exp(log_s), K)).value - I_star

    # rate grows without bound as S grows and vanishes as S -> 0
    lo, hi = math.log(K.min()) - 5.0, math.log(K.max()) + 5.0
    while gap(lo) > 0:
        lo -= 5.0
    while gap(hi) < 0:
        hi += 5.0
    return math.exp(brentq(gap, lo, hi, xtol=1e-14, rtol=1e-13))


def initial_allocation(graph: Graph, K, I_star: float, jitter: float = 0.0,
                       rng: np.random.Generator | None = None) -> FadingNetwork:
    """Uniform feasible start, optionally scaled per edge by ``1 + jitter * U(0, 1)``."""
    S0 = uniform_power_for_rate(graph, K, I_star)
    S = np.full(graph.m, S0)
    if jitter:
        if rng is None:
            raise InvalidInputError("jitter needs a random generator")
        S = S * (1.0 + jitter * rng.random(graph.m))
    return FadingNetwork(graph, np.asarray(K, dtype=float), S)
