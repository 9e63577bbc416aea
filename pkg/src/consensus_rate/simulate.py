"""Monte Carlo and exact computations for products of random averaging matrices.

``Phi(k, 0) = W_k ... W_1``. Its distance from exact averaging is the spectral
norm of ``Phi - J`` with ``J = 11^T / n``. For ``epsilon = 1`` the event
``||Phi - J|| >= 1`` is exactly "the union of the sampled graphs is
disconnected", so tails at ``epsilon = 1`` can be simulated on edge bitmasks
alone (the graph-only fast path) and computed exactly by a DP over unions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .disconnected import enumerate_maximal_collections
from .errors import CapacityError, InsufficientDataError, InvalidInputError
from .graph import Edge, Graph, edges_connected, fiedler_value, path_fiedler_constant
from .models import NetworkModel, StochasticMatrix

NORM_TOL = 1e-10
ENTRY_RTOL = 1e-9
Z95 = 1.959963984540054
DP_STATE_CAP = 1 << 20


# -- products -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProductState:
    """``Phi(k, 0)`` plus the edge-union bookkeeping behind the improvement times.

    ``gamma_since_last`` is the union of graphs seen since the last
    improvement; an improvement is recorded at step ``k`` when that union
    first becomes connected, after which it restarts from empty.
    """

    phi: np.ndarray
    k: int = 0
    gamma_since_last: frozenset[Edge] = frozenset()
    gamma_total: frozenset[Edge] = frozenset()
    improvement_times: tuple[int, ...] = ()

    @classmethod
    def initial(cls, n: int) -> "ProductState":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def m_k(self) -> int:
        return len(self.improvement_times)


def product_step(state: ProductState, W: StochasticMatrix | np.ndarray) -> ProductState:
    """Left-multiply by ``W`` and update the union and improvement bookkeeping."""
    if not isinstance(W, StochasticMatrix):
        W = StochasticMatrix(W, delta=np.asarray(W)[np.asarray(W) > 0].min())
    if W.n != state.n:
        raise InvalidInputError(f"matrix is {W.n}x{W.n}, product is {state.n}x{state.n}")
    edges = W.graph().edges
    k = state.k + 1
    since = state.gamma_since_last.union(edges)
    times = state.improvement_times
    if edges_connected(state.n, since):
        times = times + (k,)
        since = frozenset()
    return ProductState(
        phi=W.values @ state.phi,
        k=k,
        gamma_since_last=since,
        gamma_total=state.gamma_total.union(edges),
        improvement_times=times,
    )


def error_norm(state: ProductState | np.ndarray) -> float:
    """``||Phi - J||_2`` for a doubly stochastic ``Phi``.

    The top eigenpair of ``Phi^T Phi`` is ``(1, 1/sqrt(n))``; deflating it
    leaves the square of the wanted norm as the largest eigenvalue.
    """
    phi = state.phi if isinstance(state, ProductState) else np.asarray(state)
    n = phi.shape[0]
    A = phi.T @ phi - 1.0 / n
    lam = np.linalg.eigvalsh(A)[-1]
    return math.sqrt(max(lam, 0.0))


def error_norms(phis: np.ndarray) -> np.ndarray:
    """Batched :func:`error_norm` over an array of shape ``(T, n, n)``."""
    n = phis.shape[-1]
    A = np.matmul(np.swapaxes(phis, -1, -2), phis) - 1.0 / n
    lam = np.linalg.eigvalsh(A)[..., -1]
    return np.sqrt(np.maximum(lam, 0.0))


# -- tail estimation -------------------------------------------------------------------------


def wilson_interval(hits: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise InvalidInputError("trials must be positive")
    p = hits / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # clamp so the interval always contains the point estimate despite rounding
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass(frozen=True)
class TailEstimate:
    k: int
    epsilon: float
    trials: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, k: int, epsilon: float, trials: int, hits: int) -> "TailEstimate":
        lo, hi = wilson_interval(hits, trials)
        return cls(k, epsilon, trials, hits, hits / trials, lo, hi)


def _chunk_size(n: int) -> int:
    return max(1024, (1 << 22) // (n * n))


def _graph_chunk(model: NetworkModel, k: int, size: int, gen: np.random.Generator) -> int:
    union = np.zeros(size, dtype=np.int64)
    for _ in range(k):
        union |= model.sample_masks(gen, size)
    return int((~model.connectivity().many(union)).sum())


def _matrix_chunk(model: NetworkModel, k: int, size: int, gen: np.random.Generator, epsilon: float) -> int:
    phi = np.broadcast_to(np.eye(model.n), (size, model.n, model.n)).copy()
    for _ in range(k):
        W = model.matrices_for_masks(model.sample_masks(gen, size), gen)
        phi = np.matmul(W, phi)
    return int((error_norms(phi) >= epsilon - NORM_TOL).sum())


def estimate_tail(
    model: NetworkModel,
    k: int,
    epsilon: float,
    trials: int,
    seed: int,
    fast_graph_path: bool | None = None,
    threads: int = 1,
) -> TailEstimate:
    """Fraction of independent trials with ``||Phi(k,0) - J|| >= epsilon``.

    Trials are split into chunks and chunk ``c`` draws from the stream keyed
    by ``(seed, k, c)``, so results do not depend on ``threads``.
    ``fast_graph_path`` defaults to on for ``epsilon == 1``; it is only
    exact there and is refused otherwise.
    """
    if not 0 < epsilon <= 1:
        raise InvalidInputError("epsilon must lie in (0, 1]; the norm never exceeds 1")
    if trials < 1 or k < 0:
        raise InvalidInputError("need trials >= 1 and k >= 0")
    if fast_graph_path is None:
        fast_graph_path = epsilon == 1
    if fast_graph_path and epsilon != 1:
        raise InvalidInputError("the graph-only path is exact only for epsilon = 1")

    sizes = rngmod.chunk_sizes(trials, _chunk_size(model.n))

    def run(c: int) -> int:
        gen = rngmod.stream(seed, k, c)
        if fast_graph_path:
            return _graph_chunk(model, k, sizes[c], gen)
        return _matrix_chunk(model, k, sizes[c], gen, epsilon)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = sum(pool.map(run, range(len(sizes))))
    else:
        hits = sum(run(c) for c in range(len(sizes)))
    return TailEstimate.from_counts(k, epsilon, trials, hits)


@dataclass(frozen=True)
class EmpiricalRate:
    """Weighted least-squares fit of ``log p_hat`` against ``k``.

    ``rate`` is minus the slope; ``stderr`` comes from the inverse-variance
    weights alone. ``chi2_dof`` is the reduced chi-square of the fit, a
    goodness-of-fit diagnostic (values far above 1 flag curvature, e.g. from
    sub-leading disconnection events at small ``k``).
    """

    rate: float
    stderr: float
    slope: float
    intercept: float
    chi2_dof: float
    estimates: list[TailEstimate]
    used_k: list[int]
    refused_k: list[int] = field(default_factory=list)


def fit_log_linear(ks, p_hat, trials) -> tuple[float, float, float, float]:
    """Slope, intercept, slope stderr and reduced chi-square of the WLS fit."""
    ks = np.asarray(ks, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    trials = np.broadcast_to(np.asarray(trials, dtype=float), ks.shape)
    # delta method: Var(log p_hat) ~ (1 - p) / (N p)
    w = trials * p_hat / (1 - p_hat)
    X = np.column_stack([np.ones_like(ks), ks])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    intercept, slope = cov @ (XtW @ np.log(p_hat))
    resid = np.log(p_hat) - (intercept + slope * ks)
    dof = max(len(ks) - 2, 1)
    return float(slope), float(intercept), math.sqrt(cov[1, 1]), float((w * resid**2).sum() / dof)


def estimate_rate_empirical(
    model: NetworkModel,
    k_list,
    epsilon: float,
    trials: int,
    seed: int,
    fast_graph_path: bool | None = None,
    threads: int = 1,
    p_max: float | None = None,
) -> EmpiricalRate:
    """Empirical rate from tail estimates at several horizons.

    When ``p_max`` is known, horizons whose predicted tail ``p_max**k`` is
    below ``10 / trials`` are refused rather than simulated. Points with no
    hits (or only hits) cannot enter a log fit and are dropped.
    """
    k_list = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise InvalidInputError("k_list must be strictly increasing")
    refused = []
    if p_max is not None:
        refused = [k for k in k_list if p_max**k < 10.0 / trials]
    estimates = [
        estimate_tail(model, k, epsilon, trials, seed, fast_graph_path, threads)
        for k in k_list
        if k not in refused
    ]
    usable = [e for e in estimates if 0 < e.hits < e.trials]
    if len(usable) < 3:
        raise InsufficientDataError(
            f"need at least 3 horizons with 0 < hits < trials; usable k = {[e.k for e in usable]}",
            usable_k=[e.k for e in usable],
        )
    slope, intercept, se, chi2 = fit_log_linear(
        [e.k for e in usable], [e.p_hat for e in usable], [e.trials for e in usable]
    )
    return EmpiricalRate(-slope, se, slope, intercept, chi2, estimates, [e.k for e in usable], refused)


# -- exact disconnection probability ------------------------------------------------------------


def exact_disconnect_series(model: NetworkModel, k_max: int, cap: int = DP_STATE_CAP) -> np.ndarray:
    """``P(union of k sampled graphs is disconnected)`` for ``k = 0..k_max``.

    DP over the edge union accumulated so far. Connected unions stay
    connected, so their mass is dropped and only disconnected states are kept.
    """
    graphs, probs = model.support()
    keep = probs > 0
    masks = np.array([model.mask_of(g) for g, k in zip(graphs, keep) if k], dtype=np.int64)
    probs = probs[keep]
    if len(masks) > cap:
        raise CapacityError(f"support of {len(masks)} graphs exceeds the DP cap {cap}", cap=cap)
    conn = model.connectivity()
    states = np.zeros(1, dtype=np.int64)
    mass = np.ones(1)
    out = [1.0 if model.n > 1 else 0.0]
    for _ in range(k_max):
        if states.size * masks.size > 64 * cap:
            raise CapacityError(f"DP transition table too large ({states.size} x {masks.size})", cap=cap)
        nxt = (states[:, None] | masks[None, :]).ravel()
        w = (mass[:, None] * probs[None, :]).ravel()
        uniq, inv = np.unique(nxt, return_inverse=True)
        agg = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
        alive = ~conn.many(uniq)
        states, mass = uniq[alive], agg[alive]
        if states.size > cap:
            raise CapacityError(f"DP reached {states.size} union states (cap {cap})", cap=cap)
        out.append(float(mass.sum()))
    return np.array(out)


def exact_disconnect_probability(model: NetworkModel, k: int, cap: int = DP_STATE_CAP) -> float:
    """Exact ``P(Gamma(k, 0) is disconnected)``."""
    return float(exact_disconnect_series(model, k, cap)[k])


def disconnect_bounds(model: NetworkModel, k: int) -> tuple[float, float, float]:
    """``(p_max^k, exact value, |maximal collections| * p_max^k)``."""
    maximal = enumerate_maximal_collections(model)
    if not maximal:
        return 0.0, exact_disconnect_probability(model, k), 0.0
    p_max = max(c.p for c in maximal)
    return p_max**k, exact_disconnect_probability(model, k), len(maximal) * p_max**k


# -- structural invariants -------------------------------------------------------------------


def check_structural_invariants(state: ProductState, delta: float, s_minus_t: int | None = None) -> list[str]:
    """Pointwise bounds every product of valid matrices must satisfy.

    Returns human-readable violation messages (empty when all hold):

    * positive off-diagonal entries of Phi and its diagonal are >= delta^span
    * where Phi_ij > 0 (i != j), (Phi^T Phi)_ij >= delta^(2 span); likewise
      for every positive off-diagonal entry of Phi^T Phi
    * ||Phi - J|| <= sqrt(1 - delta^(2 span) * fiedler(L(Gamma)))
    * ||Phi - J|| < 1 exactly when Gamma is connected
    * with M improvements, ||Phi - J|| <= (1 - c delta^(2 span / M))^(M/2),
      c the path-graph Fiedler value
    """
    span = state.k if s_minus_t is None else int(s_minus_t)
    if span < 1:
        return []
    phi, n = state.phi, state.n
    out = []
    floor = delta**span
    off = ~np.eye(n, dtype=bool)
    pos_off = (phi > 0) & off
    low = phi[pos_off]
    if low.size and low.min() < floor * (1 - ENTRY_RTOL):
        out.append(f"k={state.k}: positive entry {low.min():.3e} < delta^{span} = {floor:.3e}")
    if np.diag(phi).min() < floor * (1 - ENTRY_RTOL):
        out.append(f"k={state.k}: diagonal entry {np.diag(phi).min():.3e} < delta^{span}")
    gram = phi.T @ phi
    floor2 = floor * floor
    for label, sel in (("where Phi_ij > 0", pos_off), ("positive", (gram > 0) & off)):
        vals = gram[sel]
        if vals.size and vals.min() < floor2 * (1 - ENTRY_RTOL):
            out.append(f"k={state.k}: Gram entry ({label}) {vals.min():.3e} < delta^(2*{span})")

    norm = error_norm(phi)
    gamma = Graph(n, tuple(state.gamma_total))
    lam = fiedler_value(gamma) if n > 1 else 0.0
    bound = math.sqrt(max(0.0, 1 - floor2 * lam))
    if norm > bound + NORM_TOL:
        out.append(f"k={state.k}: norm {norm:.12f} exceeds Fiedler bound {bound:.12f}")
    connected = edges_connected(n, gamma.edges)
    if connected != (norm < 1 - NORM_TOL):
        out.append(f"k={state.k}: norm {norm:.12f} but union connected={connected}")
    if not connected and abs(norm - 1) > NORM_TOL:
        out.append(f"k={state.k}: disconnected union but norm {norm:.12f} != 1")
    m = state.m_k
    if m >= 1 and n > 1:
        c = path_fiedler_constant(n)
        bound_m = (1 - c * delta ** (2 * span / m)) ** (m / 2)
        if norm > bound_m + NORM_TOL:
            out.append(f"k={state.k}: norm {norm:.12f} exceeds improvement-count bound {bound_m:.12f} (M={m})")
    return out


@dataclass
class InvariantReport:
    trajectories: int
    steps: int
    n_violations: int
    messages: list[str]

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def run_invariant_harness(
    model: NetworkModel, trajectories: int, k_max: int, seed: int, max_messages: int = 20
) -> InvariantReport:
    """Sample trajectories and check every prefix product against the bounds."""
    messages: list[str] = []
    count = steps = 0
    cache: dict[Graph, StochasticMatrix] = {}
    deterministic = getattr(model, "alpha", 0.5) is not None
    for t in range(trajectories):
        gen = rngmod.stream(seed, 0xC4EC, t)
        state = ProductState.initial(model.n)
        for _ in range(k_max):
            g = model.sample_graph(gen)
            if deterministic:
                W = cache.get(g)
                if W is None:
                    W = cache[g] = model.sample_matrix(g, gen)
            else:
                W = model.sample_matrix(g, gen)
            state = product_step(state, W)
            steps += 1
            found = check_structural_invariants(state, model.delta)
            count += len(found)
            messages.extend(f"trajectory {t}: {v}" for v in found[: max(0, max_messages - len(messages))])
    return InvariantReport(trajectories, steps, count, messages)


def uniform_connected_bound(k: int, delta: float, n: int) -> float:
    """``(1 - c delta^2)^(k/2)``: norm bound when every realization is connected."""
    return (1 - path_fiedler_constant(n) * delta**2) ** (k / 2)


def k_one(epsilon: float, delta: float, n: int) -> int:
    """First ``k`` at which :func:`uniform_connected_bound` drops below ``epsilon``."""
    q = 1 - path_fiedler_constant(n) * delta**2
    k = max(0, math.ceil(2 * math.log(epsilon) / math.log(q)))
    while uniform_connected_bound(k, delta, n) >= epsilon:
        k += 1
    return k


def batched_invariant_violations(
    phis: np.ndarray,
    unions: np.ndarray,
    m_k: np.ndarray,
    span: int,
    delta: float,
    model: NetworkModel,
    fiedler_memo: dict[int, float] | None = None,
) -> dict[str, np.ndarray]:
    """Vectorized :func:`check_structural_invariants` over a batch of products.

    ``unions`` are edge bitmasks of each product's supergraph (over
    ``model.base.edges``) and ``m_k`` the improvement counts. Returns one
    boolean violation array per check.
    """
    T, n, _ = phis.shape
    floor = delta**span
    floor2 = floor * floor
    off = ~np.eye(n, dtype=bool)
    pos_off = (phis > 0) & off
    gram = np.matmul(np.swapaxes(phis, 1, 2), phis)
    lim = 1 - ENTRY_RTOL
    bad = {
        "entry": np.where(pos_off, phis, np.inf).min(axis=(1, 2)) < floor * lim,
        "diagonal": np.diagonal(phis, axis1=1, axis2=2).min(axis=1) < floor * lim,
        "gram_support": np.where(pos_off, gram, np.inf).min(axis=(1, 2)) < floor2 * lim,
        "gram_positive": np.where((gram > 0) & off, gram, np.inf).min(axis=(1, 2)) < floor2 * lim,
    }
    norms = np.sqrt(np.maximum(np.linalg.eigvalsh(gram - 1.0 / n)[:, -1], 0.0))
    memo = {} if fiedler_memo is None else fiedler_memo
    uniq, inverse = np.unique(unions, return_inverse=True)
    for u in uniq:
        u = int(u)
        if u not in memo:
            memo[u] = fiedler_value(model.mask_graph(u))
    lam = np.array([memo[int(u)] for u in uniq])[inverse.reshape(-1)]
    bad["fiedler"] = norms > np.sqrt(np.maximum(0.0, 1 - floor2 * lam)) + NORM_TOL
    connected = model.connectivity().many(unions)
    bad["equivalence"] = (connected != (norms < 1 - NORM_TOL)) | (~connected & (np.abs(norms - 1) > NORM_TOL))
    m = np.maximum(m_k, 1).astype(float)
    c = path_fiedler_constant(n)
    bound_m = (1 - c * delta ** (2 * span / m)) ** (m / 2)
    bad["improvements"] = (m_k >= 1) & (norms > bound_m + NORM_TOL)
    return bad


def run_invariant_harness_batched(
    model: NetworkModel, trajectories: int, k_max: int, seed: int, max_messages: int = 20
) -> InvariantReport:
    """Same checks as :func:`run_invariant_harness`, all trajectories advanced together."""
    n = model.n
    gen = rngmod.stream(seed, 0xBA7C)
    phis = np.broadcast_to(np.eye(n), (trajectories, n, n)).copy()
    total = np.zeros(trajectories, dtype=np.int64)
    since = np.zeros(trajectories, dtype=np.int64)
    m_k = np.zeros(trajectories, dtype=np.int64)
    conn = model.connectivity()
    memo: dict[int, float] = {}
    count = 0
    messages: list[str] = []
    for k in range(1, k_max + 1):
        masks = model.sample_masks(gen, trajectories)
        phis = np.matmul(model.matrices_for_masks(masks, gen), phis)
        total |= masks
        since |= masks
        improved = conn.many(since)
        m_k += improved
        since[improved] = 0
        bad = batched_invariant_violations(phis, total, m_k, k, model.delta, model, memo)
        for name, flags in bad.items():
            hits = np.flatnonzero(flags)
            count += hits.size
            for t in hits[: max(0, max_messages - len(messages))]:
                messages.append(f"trajectory {t}, k={k}: {name} check failed")
    return InvariantReport(trajectories, trajectories * k_max, count, messages)
