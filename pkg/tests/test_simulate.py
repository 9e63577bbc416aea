import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from consensus_rate.disconnected import enumerate_maximal_collections
from consensus_rate.errors import CapacityError, InsufficientDataError, InvalidInputError
from consensus_rate.graph import Graph, complete_graph, cycle_graph, path_graph, random_connected_graph
from consensus_rate.models import ExplicitModel, GossipModel, LinkFailureModel, StochasticMatrix, gossip_matrix, toy_model
from consensus_rate.rng import stream
from consensus_rate.simulate import (
    ProductState,
    TailEstimate,
    batched_invariant_violations,
    check_structural_invariants,
    disconnect_bounds,
    error_norm,
    error_norms,
    estimate_rate_empirical,
    estimate_tail,
    exact_disconnect_probability,
    exact_disconnect_series,
    fit_log_linear,
    k_one,
    product_step,
    run_invariant_harness,
    run_invariant_harness_batched,
    uniform_connected_bound,
    wilson_interval,
)

from oracles import connected


def test_product_step_examples():
    W = gossip_matrix(2, (0, 1), 0.5)
    s = product_step(ProductState.initial(2), W)
    assert np.allclose(s.phi, 0.5) and s.improvement_times == (1,) and s.m_k == 1
    same = product_step(ProductState.initial(3), np.eye(3))
    assert np.array_equal(same.phi, np.eye(3)) and same.m_k == 0
    with pytest.raises(InvalidInputError):
        product_step(ProductState.initial(3), np.eye(2))


def test_product_stays_doubly_stochastic():
    m = GossipModel(complete_graph(4))
    gen = stream(1)
    s = ProductState.initial(4)
    for _ in range(5):
        s = product_step(s, m.sample_matrix(m.sample_graph(gen), gen))
    assert np.allclose(s.phi.sum(axis=0), 1, atol=1e-12)
    assert np.allclose(s.phi.sum(axis=1), 1, atol=1e-12)


def test_improvement_times_reset():
    # path 0-1-2: union connects at step 2, restarts, connects again at step 4
    a = StochasticMatrix(gossip_matrix(3, (0, 1), 0.5), 0.5)
    b = StochasticMatrix(gossip_matrix(3, (1, 2), 0.5), 0.5)
    s = ProductState.initial(3)
    for W in (a, b, b, a, a):
        s = product_step(s, W)
    assert s.improvement_times == (2, 4)


def test_error_norm_examples():
    assert error_norm(np.full((3, 3), 1 / 3)) == pytest.approx(0, abs=1e-7)
    assert error_norm(np.eye(2)) == pytest.approx(1)
    assert error_norm(gossip_matrix(2, (0, 1), 0.5)) == pytest.approx(0, abs=1e-7)


@given(st.integers(0, 10**6), st.integers(1, 25))
def test_error_norm_bounded_and_matches_svd(seed, k):
    gen = stream(seed)
    m = GossipModel(random_connected_graph(5, gen, 0.3), alpha=None)
    phi = np.eye(5)
    for _ in range(k):
        phi = m.sample_matrix(m.sample_graph(gen), gen).values @ phi
    v = error_norm(phi)
    assert v <= 1 + 1e-9
    assert v == pytest.approx(np.linalg.norm(phi - 1 / 5, 2), abs=1e-7)
    assert error_norms(phi[None])[0] == pytest.approx(v, abs=1e-12)


def test_exact_dp_toy():
    toy = toy_model()
    series = exact_disconnect_series(toy, 30)
    assert series[1] == pytest.approx(1)
    assert series[2] == pytest.approx(5 / 9)
    k = np.arange(31)
    assert np.allclose(series[1:], (1 / 3) ** k[1:] + (2 / 3) ** k[1:], rtol=1e-12)
    assert series[30] / series[29] == pytest.approx(2 / 3, abs=1e-6)
    assert exact_disconnect_probability(toy, 3) == pytest.approx(series[3])


def test_exact_dp_against_sequence_enumeration():
    m = ExplicitModel(4, [
        (Graph(4, ((0, 1),)), 0.2, None),
        (Graph(4, ((1, 2), (0, 1))), 0.3, None),
        (Graph(4, ((2, 3),)), 0.4, None),
        (Graph(4, ((0, 3), (1, 2))), 0.1, None),
    ])
    series = exact_disconnect_series(m, 5)
    for k in range(1, 6):
        total = 0.0
        for seq in itertools.product(range(4), repeat=k):
            edges = set().union(*(m.graphs[i].edges for i in seq))
            if not connected(4, edges):
                total += math.prod(m.p[i] for i in seq)
        assert series[k] == pytest.approx(total, abs=1e-14)


def test_sandwich_k4():
    m = GossipModel(complete_graph(4))
    n_max = len(enumerate_maximal_collections(m))
    for k in range(1, 21):
        lo, val, hi = disconnect_bounds(m, k)
        assert lo <= val * (1 + 1e-12) and val <= hi * (1 + 1e-12)
        assert 1 - 1e-12 <= val / 0.5**k <= n_max + 1e-12


def test_dp_capacity():
    with pytest.raises(CapacityError):
        exact_disconnect_series(LinkFailureModel(complete_graph(6), 0.5), 3, cap=1000)


def test_wilson_examples():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    with pytest.raises(InvalidInputError):
        wilson_interval(1, 0)


@given(st.integers(1, 10**6), st.floats(0, 1))
def test_wilson_contains_point(trials, frac):
    hits = int(frac * trials)
    t = TailEstimate.from_counts(1, 1.0, trials, hits)
    assert 0 <= t.ci_low <= t.p_hat <= t.ci_high <= 1


def test_tail_toy_matches_dp():
    toy = toy_model()
    exact = exact_disconnect_series(toy, 6)[6]
    est = estimate_tail(toy, 6, 1.0, 200_000, seed=4)
    assert est.ci_low <= exact <= est.ci_high


def test_tail_trivial_cases():
    m = GossipModel(path_graph(2), p=[1.0])
    assert estimate_tail(m, 1, 0.5, 1000, seed=0, fast_graph_path=False).hits == 0
    with pytest.raises(InvalidInputError):
        estimate_tail(m, 1, 1.5, 10, seed=0)
    with pytest.raises(InvalidInputError):
        estimate_tail(m, 1, 0.5, 10, seed=0, fast_graph_path=True)


def test_tail_reproducible_and_thread_independent():
    m = GossipModel(complete_graph(4))
    a = estimate_tail(m, 5, 0.9, 5000, seed=7)
    b = estimate_tail(m, 5, 0.9, 5000, seed=7, threads=3)
    c = estimate_tail(m, 5, 0.9, 5000, seed=8)
    assert a == b
    assert a.hits != c.hits or a.hits == 0


@pytest.mark.parametrize("model", [toy_model(), GossipModel(complete_graph(4)), LinkFailureModel(cycle_graph(5), 0.4)],
                         ids=["toy", "k4", "ring"])
def test_fast_path_agrees_with_matrices(model):
    for k in (2, 5):
        fast = estimate_tail(model, k, 1.0, 40_000, seed=1, fast_graph_path=True)
        slow = estimate_tail(model, k, 1.0, 40_000, seed=2, fast_graph_path=False)
        # two independent estimates: difference within 4 joint standard errors
        p = (fast.hits + slow.hits) / 80_000
        se = math.sqrt(2 * p * (1 - p) / 40_000) + 1e-12
        assert abs(fast.p_hat - slow.p_hat) < 4 * se


def test_fast_path_event_is_exact():
    # on the same sampled sequence, norm >= 1 exactly when the union is disconnected
    m = LinkFailureModel(cycle_graph(5), 0.3)
    gen = stream(3)
    for _ in range(300):
        s = ProductState.initial(5)
        for _ in range(int(gen.integers(1, 6))):
            s = product_step(s, m.sample_matrix(m.sample_graph(gen), gen))
        assert (error_norm(s) >= 1 - 1e-10) == (not connected(5, s.gamma_total))


def test_fit_recovers_exact_slope():
    ks = np.arange(3, 15)
    p = 0.8 * 0.6**ks
    slope, intercept, se, chi2 = fit_log_linear(ks, p, 10**6)
    assert slope == pytest.approx(math.log(0.6), abs=1e-12)
    assert intercept == pytest.approx(math.log(0.8), abs=1e-12)
    assert chi2 == pytest.approx(0, abs=1e-18)
    assert se > 0


def test_empirical_rate_toy_close():
    r = estimate_rate_empirical(toy_model(), list(range(4, 13)), 1.0, 100_000, seed=3, p_max=2 / 3)
    assert r.rate == pytest.approx(math.log(1.5), rel=0.05)
    assert r.used_k == list(range(4, 13))


def test_empirical_rate_refuses_rare_k():
    r = estimate_rate_empirical(toy_model(), [2, 4, 6, 30, 40], 1.0, 10_000, seed=0, p_max=2 / 3)
    assert r.refused_k == [30, 40]


def test_empirical_rate_insufficient_data():
    m = ExplicitModel(3, [(complete_graph(3), 1.0, None)])
    with pytest.raises(InsufficientDataError) as exc:
        estimate_rate_empirical(m, [1, 2, 3, 4], 1.0, 1000, seed=0)
    assert exc.value.usable_k == []
    with pytest.raises(InvalidInputError):
        estimate_rate_empirical(m, [3, 2, 1], 1.0, 10, seed=0)


def test_invariants_block_diagonal():
    W = np.zeros((4, 4))
    W[:2, :2] = 0.5
    W[2:, 2:] = 0.5
    s = ProductState.initial(4)
    for _ in range(3):
        s = product_step(s, W)
    assert error_norm(s) == pytest.approx(1)
    assert check_structural_invariants(s, 0.5) == []


def test_invariants_single_connected_step():
    W = StochasticMatrix(np.full((3, 3), 1 / 3), 1 / 3)
    s = product_step(ProductState.initial(3), W)
    c = 2 * (1 - math.cos(math.pi / 3))
    assert error_norm(s) <= math.sqrt(1 - c * (1 / 3) ** 2) + 1e-12
    assert check_structural_invariants(s, 1 / 3) == []


def test_invariants_flag_corrupted_states():
    W = gossip_matrix(3, (0, 1), 0.5)
    s = product_step(ProductState.initial(3), W)
    # claim a larger delta than the matrices honour: entry bounds must trip
    assert any("positive entry" in v for v in check_structural_invariants(s, 0.9))
    # pretend the union is connected while the product is not mixing
    fake = ProductState(s.phi, 1, frozenset(), frozenset({(0, 1), (1, 2)}), (1,))
    found = check_structural_invariants(fake, 0.5)
    assert any("union connected" in v for v in found)
    assert any("Fiedler bound" in v for v in found)


def _sample_batch(model, T, k, seed):
    gen = stream(seed)
    phis = np.broadcast_to(np.eye(model.n), (T, model.n, model.n)).copy()
    union = np.zeros(T, dtype=np.int64)
    states = [ProductState.initial(model.n) for _ in range(T)]
    for _ in range(k):
        masks = model.sample_masks(gen, T)
        Ws = model.matrices_for_masks(masks, gen)
        phis = np.matmul(Ws, phis)
        union |= masks
        states = [product_step(s, W) for s, W in zip(states, Ws)]
    return phis, union, states


@pytest.mark.parametrize("delta", [None, 0.6])
def test_batched_checks_match_scalar(delta):
    m = LinkFailureModel(cycle_graph(5), 0.5)
    phis, union, states = _sample_batch(m, 60, 4, seed=2)
    d = m.delta if delta is None else delta
    m_k = np.array([s.m_k for s in states])
    bad = batched_invariant_violations(phis, union, m_k, 4, d, m)
    batched = np.any(np.stack(list(bad.values())), axis=0)
    scalar = np.array([bool(check_structural_invariants(s, d)) for s in states])
    assert np.array_equal(batched, scalar)
    if delta is not None:
        assert scalar.any()


@pytest.mark.parametrize("model", [
    GossipModel(random_connected_graph(5, stream(1), 0.4), alpha=None),
    LinkFailureModel(random_connected_graph(5, stream(2), 0.4), 0.4),
    toy_model(),
], ids=["gossip", "link", "toy"])
def test_harness_small(model):
    assert run_invariant_harness(model, 40, 12, seed=0).ok
    assert run_invariant_harness_batched(model, 500, 20, seed=0).ok


def test_connected_bound_helpers():
    b = uniform_connected_bound(4, 0.5, 3)
    assert b == pytest.approx((1 - 2 * (1 - math.cos(math.pi / 3)) * 0.25) ** 2)
    k = k_one(0.1, 0.5, 3)
    assert uniform_connected_bound(k, 0.5, 3) < 0.1 <= uniform_connected_bound(k - 1, 0.5, 3)
