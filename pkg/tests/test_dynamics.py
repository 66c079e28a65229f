import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from feelab.dynamics import (
    TWDPP,
    UDPP,
    WDPP,
    PriceState,
    UpdateParams,
    UpdateRuleKind,
    expected_update_mc,
    kernel_ttw_mc,
    kernel_udpp_curve_mc,
    posted_price_round,
    step_dpp,
    step_eip1559,
    update_truncated_welfare,
    update_utilization,
    update_welfare,
)
from feelab.market import truthful_bids
from feelab.values import PointMass, Uniform, revenue_curve_mc

P = UpdateParams()  # alpha 1/16, delta 1, m 100


def test_params_validation():
    with pytest.raises(ValueError, match=r"alpha must lie in \(0,1\)"):
        UpdateParams(alpha=1.0)
    with pytest.raises(ValueError):
        UpdateParams(delta=0)
    with pytest.raises(ValueError):
        PriceState(0.0)


def test_welfare_rule_examples():
    assert update_welfare(80, [], P) == pytest.approx(75)
    one = UpdateParams(m=1)
    assert update_welfare(100, [100.0], one) == pytest.approx(100)
    assert update_welfare(80, [100.0], one) == pytest.approx(81.25)


def test_utilization_rule_examples():
    assert update_utilization(100, [], P) == pytest.approx(93.75)
    assert update_utilization(100, np.ones(100), P) == pytest.approx(106.25)
    half = UpdateParams(alpha=0.3, m=10)
    assert update_utilization(42.0, np.ones(5), half) == pytest.approx(42.0)


def test_truncated_rule_examples():
    assert update_truncated_welfare(100, np.full(100, 500.0), P) == pytest.approx(106.25)
    small = np.array([30.0, 150.0])
    assert update_truncated_welfare(100, small, P) == pytest.approx(update_welfare(100, small, P))
    assert update_truncated_welfare(10, [100.0], UpdateParams(alpha=0.5, m=2)) == pytest.approx(10)
    with pytest.raises(ValueError):
        update_truncated_welfare(10, np.ones(3), UpdateParams(m=2))


def test_rule_kind_dispatch():
    B = np.array([120.0, 80.0])
    assert UpdateRuleKind.WELFARE.apply(90, B, P) == update_welfare(90, B, P)
    assert UpdateRuleKind.UTILIZATION.apply(90, B, P) == update_utilization(90, B, P)
    assert UpdateRuleKind.TRUNCATED_WELFARE.apply(90, B, P) == update_truncated_welfare(90, B, P)


def test_step_dpp_examples():
    state = PriceState(50.0)
    alloc, nxt = step_dpp(state, [], TWDPP, P, seed=0)
    assert alloc.size == 0 and nxt.q == pytest.approx(50 * 15 / 16) and nxt.t == 2

    alloc, nxt = step_dpp(state, truthful_bids([100, 100]), WDPP, UpdateParams(m=1), seed=0)
    assert list(alloc.payments.values()) == [50.0]
    assert nxt.q == pytest.approx(50 + 50 / 16)

    alloc, nxt = step_dpp(PriceState(40.0), truthful_bids([100] * 200), UDPP, P, seed=3)
    assert alloc.size == 100 and nxt.q == pytest.approx(40 * 17 / 16)
    assert set(alloc.payments.values()) == {40.0}


def test_posted_price_round_mv_ties_by_position():
    idx = posted_price_round(5.0, np.array([10.0, 10.0, 7.0]), 1, "mv", None)
    assert idx.tolist() == [0]


def test_eip1559_examples():
    state = PriceState(20.0)
    alloc, nxt, income = step_eip1559(state, [(5.0, 25.0)], UpdateParams(m=1))
    assert alloc.payments == {1: 25.0} and income == 5.0
    assert nxt.q == pytest.approx(update_utilization(20, [5.0], UpdateParams(m=1)))

    alloc, nxt, income = step_eip1559(state, [(0.0, 10.0), (0.0, 15.0)], P)
    assert alloc.size == 0 and income == 0 and nxt.q == pytest.approx(20 * 15 / 16)


def test_eip1559_zero_tip_matches_udpp_sizes():
    rng = np.random.default_rng(8)
    s_e, s_u = PriceState(10.0), PriceState(10.0)
    params = UpdateParams(m=10)
    for t in range(200):
        values = rng.uniform(0, 200, size=25)
        a_e, s_e, _ = step_eip1559(s_e, np.column_stack([np.zeros(25), values]), params)
        a_u, s_u = step_dpp(s_u, truthful_bids(values), UDPP, params, seed=t)
        assert a_e.size == a_u.size
        assert s_e.q == pytest.approx(s_u.q, rel=1e-12)


def test_kernel_examples():
    assert kernel_ttw_mc(Uniform(0, 200), 10, P, 250.0, 500, 0).value == 0
    assert kernel_ttw_mc(PointMass(100), 2, UpdateParams(m=1), 50.0, 100, 0).value == pytest.approx(100)
    assert kernel_ttw_mc(PointMass(100), 1, UpdateParams(m=2), 50.0, 100, 0).value == pytest.approx(50)


def test_udpp_kernel_is_scaled_revenue():
    grid = [50.0, 100.0, 150.0]
    k, _ = kernel_udpp_curve_mc(Uniform(0, 200), 60, UpdateParams(m=30), grid, 3000, 5)
    r, _ = revenue_curve_mc(Uniform(0, 200), 60, 30, grid, 3000, 5)
    assert np.allclose(k, 2 / 30 * r)


def _one_step_updates(mechanism, dist, n, params, q, samples, seed):
    rng = np.random.default_rng(seed)
    out = np.empty(samples)
    for i in range(samples):
        vals = dist.sample(rng, n)
        win = posted_price_round(q, vals, params.m, mechanism.allocation, rng)
        out[i] = mechanism.rule.apply(q, vals[win], params)
    return out.mean(), out.std(ddof=1) / np.sqrt(samples)


@pytest.mark.parametrize("mechanism", [TWDPP, UDPP, WDPP])
def test_expected_update_matches_simulated_step(mechanism):
    params = UpdateParams(alpha=0.25, m=20)
    dist, n, q = Uniform(0, 200), 50, 120.0
    sim, sim_se = _one_step_updates(mechanism, dist, n, params, q, 20_000, seed=101)
    est = expected_update_mc(mechanism, dist, n, params, q, 20_000, seed=202)
    assert abs(sim - est.value) <= 3 * np.hypot(sim_se, est.se)


prices = st.floats(1e-6, 1e6)
alphas = st.floats(0.001, 0.999)
deltas = st.floats(0.01, 10)


@given(prices, alphas, deltas, st.integers(1, 20), st.lists(st.floats(0, 1e7), max_size=20))
def test_rules_keep_price_positive_and_bounded(q, alpha, delta, m, bid_values):
    params = UpdateParams(alpha, delta, m)
    B = np.array(bid_values[:m])
    for rule in (update_welfare, update_utilization, update_truncated_welfare):
        assert rule(q, B, params) > 0
    tw = update_truncated_welfare(q, B, params)
    assert (1 - alpha) * q * (1 - 1e-12) <= tw <= q * (1 + alpha * delta) * (1 + 1e-12)


@given(prices, alphas, deltas, st.integers(1, 20), st.data())
def test_truncated_rule_reduces_to_the_other_rules(q, alpha, delta, m, data):
    params = UpdateParams(alpha, delta, m)
    full = np.array(data.draw(st.lists(st.floats(0, 1e7), min_size=m, max_size=m)))
    assert update_truncated_welfare(q, full, params) == pytest.approx(update_utilization(q, full, params), rel=1e-12)
    k = data.draw(st.integers(0, m - 1))
    low = np.array(data.draw(st.lists(st.floats(0, (1 + delta) * q), min_size=k, max_size=k)))
    assert update_truncated_welfare(q, low, params) == pytest.approx(update_welfare(q, low, params), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60))
def test_step_dpp_sizes_and_payments(seed, n):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0, 200, size=n)
    for mech in (WDPP, UDPP, TWDPP):
        alloc, nxt = step_dpp(PriceState(90.0), truthful_bids(values), mech, UpdateParams(m=10), seed=seed)
        assert alloc.size == min(10, int((values >= 90).sum()))
        assert all(p == 90.0 for p in alloc.payments.values())
        assert nxt.q > 0
