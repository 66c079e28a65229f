"""Dynamic posted-price mechanisms.

A dynamic posted-price (DPP) mechanism is a posted-price mechanism plus a
price update rule ``T(q, B)`` that only looks at the current price and the
bids that won.  Three rules are provided:

welfare
    ``alpha * sum(b_i for i in B) / m + (1 - alpha) * q``
utilization
    ``alpha * |B| / m * (1 + delta) * q + (1 - alpha) * q``
truncated welfare
    the utilization rule on full blocks, otherwise the welfare rule with
    each bid capped at ``(1 + delta) * q``.

The named mechanisms are WDPP (MV + welfare), UDPP (RM + utilization) and
TWDPP (RM + truncated welfare).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .market import Allocation, Bid, PostedPrice, allocate_mv, allocate_rm
from .rng import as_generator
from .values import Estimate, monte_carlo


@dataclass(frozen=True)
class UpdateParams:
    alpha: float = 1 / 16
    delta: float = 1.0
    m: int = 100

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0,1)")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be an integer >= 1")


@dataclass(frozen=True)
class PriceState:
    q: float
    t: int = 1

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"price must be > 0, got {self.q}")


def _bids(B) -> np.ndarray:
    if isinstance(B, Allocation):
        B = B.winners
    if isinstance(B, np.ndarray):
        return B.astype(float, copy=False)
    return np.array([b.bid if isinstance(b, Bid) else b for b in B], dtype=float)


def update_welfare(q: float, B, params: UpdateParams) -> float:
    b = _bids(B)
    return params.alpha * b.sum() / params.m + (1 - params.alpha) * q


def update_utilization(q: float, B, params: UpdateParams) -> float:
    size = len(_bids(B))
    return params.alpha * size / params.m * (1 + params.delta) * q + (1 - params.alpha) * q


def update_truncated_welfare(q: float, B, params: UpdateParams) -> float:
    b = _bids(B)
    if b.size > params.m:
        raise ValueError(f"allocation of {b.size} bids exceeds supply m={params.m}")
    if b.size == params.m:
        return q * (1 + params.alpha * params.delta)
    capped = np.minimum(b, (1 + params.delta) * q)
    return params.alpha * capped.sum() / params.m + (1 - params.alpha) * q


class UpdateRuleKind(enum.Enum):
    WELFARE = "welfare"
    UTILIZATION = "utilization"
    TRUNCATED_WELFARE = "truncated-welfare"

    def apply(self, q: float, B, params: UpdateParams) -> float:
        return _RULES[self](q, B, params)


_RULES = {
    UpdateRuleKind.WELFARE: update_welfare,
    UpdateRuleKind.UTILIZATION: update_utilization,
    UpdateRuleKind.TRUNCATED_WELFARE: update_truncated_welfare,
}


@dataclass(frozen=True)
class DynamicMechanism:
    name: str
    allocation: str
    rule: UpdateRuleKind

    def at_price(self, q: float) -> PostedPrice:
        """The one-shot posted-price mechanism this DPP runs at price ``q``."""
        return PostedPrice(q, self.allocation)


WDPP = DynamicMechanism("wdpp", "mv", UpdateRuleKind.WELFARE)
UDPP = DynamicMechanism("udpp", "rm", UpdateRuleKind.UTILIZATION)
TWDPP = DynamicMechanism("twdpp", "rm", UpdateRuleKind.TRUNCATED_WELFARE)
DYNAMIC_MECHANISMS = {mech.name: mech for mech in (WDPP, UDPP, TWDPP)}


# --------------------------------------------------------------------------
# one step


def posted_price_round(q: float, bids: np.ndarray, m: int, allocation: str, rng) -> np.ndarray:
    """Indices of the winning bids at posted price ``q``.

    Bids are identified by position; position order doubles as the
    lexicographic tie-break for MV.
    """
    elig = np.flatnonzero(bids >= q)
    if elig.size <= m:
        return elig
    if allocation == "mv":
        order = np.lexsort((elig, -bids[elig]))
        return np.sort(elig[order[:m]])
    if allocation == "rm":
        return np.sort(elig[rng.choice(elig.size, size=m, replace=False)])
    raise ValueError(f"unknown allocation rule {allocation!r}")


def step_dpp(state: PriceState, M: Sequence[Bid], mechanism: DynamicMechanism, params: UpdateParams, seed=None):
    """One DPP round: allocate at ``state.q``, charge ``state.q`` per winner, update the price.

    The update only receives the winning bids.
    """
    if mechanism.allocation == "mv":
        winners = allocate_mv(M, state.q, params.m)
    else:
        winners = allocate_rm(M, state.q, params.m, as_generator(seed))
    alloc = Allocation(tuple(winners), {b.bidder_id: state.q for b in winners}, step=state.t)
    q_next = mechanism.rule.apply(state.q, _bids(winners), params)
    return alloc, PriceState(q_next, state.t + 1)


def eip1559_round(q: float, tips: np.ndarray, caps: np.ndarray, m: int) -> np.ndarray:
    """Indices of winners: top ``m`` tips among bids with ``tip + q <= cap``."""
    elig = np.flatnonzero(tips + q <= caps)
    if elig.size > m:
        order = np.lexsort((elig, -tips[elig]))
        elig = np.sort(elig[order[:m]])
    return elig


def step_eip1559(state: PriceState, bids, params: UpdateParams, ids: Sequence[int] | None = None):
    """One EIP-1559 round for ``(tip, cap)`` pairs.

    Winners pay ``tip + q``; the miner keeps only the tips.  Returned
    allocation entries store the tip as ``bid`` and the cap as ``value``.
    Returns ``(allocation, next_state, miner_income)``.
    """
    pairs = np.asarray(bids, dtype=float).reshape(-1, 2)
    tips, caps = pairs[:, 0], pairs[:, 1]
    if np.any(tips < 0) or np.any(caps < 0):
        raise ValueError("tips and caps must be >= 0")
    ids = list(ids) if ids is not None else list(range(1, len(tips) + 1))
    idx = eip1559_round(state.q, tips, caps, params.m)
    winners = tuple(Bid(ids[i], caps[i], tips[i]) for i in idx)
    alloc = Allocation(winners, {b.bidder_id: b.bid + state.q for b in winners}, step=state.t)
    income = float(tips[idx].sum())
    q_next = update_utilization(state.q, tips[idx], params)
    return alloc, PriceState(q_next, state.t + 1), income


# --------------------------------------------------------------------------
# expected-update kernels


def _ttw_stat(grid, params):
    m, d = params.m, params.delta

    def stat(vals):
        cols = []
        for q in grid:
            elig = vals >= q
            count = elig.sum(axis=1)
            partial = np.where(elig, np.minimum(vals, (1 + d) * q), 0.0).sum(axis=1) / m
            cols.append(np.where(count >= m, (1 + d) * q, partial))
        return np.stack(cols, axis=1)

    return stat


def kernel_ttw_curve_mc(dist, n, params: UpdateParams, grid, samples, seed):
    """TWDPP kernel on a grid, with common draws across grid points.

    ``K(q) = E[ sum_{v_i >= q} min(v_i, (1+delta) q) / m ; N(q) < m ] + (1+delta) q P(N(q) >= m)``.
    When ``N(q) < m`` every eligible bidder wins, so the RM draw does not
    enter the expectation.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return monte_carlo(dist, n, samples, seed, _ttw_stat(grid, params))


def kernel_ttw_mc(dist, n, params: UpdateParams, q: float, samples: int, seed: int) -> Estimate:
    mean, se = kernel_ttw_curve_mc(dist, n, params, [q], samples, seed)
    return Estimate(float(mean[0]), float(se[0]))


def _welfare_stat(grid, m):
    def stat(vals):
        ordered = -np.sort(-vals, axis=1)
        csum = np.concatenate([np.zeros((vals.shape[0], 1)), np.cumsum(ordered, axis=1)], axis=1)
        rows = np.arange(vals.shape[0])
        cols = [csum[rows, np.minimum(m, (vals >= q).sum(axis=1))] / m for q in grid]
        return np.stack(cols, axis=1)

    return stat


def kernel_welfare_curve_mc(dist, n, params: UpdateParams, grid, samples, seed):
    """WDPP kernel ``E[sum of the top min(m, N(q)) values] / m`` on a grid."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return monte_carlo(dist, n, samples, seed, _welfare_stat(grid, params.m))


def kernel_welfare_mc(dist, n, params, q, samples, seed) -> Estimate:
    mean, se = kernel_welfare_curve_mc(dist, n, params, [q], samples, seed)
    return Estimate(float(mean[0]), float(se[0]))


def _util_stat(grid, params):
    m, d = params.m, params.delta

    def stat(vals):
        return np.stack([(1 + d) * q * np.minimum(m, (vals >= q).sum(axis=1)) / m for q in grid], axis=1)

    return stat


def kernel_udpp_curve_mc(dist, n, params: UpdateParams, grid, samples, seed):
    """UDPP kernel ``(1 + delta) / m * R(q)`` on a grid."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return monte_carlo(dist, n, samples, seed, _util_stat(grid, params))


def kernel_udpp_mc(dist, n, params, q, samples, seed) -> Estimate:
    mean, se = kernel_udpp_curve_mc(dist, n, params, [q], samples, seed)
    return Estimate(float(mean[0]), float(se[0]))


KERNELS = {
    UpdateRuleKind.WELFARE: kernel_welfare_curve_mc,
    UpdateRuleKind.UTILIZATION: kernel_udpp_curve_mc,
    UpdateRuleKind.TRUNCATED_WELFARE: kernel_ttw_curve_mc,
}


def expected_update_mc(mechanism: DynamicMechanism, dist, n, params, q, samples, seed) -> Estimate:
    """``alpha * K(q) + (1 - alpha) * q`` for the mechanism's kernel ``K``."""
    mean, se = KERNELS[mechanism.rule](dist, n, params, [q], samples, seed)
    a = params.alpha
    return Estimate(a * float(mean[0]) + (1 - a) * q, a * float(se[0]))
