"""Bids, allocations, the MV and RM allocation rules, and static mechanisms.

Every static mechanism is split in two, mirroring who does what on chain:

* ``announce(M, m, rng)`` is the intended behaviour of the active miner:
  which bids end up in the block.
* ``charge(S, m)`` is the pricing mechanism.  It sees only the announced
  set ``S`` and returns the winners and their payments, or ``None`` if the
  block is invalid for this mechanism (too many bids, a bid below the
  posted price, ...).

A deviating miner is simply one that announces something else.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .rng import as_generator


@dataclass(frozen=True, slots=True)
class Bid:
    bidder_id: int
    value: float
    bid: float
    is_fake: bool = False

    def __post_init__(self):
        if self.bid < 0 or self.value < 0:
            raise ValueError(f"bid and value must be >= 0 (bidder {self.bidder_id})")

    @classmethod
    def fake(cls, bidder_id: int, bid: float) -> "Bid":
        # fake bids carry value == bid: whatever they pay comes back to the miner
        return cls(bidder_id, bid, bid, True)


def truthful_bids(values: Iterable[float], start_id: int = 1) -> list[Bid]:
    return [Bid(start_id + i, float(v), float(v)) for i, v in enumerate(values)]


def ranked(bids: Iterable[Bid]) -> list[Bid]:
    """Highest bid first; equal bids ordered by smaller bidder id."""
    return sorted(bids, key=lambda b: (-b.bid, b.bidder_id))


def eligible(bids: Iterable[Bid], q: float) -> list[Bid]:
    return [b for b in bids if b.bid >= q]


@dataclass(frozen=True)
class Allocation:
    winners: tuple
    payments: dict
    step: int = 0
    unlimited_supply: bool = False

    def __post_init__(self):
        ids = [b.bidder_id for b in self.winners]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bidder id among winners")
        if set(ids) != set(self.payments):
            raise ValueError("payments must be keyed exactly by the winner ids")
        if any(p < 0 for p in self.payments.values()):
            raise ValueError("payments must be >= 0")

    @property
    def size(self) -> int:
        return len(self.winners)

    def wins(self, bidder_id: int) -> bool:
        return bidder_id in self.payments

    def real_winners(self) -> list[Bid]:
        return [b for b in self.winners if not b.is_fake]


EMPTY = Allocation((), {})


def miner_utility(alloc: Allocation | None) -> float:
    """Revenue from real winners; payments of fake bids are refunded to the miner."""
    if alloc is None:
        return 0.0
    return float(sum(alloc.payments[b.bidder_id] for b in alloc.winners if not b.is_fake))


def bidder_utility(bid: Bid, alloc: Allocation | None) -> float:
    """Quasilinear utility: ``value - payment`` if the bid won, else 0."""
    if alloc is None or bid.bidder_id not in alloc.payments:
        return 0.0
    return bid.value - alloc.payments[bid.bidder_id]


def is_maximal(B: Sequence[Bid], M: Sequence[Bid], m: int) -> bool:
    """True iff ``B`` holds at most ``m`` bids and is either full or all of ``M``."""
    b_ids = {b.bidder_id for b in B}
    m_ids = {b.bidder_id for b in M}
    if not b_ids <= m_ids:
        raise ValueError("B must be a subset of M")
    return len(b_ids) <= m and (len(b_ids) == m or b_ids == m_ids)


def maximal_allocations(M: Sequence[Bid], m: int) -> list[tuple]:
    """All maximal allocations of ``M``: the size-m subsets, or ``M`` itself if small."""
    M = tuple(M)
    if len(M) <= m:
        return [M]
    return list(itertools.combinations(M, m))


def allocate_mv(M: Sequence[Bid], q: float, m: int) -> tuple:
    """Maximum-value rule: the top ``m`` bids among those at or above ``q``."""
    if q < 0:
        raise ValueError("price must be >= 0")
    return tuple(ranked(eligible(M, q))[:m])


def allocate_rm(M: Sequence[Bid], q: float, m: int, seed=None) -> tuple:
    """Random-maximal rule: a uniformly random size-m subset of the eligible bids."""
    if q < 0:
        raise ValueError("price must be >= 0")
    elig = eligible(M, q)
    if len(elig) <= m:
        return tuple(elig)
    pick = np.sort(as_generator(seed).choice(len(elig), size=m, replace=False))
    return tuple(elig[i] for i in pick)


# --------------------------------------------------------------------------
# static mechanisms


class StaticMechanism:
    name = "static"
    unlimited_supply = False
    individually_rational = True
    randomized = False

    def announce(self, M: Sequence[Bid], m: int, rng=None) -> tuple:
        raise NotImplementedError

    def charge(self, S: Sequence[Bid], m: int, rng=None) -> Allocation | None:
        raise NotImplementedError

    def max_block(self, m: int, n: int) -> int:
        """Largest announced set the pricing mechanism accepts."""
        return m

    def honest_outcomes(self, M: Sequence[Bid], m: int) -> list[tuple[float, Allocation]]:
        """Exact distribution of the intended outcome as ``(probability, allocation)`` pairs."""
        return self.charge_outcomes(self.announce(M, m), m)

    def charge_outcomes(self, S: Sequence[Bid], m: int) -> list[tuple[float, Allocation | None]]:
        return [(1.0, self.charge(S, m))]

    def run(self, M: Sequence[Bid], m: int, seed=None) -> Allocation:
        rng = as_generator(seed)
        return self.charge(self.announce(M, m, rng), m, rng)

    def __repr__(self):
        return f"{type(self).__name__}()"


def _alloc(winners, price_of, unlimited=False) -> Allocation:
    winners = tuple(winners)
    return Allocation(winners, {b.bidder_id: price_of(b) for b in winners}, unlimited_supply=unlimited)


class FirstPrice(StaticMechanism):
    name = "first-price"

    def announce(self, M, m, rng=None):
        return tuple(ranked(M)[:m])

    def charge(self, S, m, rng=None):
        if len(S) > m:
            return None
        return _alloc(S, lambda b: b.bid)


class SecondPrice(StaticMechanism):
    """Top ``m`` win and pay the (m+1)-st highest bid.

    The block has to carry the price-setting bid as well, so the announced
    set holds up to ``m + 1`` bids; the last one does not win.
    """

    name = "second-price"

    def announce(self, M, m, rng=None):
        return tuple(ranked(M)[: m + 1])

    def max_block(self, m, n):
        return m + 1

    def charge(self, S, m, rng=None):
        if len(S) > m + 1:
            return None
        order = ranked(S)
        price = order[m].bid if len(order) > m else 0.0
        return _alloc(order[:m], lambda b: price)


@dataclass(frozen=True, repr=True)
class PostedPrice(StaticMechanism):
    """Posted price ``q`` with the MV (deterministic) or RM (randomized) rule."""

    q: float
    rule: str = "rm"

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("posted price must be >= 0")
        if self.rule not in ("mv", "rm"):
            raise ValueError("rule must be 'mv' or 'rm'")

    @property
    def name(self):
        return f"posted-{self.rule}"

    @property
    def randomized(self):
        return self.rule == "rm"

    def announce(self, M, m, rng=None):
        if self.rule == "mv":
            return allocate_mv(M, self.q, m)
        return allocate_rm(M, self.q, m, rng)

    def charge(self, S, m, rng=None):
        if len(S) > m or any(b.bid < self.q for b in S):
            return None
        return _alloc(S, lambda b: self.q)

    def honest_outcomes(self, M, m):
        if self.rule == "mv":
            return [(1.0, self.charge(allocate_mv(M, self.q, m), m))]
        subsets = maximal_allocations(eligible(M, self.q), m)
        p = 1.0 / len(subsets)
        return [(p, self.charge(S, m)) for S in subsets]


def PostedPriceMV(q: float) -> PostedPrice:
    return PostedPrice(q, "mv")


def PostedPriceRM(q: float) -> PostedPrice:
    return PostedPrice(q, "rm")


class ModifiedGSP(StaticMechanism):
    """Top ``m`` win and all pay the lowest winning bid (the m-th highest when n >= m)."""

    name = "gsp-mod"

    def announce(self, M, m, rng=None):
        return tuple(ranked(M)[:m])

    def charge(self, S, m, rng=None):
        if len(S) > m:
            return None
        price = min((b.bid for b in S), default=0.0)
        return _alloc(S, lambda b: price)


def monopolistic_price(bids: Sequence[Bid]) -> tuple[int, float]:
    """``(k, b_k)`` with ``k = argmax_i i * b_i`` over bids sorted descending; smallest k on ties."""
    order = ranked(bids)
    if not order:
        return 0, math.inf
    best_k, best_rev = 1, order[0].bid
    for i, b in enumerate(order[1:], start=2):
        if i * b.bid > best_rev:
            best_k, best_rev = i, i * b.bid
    return best_k, order[best_k - 1].bid


class Monopolistic(StaticMechanism):
    name = "monopolistic"
    unlimited_supply = True

    def announce(self, M, m, rng=None):
        return tuple(M)

    def max_block(self, m, n):
        return n + m

    def charge(self, S, m, rng=None):
        k, price = monopolistic_price(S)
        return _alloc(ranked(S)[:k], lambda b: price, unlimited=True)


class RSOP(StaticMechanism):
    """Random sampling optimal price: split bids by fair coins, sell each side at the other's price."""

    name = "rsop"
    unlimited_supply = True
    randomized = True
    max_exact = 16

    def announce(self, M, m, rng=None):
        return tuple(M)

    def max_block(self, m, n):
        return n + m

    def _split(self, S, coins):
        A = [b for b, c in zip(S, coins) if c]
        B = [b for b, c in zip(S, coins) if not c]
        _, pa = monopolistic_price(A)
        _, pb = monopolistic_price(B)
        winners = [(b, pb) for b in A if b.bid >= pb] + [(b, pa) for b in B if b.bid >= pa]
        return Allocation(
            tuple(b for b, _ in winners), {b.bidder_id: p for b, p in winners}, unlimited_supply=True
        )

    def charge(self, S, m, rng=None):
        coins = as_generator(rng).integers(0, 2, size=len(S)).astype(bool)
        return self._split(tuple(S), coins)

    def charge_outcomes(self, S, m):
        S = tuple(S)
        if len(S) > self.max_exact:
            raise ValueError(f"exact RSOP expectation limited to {self.max_exact} bids")
        p = 0.5 ** len(S)
        return [(p, self._split(S, coins)) for coins in itertools.product((True, False), repeat=len(S))]


MECHANISM_NAMES = ("first-price", "second-price", "posted-mv", "posted-rm", "monopolistic", "rsop", "gsp-mod")


def static_mechanism(name: str, q: float | None = None) -> StaticMechanism:
    """Look up a static mechanism by its CLI name; posted-price variants need ``q``."""
    simple = {
        "first-price": FirstPrice,
        "second-price": SecondPrice,
        "monopolistic": Monopolistic,
        "rsop": RSOP,
        "gsp-mod": ModifiedGSP,
    }
    if name in simple:
        return simple[name]()
    if name in ("posted-mv", "posted-rm"):
        if q is None:
            raise ValueError(f"{name} needs a posted price q")
        return PostedPrice(q, name[-2:])
    raise ValueError(f"unknown static mechanism {name!r}")


def run_static(kind: StaticMechanism, M: Sequence[Bid], m: int, seed=None) -> Allocation:
    """Run a static mechanism honestly: intended announcement, then on-chain charging."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return kind.run(M, m, seed)


def expected_miner_utility(outcomes) -> float:
    return float(sum(p * miner_utility(a) for p, a in outcomes))


def expected_bidder_utility(bid: Bid, outcomes) -> float:
    return float(sum(p * bidder_utility(bid, a) for p, a in outcomes))
