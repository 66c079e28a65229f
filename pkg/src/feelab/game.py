"""The decentralized multi-round auction game and strategic-deviation oracles.

Each step: bidders arrive and bid, one (myopic) miner becomes active and
announces a block, the pricing mechanism charges the block's bids using
only what is in the block, and the price is updated for dynamic
mechanisms.  Miner identity does not matter under myopia, so one
representative active miner is simulated.

The oracles search exhaustively over small instances:

* :func:`miner_best_deviation` enumerates every block the miner could
  announce, real bids plus fake bids from a finite grid;
* :func:`bidder_best_response` tries every bid on a grid with exact
  expectations over randomized allocations.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    DynamicMechanism,
    PriceState,
    UpdateParams,
    eip1559_round,
    posted_price_round,
    update_utilization,
)
from .market import (
    Bid,
    FirstPrice,
    PostedPrice,
    StaticMechanism,
    expected_bidder_utility,
    expected_miner_utility,
    miner_utility,
    static_mechanism,
)
from .rng import AUX, MINER, VALUES, stream
from .values import DemandProfile, ValueDistribution, optimal_welfare

UTILITY_TOL = 1e-9
MAX_ORACLE_BIDDERS = 12
MAX_CANDIDATES = 2_000_000


class MinerStrategy(enum.Enum):
    HONEST = "honest"
    REVENUE_MAXIMIZING = "revenue-maximizing"
    MV_OVERRIDE = "mv-override"


@dataclass(frozen=True)
class Truthful:
    def bids(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class Shade:
    kappa: float

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError("shade factor must lie in (0, 1]")

    def bids(self, values):
        return self.kappa * np.asarray(values, dtype=float)


@dataclass(frozen=True)
class Overbid:
    cap: float = 1e9

    def bids(self, values):
        return np.full(np.shape(values), float(self.cap))


BidderStrategy = Truthful | Shade | Overbid


class Eip1559:
    """Marker for the EIP-1559 mechanism; bidders tip 0 and cap at their bid."""

    name = "eip1559"


EIP1559 = Eip1559()


@dataclass(frozen=True)
class GameConfig:
    mechanism: object
    m: int
    demand: DemandProfile
    dist: ValueDistribution
    miner: MinerStrategy = MinerStrategy.HONEST
    bidder: BidderStrategy = Truthful()
    horizon: int = 10_000
    seed: int = 0
    q0: float = 10.0
    alpha: float = 1 / 16
    delta: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.q0 > 0:
            raise ValueError("q0 must be > 0")

    @property
    def params(self) -> UpdateParams:
        return UpdateParams(self.alpha, self.delta, self.m)


TRACE_COLUMNS = ("t", "n", "q", "sold", "welfare_achieved", "welfare_opt", "revenue", "utilization")


@dataclass
class SimulationTrace:
    """Per-step records, stored column-wise."""

    t: np.ndarray
    n: np.ndarray
    q: np.ndarray
    sold: np.ndarray
    welfare_achieved: np.ndarray
    welfare_opt: np.ndarray
    revenue: np.ndarray
    utilization: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def welfare_ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.welfare_opt > 0, self.welfare_achieved / self.welfare_opt, 1.0)

    def slice(self, start: int, stop: int | None = None) -> "SimulationTrace":
        return SimulationTrace(*(getattr(self, c)[start:stop] for c in TRACE_COLUMNS))

    def csv_text(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for i in range(len(self.t)):
            lines.append(
                f"{int(self.t[i])},{int(self.n[i])},{self.q[i]:.9g},{int(self.sold[i])},"
                f"{self.welfare_achieved[i]:.9g},{self.welfare_opt[i]:.9g},"
                f"{self.revenue[i]:.9g},{self.utilization[i]:.9g}"
            )
        return "\n".join(lines) + "\n"


def _empty_trace(T):
    return {c: np.zeros(T, dtype=np.int64 if c in ("t", "n", "sold") else float) for c in TRACE_COLUMNS}


def run_game(config: GameConfig) -> SimulationTrace:
    """Simulate ``config.horizon`` rounds; deterministic given ``config.seed``."""
    mech = config.mechanism
    if isinstance(mech, DynamicMechanism):
        return _run_dynamic(config)
    if isinstance(mech, Eip1559):
        return _run_eip1559(config)
    if isinstance(mech, StaticMechanism):
        return _run_static(config)
    raise TypeError(f"unsupported mechanism {mech!r}")


def _run_dynamic(config: GameConfig) -> SimulationTrace:
    mech: DynamicMechanism = config.mechanism
    params = config.params
    m = config.m
    rule = mech.rule
    allocation = "mv" if config.miner is MinerStrategy.MV_OVERRIDE else mech.allocation
    # any maximal allocation at the posted price earns q * min(m, N): the intended rule is revenue-maximizing
    cols = _empty_trace(config.horizon)
    q = float(config.q0)
    for i in range(config.horizon):
        t = i + 1
        n = config.demand.n_at(t)
        values = config.dist.sample(stream(config.seed, t, VALUES), n)
        bids = config.bidder.bids(values)
        idx = posted_price_round(q, bids, m, allocation, stream(config.seed, t, MINER))
        cols["t"][i] = t
        cols["n"][i] = n
        cols["q"][i] = q
        cols["sold"][i] = idx.size
        cols["welfare_achieved"][i] = values[idx].sum()
        cols["welfare_opt"][i] = optimal_welfare(values, m)
        cols["revenue"][i] = q * idx.size
        cols["utilization"][i] = idx.size / m
        q = rule.apply(q, bids[idx], params)
    return SimulationTrace(**cols)


def _run_eip1559(config: GameConfig) -> SimulationTrace:
    params = config.params
    m = config.m
    cols = _empty_trace(config.horizon)
    q = float(config.q0)
    for i in range(config.horizon):
        t = i + 1
        n = config.demand.n_at(t)
        values = config.dist.sample(stream(config.seed, t, VALUES), n)
        caps = config.bidder.bids(values)
        tips = np.zeros(n)
        idx = eip1559_round(q, tips, caps, m)
        cols["t"][i] = t
        cols["n"][i] = n
        cols["q"][i] = q
        cols["sold"][i] = idx.size
        cols["welfare_achieved"][i] = values[idx].sum()
        cols["welfare_opt"][i] = optimal_welfare(values, m)
        cols["revenue"][i] = tips[idx].sum()
        cols["utilization"][i] = idx.size / m
        q = update_utilization(q, tips[idx], params)
    return SimulationTrace(**cols)


def _run_static(config: GameConfig) -> SimulationTrace:
    mech: StaticMechanism = config.mechanism
    m = config.m
    cols = _empty_trace(config.horizon)
    for i in range(config.horizon):
        t = i + 1
        n = config.demand.n_at(t)
        values = config.dist.sample(stream(config.seed, t, VALUES), n)
        bids = config.bidder.bids(values)
        M = [Bid(j + 1, float(v), float(b)) for j, (v, b) in enumerate(zip(values, bids))]
        rng = stream(config.seed, t, MINER)
        if config.miner is MinerStrategy.REVENUE_MAXIMIZING and not isinstance(mech, (FirstPrice, PostedPrice)):
            S = miner_best_deviation(mech, M, m).best_announcement
        elif config.miner is MinerStrategy.MV_OVERRIDE and isinstance(mech, PostedPrice):
            S = PostedPrice(mech.q, "mv").announce(M, m)
        else:
            S = mech.announce(M, m, rng)
        alloc = mech.charge(S, m, rng)
        real = alloc.real_winners()
        cols["t"][i] = t
        cols["n"][i] = n
        cols["q"][i] = mech.q if isinstance(mech, PostedPrice) else math.nan
        cols["sold"][i] = len(real)
        cols["welfare_achieved"][i] = sum(b.value for b in real)
        cols["welfare_opt"][i] = optimal_welfare(values, n if mech.unlimited_supply else m) if n else 0.0
        cols["revenue"][i] = miner_utility(alloc)
        cols["utilization"][i] = len(real) / m if not mech.unlimited_supply else min(1.0, len(real) / m)
    return SimulationTrace(**cols)


# --------------------------------------------------------------------------
# miner deviation oracle


@dataclass
class DeviationReport:
    best_announcement: tuple
    best_utility: float
    honest_utility: float
    candidates: int

    @property
    def gain(self) -> float:
        return self.best_utility - self.honest_utility

    @property
    def profitable(self) -> bool:
        return self.gain > UTILITY_TOL


def default_fake_grid(bids: Sequence[float]) -> list[float]:
    """Real bids, midpoints between consecutive distinct bids, and 0."""
    vals = sorted(set(float(b) for b in bids))
    mids = [(a + b) / 2 for a, b in zip(vals, vals[1:])]
    return sorted(set(vals) | set(mids) | {0.0})


def _as_static(mechanism, state: PriceState | None) -> StaticMechanism:
    if isinstance(mechanism, DynamicMechanism):
        if state is None:
            raise ValueError("a dynamic mechanism needs the current price state")
        return mechanism.at_price(state.q)
    return mechanism


def _n_multisets(k: int, r: int) -> int:
    return math.comb(k + r - 1, r) if k else int(r == 0)


def miner_best_deviation(
    mechanism,
    M: Sequence[Bid],
    m: int,
    fake_bid_grid: Sequence[float] | None = None,
    state: PriceState | None = None,
    max_fakes: int | None = None,
) -> DeviationReport:
    """Best one-step announcement for a myopic miner, by exhaustive search.

    Candidates are every subset of the real bids combined with up to
    ``max_fakes`` fake bids (default ``m``) drawn with repetition from
    ``fake_bid_grid``, limited to the block size the mechanism accepts.
    Utilities are exact expectations over the mechanism's own randomness.
    """
    mech = _as_static(mechanism, state)
    M = tuple(M)
    if len(M) > MAX_ORACLE_BIDDERS:
        raise ValueError(f"deviation search limited to {MAX_ORACLE_BIDDERS} bidders, got {len(M)}")
    grid = default_fake_grid([b.bid for b in M]) if fake_bid_grid is None else sorted(set(fake_bid_grid))
    max_fakes = m if max_fakes is None else max_fakes
    cap = mech.max_block(m, len(M))

    plan = []
    count = 0
    for size in range(cap + 1):
        for j in range(min(size, len(M)) + 1):
            r = size - j
            if r > max_fakes:
                continue
            plan.append((j, r))
            count += math.comb(len(M), j) * _n_multisets(len(grid), r)
    if count > MAX_CANDIDATES:
        raise ValueError(f"deviation search space too large ({count} candidates)")

    next_id = max((b.bidder_id for b in M), default=0) + 1
    honest = expected_miner_utility(mech.honest_outcomes(M, m))
    best_S, best_u = mech.announce(M, m, np.random.default_rng(0)), honest
    for j, r in plan:
        for reals in itertools.combinations(M, j):
            for fake_bids in itertools.combinations_with_replacement(grid, r):
                S = reals + tuple(Bid.fake(next_id + k, b) for k, b in enumerate(fake_bids))
                outcomes = mech.charge_outcomes(S, m)
                if any(a is None for _, a in outcomes):
                    continue
                u = expected_miner_utility(outcomes)
                if u > best_u + UTILITY_TOL:
                    best_S, best_u = S, u
    return DeviationReport(tuple(best_S), best_u, honest, count)


# --------------------------------------------------------------------------
# bidder best response


@dataclass
class BestResponse:
    best_bids: list
    best_utility: float
    truthful_utility: float

    @property
    def gain(self) -> float:
        return self.best_utility - self.truthful_utility


def bidder_best_response(
    mechanism,
    others: Sequence[Bid],
    value: float,
    bid_grid: Sequence[float],
    m: int,
    bidder_id: int | None = None,
    state: PriceState | None = None,
) -> BestResponse:
    """Grid best response of one bidder against fixed bids of the others.

    Ties between equal bids go to the smaller bidder id; by default the
    deviating bidder gets the largest id.
    """
    mech = _as_static(mechanism, state)
    grid = sorted(set(float(b) for b in bid_grid))
    if not any(math.isclose(b, value, rel_tol=0, abs_tol=1e-12) for b in grid):
        raise ValueError("bid grid must contain the bidder's value")
    if bidder_id is None:
        bidder_id = max((b.bidder_id for b in others), default=0) + 1
    others = tuple(b for b in others if b.bidder_id != bidder_id)

    def utility(b):
        me = Bid(bidder_id, value, b)
        return expected_bidder_utility(me, mech.honest_outcomes(others + (me,), m))

    utils = [utility(b) for b in grid]
    best = max(utils)
    best_bids = [b for b, u in zip(grid, utils) if u >= best - UTILITY_TOL]
    return BestResponse(best_bids, best, utility(value))


# --------------------------------------------------------------------------
# IC / DSIC checking


@dataclass(frozen=True)
class InstanceFamily:
    """Random small instances: integer values, n bidders, m slots, optional posted price."""

    n_min: int = 2
    n_max: int = 8
    m_max: int = 3
    value_hi: int = 20
    distinct: bool = True
    excess_demand: bool = False

    def draw(self, rng: np.random.Generator, posted: bool) -> dict:
        m = int(rng.integers(1, self.m_max + 1))
        n_lo = max(self.n_min, m + 2) if self.excess_demand else self.n_min
        n = int(rng.integers(n_lo, self.n_max + 1))
        if self.distinct:
            values = rng.choice(np.arange(1, self.value_hi + 1), size=n, replace=False)
        else:
            values = rng.integers(1, self.value_hi + 1, size=n)
        values = [float(v) for v in values]
        q = None
        if posted:
            hi = sorted(values, reverse=True)[m] if self.excess_demand else self.value_hi
            q = float(rng.integers(1, int(hi) + 1))
        return {"m": m, "values": values, "q": q}


@dataclass
class ICReport:
    mechanism: str
    trials: int
    ic_holds: bool
    dsic_holds: bool
    ic_counterexample: dict | None = None
    dsic_counterexample: dict | None = None

    def summary(self) -> str:
        lines = [
            f"mechanism: {self.mechanism}",
            f"trials: {self.trials}",
            f"ic_holds: {str(self.ic_holds).lower()}",
            f"dsic_holds: {str(self.dsic_holds).lower()}",
        ]
        for label, ce in (("ic_counterexample", self.ic_counterexample), ("dsic_counterexample", self.dsic_counterexample)):
            if ce is not None:
                lines.append(f"{label}: {ce}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return asdict(self)


def default_bid_grid(values: Sequence[float], value: float, q: float | None = None) -> list[float]:
    base = set(default_fake_grid(values)) | {float(value), 2 * max(values) + 1}
    if q is not None:
        base.add(float(q))
    return sorted(base)


def check_ic_dsic(
    mechanism: str | Callable[[dict], StaticMechanism],
    family: InstanceFamily = InstanceFamily(),
    trials: int = 200,
    seed: int = 0,
    stop_early: bool = True,
) -> ICReport:
    """Run the bidder and miner oracles over random truthful instances.

    IC fails on an instance if some bidder's truthful utility falls short of
    the grid best response by more than 1e-9; DSIC fails if the honest
    announcement earns the miner less than the best deviation.  With
    ``stop_early`` each oracle stops after its first counterexample.
    """
    if isinstance(mechanism, str):
        name = mechanism
        posted = name.startswith("posted")
        make = lambda inst: static_mechanism(name, inst["q"])  # noqa: E731
    else:
        name = getattr(mechanism, "__name__", "custom")
        posted = True
        make = mechanism

    ic_ce = dsic_ce = None
    for trial in range(trials):
        inst = family.draw(stream(seed, trial, AUX), posted)
        mech = make(inst)
        m, values, q = inst["m"], inst["values"], inst["q"]
        M = tuple(Bid(i + 1, v, v) for i, v in enumerate(values))
        instance = {"mechanism": name, "m": m, "q": q, "bids": [[b.bidder_id, b.value, b.bid] for b in M]}

        if ic_ce is None or not stop_early:
            for me in M:
                others = tuple(b for b in M if b.bidder_id != me.bidder_id)
                br = bidder_best_response(mech, others, me.value, default_bid_grid(values, me.value, q), m, me.bidder_id)
                if br.gain > UTILITY_TOL:
                    ic_ce = ic_ce or {
                        **instance,
                        "trial": trial,
                        "bidder_id": me.bidder_id,
                        "value": me.value,
                        "best_bids": br.best_bids,
                        "best_utility": br.best_utility,
                        "truthful_utility": br.truthful_utility,
                    }
                    break

        if dsic_ce is None or not stop_early:
            dev = miner_best_deviation(mech, M, m)
            if dev.profitable:
                dsic_ce = dsic_ce or {
                    **instance,
                    "trial": trial,
                    "announcement": [[b.bidder_id, b.bid, b.is_fake] for b in dev.best_announcement],
                    "best_utility": dev.best_utility,
                    "honest_utility": dev.honest_utility,
                }

        if stop_early and ic_ce is not None and dsic_ce is not None:
            break
    return ICReport(name, trials, ic_ce is None, dsic_ce is None, ic_ce, dsic_ce)
