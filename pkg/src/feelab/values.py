"""Value distributions, demand profiles and the demand/revenue curves.

The limited-supply demand curve ``E[min(m, N(q))]`` and the revenue curve
``q * E[min(m, N(q))]`` drive every stability condition for posted-price
mechanisms, so they get Monte-Carlo estimators with standard errors here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .rng import VALUES, stream

DEFAULT_CAP = 1e6
MC_CHUNK = 2048


class Estimate(NamedTuple):
    value: float
    se: float


# --------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class PointMass:
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and self.v >= 0):
            raise ValueError(f"point mass must be finite and >= 0, got {self.v}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.full(size, float(self.v))

    def survival(self, q: float) -> float:
        return 1.0 if q <= self.v else 0.0

    def support_upper_bound(self) -> float:
        return float(self.v)

    def to_dict(self) -> dict:
        return {"kind": "pointmass", "v": self.v}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi and math.isfinite(self.hi)):
            raise ValueError(f"uniform needs 0 <= lo < hi < inf, got lo={self.lo}, hi={self.hi}")

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def survival(self, q):
        if q <= self.lo:
            return 1.0
        if q >= self.hi:
            return 0.0
        return (self.hi - q) / (self.hi - self.lo)

    def support_upper_bound(self):
        return float(self.hi)

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Exponential:
    mean: float
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise ValueError(f"exponential mean must be positive, got {self.mean}")
        if not self.cap > 0:
            raise ValueError("truncation cap must be positive")

    def sample(self, rng, size):
        return rng.exponential(self.mean, size)

    def survival(self, q):
        return 1.0 if q <= 0 else math.exp(-q / self.mean)

    def support_upper_bound(self):
        # only used where a bounded domain is required; sampling is untruncated
        return float(self.cap)

    def to_dict(self):
        return {"kind": "exponential", "mean": self.mean, "cap": self.cap}


@dataclass(frozen=True)
class Pareto:
    """Classical Pareto(shape, scale): ``P(v >= x) = (scale / x) ** shape`` for x >= scale.

    The default has median ``scale * 2 ** (1 / shape) = 100``.
    """

    shape: float = 2.0
    scale: float = 100.0 / math.sqrt(2.0)
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"pareto needs shape > 0 and scale > 0, got {self.shape}, {self.scale}")
        if not self.cap > 0:
            raise ValueError("truncation cap must be positive")

    def sample(self, rng, size):
        return (rng.pareto(self.shape, size) + 1.0) * self.scale

    def survival(self, q):
        if q <= self.scale:
            return 1.0
        return (self.scale / q) ** self.shape

    def median(self) -> float:
        return self.scale * 2.0 ** (1.0 / self.shape)

    def support_upper_bound(self):
        return float(self.cap)

    def to_dict(self):
        return {"kind": "pareto", "shape": self.shape, "scale": self.scale, "cap": self.cap}


@dataclass(frozen=True)
class Empirical:
    """Resample (with replacement) from a fixed list of values."""

    values: tuple = field(default=())

    def __post_init__(self):
        vals = tuple(sorted(float(v) for v in self.values))
        if not vals:
            raise ValueError("empirical distribution needs at least one value")
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError("empirical values must be finite and >= 0")
        object.__setattr__(self, "values", vals)

    def sample(self, rng, size):
        return rng.choice(np.asarray(self.values), size=size, replace=True)

    def survival(self, q):
        arr = np.asarray(self.values)
        return float(np.count_nonzero(arr >= q)) / arr.size

    def support_upper_bound(self):
        return self.values[-1]

    def to_dict(self):
        return {"kind": "empirical", "values": list(self.values)}


ValueDistribution = PointMass | Uniform | Exponential | Pareto | Empirical

_KINDS = {
    "pointmass": (PointMass, ("v",)),
    "uniform": (Uniform, ("lo", "hi")),
    "exponential": (Exponential, ("mean", "cap")),
    "pareto": (Pareto, ("shape", "scale", "cap")),
    "empirical": (Empirical, ("values",)),
}


def distribution_from_dict(spec: dict) -> ValueDistribution:
    """Build a distribution from its tagged-object form, e.g. ``{"kind": "uniform", "lo": 0, "hi": 200}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("distribution must be an object with a 'kind' field")
    kind = str(spec["kind"]).lower()
    if kind not in _KINDS:
        raise ValueError(f"unknown distribution kind {spec['kind']!r}; expected one of {sorted(_KINDS)}")
    cls, allowed = _KINDS[kind]
    extra = set(spec) - set(allowed) - {"kind"}
    if extra:
        raise ValueError(f"unknown key(s) for {kind} distribution: {sorted(extra)}")
    kwargs = {k: spec[k] for k in allowed if k in spec}
    if kind == "empirical":
        kwargs["values"] = tuple(kwargs.get("values", ()))
    return cls(**kwargs)


# --------------------------------------------------------------------------
# demand profiles


@dataclass(frozen=True)
class Constant:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("bidder count must be >= 0")

    def n_at(self, t: int) -> int:
        return self.n

    def to_dict(self):
        return {"kind": "constant", "n": self.n}


@dataclass(frozen=True)
class Step:
    """Piecewise-constant demand: ``breakpoints`` are ``(t_start, n)`` pairs.

    The first breakpoint must start at t=1.
    """

    breakpoints: tuple

    def __post_init__(self):
        bps = tuple((int(t), int(n)) for t, n in self.breakpoints)
        if not bps or bps[0][0] != 1:
            raise ValueError("step profile must start with a breakpoint at t=1")
        if any(b[0] >= c[0] for b, c in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing in t")
        if any(n < 0 for _, n in bps):
            raise ValueError("bidder count must be >= 0")
        object.__setattr__(self, "breakpoints", bps)

    def n_at(self, t: int) -> int:
        n = self.breakpoints[0][1]
        for start, count in self.breakpoints:
            if t < start:
                break
            n = count
        return n

    def segments(self, horizon: int) -> list[tuple[int, int, int]]:
        """``(first_t, last_t, n)`` for each segment clipped to ``horizon``."""
        out = []
        for i, (start, n) in enumerate(self.breakpoints):
            if start > horizon:
                break
            end = self.breakpoints[i + 1][0] - 1 if i + 1 < len(self.breakpoints) else horizon
            out.append((start, min(end, horizon), n))
        return out

    def to_dict(self):
        return {"kind": "step", "breakpoints": [list(b) for b in self.breakpoints]}


DemandProfile = Constant | Step


def demand_from_dict(spec: dict) -> DemandProfile:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("demand must be an object with a 'kind' field")
    kind = spec["kind"]
    extra = set(spec) - {"kind", "n", "breakpoints"}
    if extra:
        raise ValueError(f"unknown key(s) for demand profile: {sorted(extra)}")
    if kind == "constant":
        return Constant(int(spec["n"]))
    if kind == "step":
        return Step(tuple(tuple(b) for b in spec["breakpoints"]))
    raise ValueError(f"unknown demand kind {kind!r}; expected 'constant' or 'step'")


# --------------------------------------------------------------------------
# sampling and curves


def sample_values(dist: ValueDistribution, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. values; identical ``(dist, n, seed)`` gives identical output."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return dist.sample(stream(seed, 0, VALUES), n)


def demand_at_price(values, q: float) -> int:
    """Number of values at or above ``q``."""
    return int(np.count_nonzero(np.asarray(values) >= q))


def optimal_welfare(values, m: int) -> float:
    """Sum of the ``min(m, n)`` largest values."""
    if m < 1:
        raise ValueError("m must be >= 1")
    v = np.asarray(values, dtype=float)
    if v.size <= m:
        return float(v.sum())
    return float(np.partition(v, v.size - m)[v.size - m:].sum())


def monte_carlo(
    dist: ValueDistribution,
    n: int,
    samples: int,
    seed: int,
    statistic: Callable[[np.ndarray], np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``statistic`` over i.i.d. value profiles.

    ``statistic`` maps a ``(rows, n)`` block of profiles to a ``(rows, k)``
    array.  Blocks are seeded by their index, so the estimate does not
    depend on how blocks are distributed over workers.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    total = None
    total_sq = None
    done = 0
    block = 0
    while done < samples:
        rows = min(MC_CHUNK, samples - done)
        vals = dist.sample(stream(seed, block, VALUES), (rows, n))
        stat = np.asarray(statistic(vals), dtype=float).reshape(rows, -1)
        s, s2 = stat.sum(axis=0), np.square(stat).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
        done += rows
        block += 1
    mean = total / samples
    if samples > 1:
        var = np.maximum(total_sq / samples - mean**2, 0.0) * samples / (samples - 1)
        se = np.sqrt(var / samples)
    else:
        se = np.zeros_like(mean)
    return mean, se


def limited_demand_curve_mc(dist, n, m, grid, samples, seed) -> tuple[np.ndarray, np.ndarray]:
    """Estimates of ``E[min(m, N(q))]`` on a price grid, using common draws."""
    if m < 1:
        raise ValueError("m must be >= 1")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))

    def stat(vals):
        return np.stack([np.minimum(m, (vals >= q).sum(axis=1)) for q in grid], axis=1)

    return monte_carlo(dist, n, samples, seed, stat)


def limited_demand_mc(dist, n, m, q, samples, seed) -> Estimate:
    mean, se = limited_demand_curve_mc(dist, n, m, [q], samples, seed)
    return Estimate(float(mean[0]), float(se[0]))


def revenue_curve_mc(dist, n, m, grid, samples, seed) -> tuple[np.ndarray, np.ndarray]:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    mean, se = limited_demand_curve_mc(dist, n, m, grid, samples, seed)
    return grid * mean, grid * se


def revenue_mc(dist, n, m, q, samples, seed) -> Estimate:
    """Estimate of ``R(q) = q * E[min(m, N(q))]``."""
    est = limited_demand_mc(dist, n, m, q, samples, seed)
    return Estimate(q * est.value, q * est.se)


# --------------------------------------------------------------------------
# curve diagnostics


@dataclass(frozen=True)
class CurveDiagnostics:
    L_hat: float
    concavity_violations: list
    tol: float


def probe_curve(curve: Callable, grid: Sequence[float], tol: float | None = None) -> CurveDiagnostics:
    """Finite-difference Lipschitz estimate and midpoint-concavity check.

    ``curve`` may return plain floats or :class:`Estimate` values.  With
    estimates the default tolerance is three times the largest standard
    error on the grid; otherwise it is 1e-9.
    """
    grid = [float(g) for g in grid]
    if len(grid) < 3:
        raise ValueError("grid needs at least 3 points")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")

    raw = [curve(q) for q in grid]
    noisy = isinstance(raw[0], tuple)
    vals = [float(r[0]) if noisy else float(r) for r in raw]
    if tol is None:
        tol = 3.0 * max(float(r[1]) for r in raw) if noisy else 1e-9

    slopes = [abs(vals[i + 1] - vals[i]) / (grid[i + 1] - grid[i]) for i in range(len(grid) - 1)]
    span = grid[-1] - grid[0]
    index = {round(g / span, 9): i for i, g in enumerate(grid)}
    violations = []
    for j in range(1, len(grid) - 1):
        for i in range(j):
            k = index.get(round((2 * grid[j] - grid[i]) / span, 9))
            if k is None or k <= j:
                continue
            if vals[j] < 0.5 * (vals[i] + vals[k]) - tol:
                violations.append((grid[i], grid[j], grid[k]))
    return CurveDiagnostics(max(slopes), violations, tol)
