"""Scenarios, trace metrics, stability verdicts and welfare checks."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import (
    DYNAMIC_MECHANISMS,
    KERNELS,
    TWDPP,
    DynamicMechanism,
    UpdateParams,
    UpdateRuleKind,
)
from .fixedpoint import FixedPointProblem, iterate_to_fixed_point
from .game import EIP1559, GameConfig, MinerStrategy, Overbid, Shade, SimulationTrace, Truthful, run_game
from .market import MECHANISM_NAMES, static_mechanism
from .values import (
    Constant,
    DemandProfile,
    Estimate,
    Exponential,
    Pareto,
    PointMass,
    Step,
    Uniform,
    ValueDistribution,
    monte_carlo,
)

ALL_MECHANISMS = ("wdpp", "udpp", "twdpp", "eip1559") + MECHANISM_NAMES
DEFAULT_WINDOW = 1000
DRIFT_TOL_STOCHASTIC = 1e-2
DRIFT_TOL_DETERMINISTIC = 1e-4


class ConfigError(ValueError):
    """Invalid scenario configuration; ``errors`` lists every violated constraint."""

    def __init__(self, errors: list[str], source: str | None = None):
        self.errors = list(errors)
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(prefix + "; ".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mechanism: str
    distribution: ValueDistribution
    demand: DemandProfile
    m: int = 100
    alpha: float = 1 / 16
    delta: float = 1.0
    q0: float = 10.0
    horizon: int = 10_000
    burn_in: int | None = None
    seed: int = 0
    miner: str = "honest"
    bidder: dict = field(default_factory=lambda: {"kind": "truthful"})
    window: int = DEFAULT_WINDOW
    drift_tol: float | None = None
    output: str | None = None

    def __post_init__(self):
        errors = validate_scenario(self)
        if errors:
            raise ConfigError(errors)
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.horizon // 5)

    @property
    def deterministic_values(self) -> bool:
        return isinstance(self.distribution, PointMass)

    @property
    def effective_drift_tol(self) -> float:
        if self.drift_tol is not None:
            return self.drift_tol
        return DRIFT_TOL_DETERMINISTIC if self.deterministic_values else DRIFT_TOL_STOCHASTIC

    @property
    def smoothing_block(self) -> int:
        return 1 if self.deterministic_values else max(1, self.window // 2)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "horizon" in kw and "burn_in" not in kw:
            kw["burn_in"] = kw["horizon"] // 5
        return replace(self, **kw)


def validate_scenario(cfg: ScenarioConfig) -> list[str]:
    errors = []
    if cfg.mechanism not in ALL_MECHANISMS:
        errors.append(f"mechanism must be one of {list(ALL_MECHANISMS)}")
    if not (isinstance(cfg.alpha, (int, float)) and 0 < cfg.alpha < 1):
        errors.append("alpha must lie in (0,1)")
    if not (isinstance(cfg.delta, (int, float)) and cfg.delta > 0):
        errors.append("delta must be > 0")
    if not (isinstance(cfg.m, int) and cfg.m >= 1):
        errors.append("m must be an integer >= 1")
    if not (isinstance(cfg.q0, (int, float)) and cfg.q0 > 0):
        errors.append("q0 must be > 0")
    if not isinstance(cfg.name, str) or not cfg.name:
        errors.append("name must be a non-empty string")
    if not (isinstance(cfg.horizon, int) and cfg.horizon >= 1):
        errors.append("horizon must be an integer >= 1")
    elif cfg.burn_in is not None and not (isinstance(cfg.burn_in, int) and 0 <= cfg.burn_in < cfg.horizon):
        errors.append("burn_in must be an integer in [0, horizon)")
    if not (isinstance(cfg.seed, int) and 0 <= cfg.seed < 2**64):
        errors.append("seed must be an unsigned 64-bit integer")
    if cfg.miner not in [s.value for s in MinerStrategy]:
        errors.append(f"miner must be one of {[s.value for s in MinerStrategy]}")
    try:
        bidder_from_dict(cfg.bidder)
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"bidder: {exc}")
    if not (isinstance(cfg.window, int) and cfg.window >= 2):
        errors.append("window must be an integer >= 2")
    if cfg.drift_tol is not None and not cfg.drift_tol > 0:
        errors.append("drift_tol must be > 0")
    return errors


def bidder_from_dict(spec: dict):
    kind = spec.get("kind")
    if kind == "truthful":
        return Truthful()
    if kind == "shade":
        return Shade(float(spec["kappa"]))
    if kind == "overbid":
        return Overbid(float(spec.get("cap", 1e9)))
    raise ValueError(f"unknown bidder strategy {kind!r}")


def game_config(cfg: ScenarioConfig) -> GameConfig:
    if cfg.mechanism in DYNAMIC_MECHANISMS:
        mech = DYNAMIC_MECHANISMS[cfg.mechanism]
    elif cfg.mechanism == "eip1559":
        mech = EIP1559
    else:
        mech = static_mechanism(cfg.mechanism, cfg.q0)
    return GameConfig(
        mechanism=mech,
        m=cfg.m,
        demand=cfg.demand,
        dist=cfg.distribution,
        miner=MinerStrategy(cfg.miner),
        bidder=bidder_from_dict(cfg.bidder),
        horizon=cfg.horizon,
        seed=cfg.seed,
        q0=cfg.q0,
        alpha=cfg.alpha,
        delta=cfg.delta,
    )


_SHOCK = Step(((1, 200), (3334, 600), (6667, 200)))

BUILTIN_SCENARIOS = {
    "excess-uniform": ScenarioConfig("excess-uniform", "twdpp", Uniform(0, 200), Constant(200)),
    "excess-exponential": ScenarioConfig("excess-exponential", "twdpp", Exponential(100), Constant(200)),
    "excess-pareto": ScenarioConfig("excess-pareto", "twdpp", Pareto(), Constant(200)),
    "under-demand": ScenarioConfig("under-demand", "twdpp", Uniform(0, 200), Constant(67)),
    "shock": ScenarioConfig("shock", "twdpp", Uniform(0, 200), _SHOCK),
    "pointmass-instability": ScenarioConfig(
        "pointmass-instability", "udpp", PointMass(100), Constant(200), horizon=5000
    ),
    "pointmass-undersupply": ScenarioConfig(
        "pointmass-undersupply", "udpp", PointMass(100), Constant(67), horizon=5000
    ),
}


# --------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class Converged:
    q_star: float
    drift: float
    window: int


@dataclass(frozen=True)
class Oscillating:
    lo: float
    hi: float
    ups: int
    downs: int
    alternations: int

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class NotConverged:
    drift: float


StabilityVerdict = Converged | Oscillating | NotConverged


def _prices(trace) -> np.ndarray:
    return np.asarray(trace.q if isinstance(trace, SimulationTrace) else trace, dtype=float)


def classify_stability(
    trace, window: int = DEFAULT_WINDOW, drift_tol: float = DRIFT_TOL_STOCHASTIC, block: int = 1
) -> StabilityVerdict:
    """Classify the final ``window`` prices of a trace.

    Converged
        the spread (max - min) of the block means over the window is at
        most ``drift_tol`` times the window mean.  ``block=1`` compares raw
        prices; a larger block compares averages of consecutive stretches,
        which is what a stochastic price process needs.
    Oscillating
        otherwise, if the raw price changes direction at least ``window/4``
        times and the raw band is wider than ``drift_tol`` times the mean.
    NotConverged
        anything else.
    """
    q = _prices(trace)
    if q.size < 2 * window:
        raise ValueError(f"trace of length {q.size} is shorter than 2 * window = {2 * window}")
    w = q[-window:]
    mean = float(w.mean())
    usable = (window // block) * block
    means = w[window - usable:].reshape(-1, block).mean(axis=1)
    drift = float(means.max() - means.min())
    if drift <= drift_tol * abs(mean):
        return Converged(float(means[-1]) if block > 1 else float(w[-1]), drift / abs(mean), window)
    dq = np.diff(w)
    signs = np.sign(dq[dq != 0])
    alternations = int(np.count_nonzero(signs[1:] != signs[:-1]))
    band = float(w.max() - w.min())
    if alternations >= window / 4 and band > drift_tol * abs(mean):
        return Oscillating(float(w.min()), float(w.max()), int((dq > 0).sum()), int((dq < 0).sum()), alternations)
    return NotConverged(drift / abs(mean))


def classify_segments(trace: SimulationTrace, demand: DemandProfile, window, drift_tol, block=1) -> list:
    """One verdict per demand segment (a single segment for constant demand)."""
    if isinstance(demand, Step):
        segs = demand.segments(len(trace))
    else:
        segs = [(1, len(trace), demand.n)]
    return [
        (n, classify_stability(trace.q[start - 1 : end], window, drift_tol, block)) for start, end, n in segs
    ]


def detect_equilibrium_price(trace, burn_in: int, batches: int = 20) -> Estimate:
    """Post-burn-in mean price with a batch-means standard error.

    Consecutive prices are strongly correlated, so the SE comes from the
    spread of ``batches`` contiguous batch means rather than from the raw
    sample variance.
    """
    q = _prices(trace)[burn_in:]
    if q.size < 100:
        raise ValueError("need at least 100 post-burn-in steps")
    size = q.size // batches
    means = q[q.size - size * batches :].reshape(batches, size).mean(axis=1)
    return Estimate(float(q.mean()), float(means.std(ddof=1) / math.sqrt(batches)))


# --------------------------------------------------------------------------
# welfare


@dataclass(frozen=True)
class WelfareCheck:
    welfare_at_q: float
    opt: float
    ratio: float
    bound: float
    bound_factor: float
    se: float
    passes: bool


def welfare_bound_factor(mechanism: DynamicMechanism, delta: float) -> float:
    if mechanism.rule is UpdateRuleKind.WELFARE:
        return 0.5
    return min(1.0, delta) / (2 * (1 + delta))


def welfare_bound_check(
    dist, n: int, m: int, params: UpdateParams, q_hat: float, mechanism: DynamicMechanism = TWDPP,
    samples: int = 100_000, seed: int = 0,
) -> WelfareCheck:
    """Expected welfare of posting ``q_hat`` against the equilibrium welfare bound.

    MV serves the top ``min(m, N)`` eligible values.  For RM the welfare is
    the exact conditional expectation ``min(1, m/N) * sum(eligible values)``.
    Passing means ``welfare - factor * optimal welfare`` is at least -3 standard errors,
    computed on paired samples.
    """
    factor = welfare_bound_factor(mechanism, params.delta)

    def stat(vals):
        ordered = -np.sort(-vals, axis=1)
        csum = np.concatenate([np.zeros((vals.shape[0], 1)), np.cumsum(ordered, axis=1)], axis=1)
        rows = np.arange(vals.shape[0])
        N = (vals >= q_hat).sum(axis=1)
        opt = csum[rows, min(m, vals.shape[1])]
        if mechanism.allocation == "mv":
            w = csum[rows, np.minimum(m, N)]
        else:
            elig_sum = csum[rows, N]
            w = np.where(N > m, m / np.maximum(N, 1), 1.0) * elig_sum
        return np.stack([w, opt, w - factor * opt], axis=1)

    mean, se = monte_carlo(dist, n, samples, seed, stat)
    welfare, opt, diff = mean
    return WelfareCheck(
        float(welfare), float(opt), float(welfare / opt) if opt > 0 else 1.0,
        float(factor * opt), factor, float(se[2]), bool(diff >= -3 * se[2]),
    )


def solve_equilibrium_price(
    mechanism: DynamicMechanism, dist, n: int, params: UpdateParams, samples: int = 20_000, seed: int = 0,
    x0: float = 1.0, tol: float = 1e-7, max_iter: int = 60,
) -> tuple[Estimate, object]:
    """Fixed point of the mechanism's Monte-Carlo kernel.

    The kernel uses common random numbers (fixed seed), so it is a
    deterministic function of the price and the plain solver applies.  The
    mixing weight is ``1 / (L_hat + 1)`` for a finite-difference Lipschitz
    estimate on a coarse grid.

    With a finite sample the kernel is piecewise constant in places (the
    eligible count only changes at sampled values), so the iteration can end
    up bouncing across a jump that straddles the diagonal.  In that case the
    root of ``K(q) - q`` is bisected inside the bracket the iteration visited.

    The standard error of the root comes from the delta method,
    ``se(K(q*)) / |1 - K'(q*)|``, with a slope taken over +-2% of the root.
    """
    kernel = KERNELS[mechanism.rule]

    def K(q):
        return float(kernel(dist, n, params, [q], samples, seed)[0][0])

    hi = float(dist.sample(np.random.default_rng(seed), 10_000).max())
    grid = np.linspace(hi / 50, hi, 50)
    vals, _ = kernel(dist, n, params, grid, min(samples, 5000), seed)
    L_hat = float(np.max(np.abs(np.diff(vals) / np.diff(grid))))
    alpha = 1.0 / (L_hat + 1.0) if L_hat > 0 else params.alpha
    problem = FixedPointProblem(K, a_bar=dist.support_upper_bound(), lipschitz_L=L_hat or None, alpha=alpha)
    report = iterate_to_fixed_point(problem, x0, tol=tol, max_iter=max_iter, tail=10)
    q = report.x_star
    if not report.converged:
        tail = [x for x in report.trajectory] + [q]
        lo, up = min(tail), max(tail)
        if K(lo) > lo and K(up) < up:
            while up - lo > tol * max(1.0, up):
                mid = 0.5 * (lo + up)
                lo, up = (mid, up) if K(mid) > mid else (lo, mid)
            q = 0.5 * (lo + up)
            report = replace(report, x_star=q, residual=report.alpha * abs(K(q) - q), converged=True,
                             message="bisection on the bracket left by the iteration")
    h = 0.02 * q
    mean, se = kernel(dist, n, params, [q - h, q, q + h], samples, seed)
    slope = (mean[2] - mean[0]) / (2 * h)
    return Estimate(q, float(se[1]) / max(abs(1 - slope), 1e-6)), report


# --------------------------------------------------------------------------
# running scenarios


def summarize(trace: SimulationTrace, cfg: ScenarioConfig) -> dict:
    post = trace.slice(cfg.burn_in)
    q_hat = detect_equilibrium_price(trace, cfg.burn_in) if len(post) >= 100 else None
    summary = {
        "name": cfg.name,
        "mechanism": cfg.mechanism,
        "seed": cfg.seed,
        "steps": len(trace),
        "burn_in": cfg.burn_in,
        "mean_price": float(np.nanmean(post.q)) if np.isfinite(post.q).any() else None,
        "mean_welfare_ratio": float(post.welfare_ratio.mean()),
        "mean_utilization": float(post.utilization.mean()),
        "mean_revenue": float(post.revenue.mean()),
    }
    if q_hat is not None and np.isfinite(q_hat.value):
        summary["q_hat"] = q_hat.value
        summary["q_hat_se"] = q_hat.se
    if cfg.mechanism in DYNAMIC_MECHANISMS or cfg.mechanism == "eip1559":
        verdicts = []
        for n, v in classify_segments(trace, cfg.demand, cfg.window, cfg.effective_drift_tol, cfg.smoothing_block) \
                if len(trace) >= 2 * cfg.window else []:
            verdicts.append({"n": n, "verdict": type(v).__name__, **v.__dict__})
        summary["stability"] = verdicts
    return summary


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_text(summary: dict) -> str:
    lines = []
    for k, v in summary.items():
        if k == "stability":
            for seg in v:
                desc = ", ".join(f"{kk}={vv:.6g}" if isinstance(vv, float) else f"{kk}={vv}" for kk, vv in seg.items())
                lines.append(f"stability: {desc}")
        elif isinstance(v, float):
            lines.append(f"{k}: {v:.9g}")
        else:
            lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def run_scenario(cfg: ScenarioConfig, out_dir: str | os.PathLike | None = None) -> tuple[SimulationTrace, dict]:
    """Simulate a scenario; optionally write ``trace.csv``, ``summary.txt`` and ``summary.json``."""
    trace = run_game(game_config(cfg))
    summary = summarize(trace, cfg)
    if out_dir is not None:
        out = Path(out_dir)
        try:
            _atomic_write(out / "trace.csv", trace.csv_text())
            _atomic_write(out / "summary.txt", summary_text(summary))
            _atomic_write(out / "summary.json", json.dumps(summary, indent=2, default=float) + "\n")
        except OSError as exc:
            raise OSError(f"could not write scenario output to {out}: {exc}") from exc
    return trace, summary
