"""Fixed-point iteration for Lipschitz, strictly concave maps.

For ``f`` that is L-Lipschitz on ``[0, a_bar]``, strictly concave there and
zero beyond ``a_bar``, iterating the mixture ``g(x) = alpha f(x) + (1-alpha) x``
with ``alpha <= 1 / (L + 1)`` from any positive start converges to a fixed
point of ``f``.  ``g`` and ``f`` have the same fixed points, and on the
branch where ``f`` decreases ``g`` is (1 - alpha)-Lipschitz.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

Oracle = Callable[[float], float]


def mixture(f: Oracle, alpha: float) -> Oracle:
    """``x -> alpha * f(x) + (1 - alpha) * x``."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")

    def g(x):
        return alpha * f(x) + (1 - alpha) * x

    g.alpha = alpha
    g.kernel = f
    return g


@dataclass(frozen=True)
class FixedPointProblem:
    f: Oracle
    a_bar: float
    lipschitz_L: float | None = None
    alpha: float | None = None
    name: str = ""

    def __post_init__(self):
        if not (self.a_bar > 0 and math.isfinite(self.a_bar)):
            raise ValueError("a_bar must be finite and > 0")
        if self.lipschitz_L is not None and not self.lipschitz_L > 0:
            raise ValueError("lipschitz_L must be > 0")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def alpha_bound(self) -> float | None:
        return None if self.lipschitz_L is None else 1.0 / (self.lipschitz_L + 1.0)


@dataclass
class SolveReport:
    x_star: float
    iterations: int
    residual: float
    converged: bool
    alpha: float
    alpha_clamped: bool = False
    trajectory: list = field(default_factory=list)
    message: str = ""

    def summary(self) -> str:
        status = "converged" if self.converged else "NOT converged"
        lines = [
            f"status: {status}",
            f"x_star: {self.x_star:.12g}",
            f"iterations: {self.iterations}",
            f"residual: {self.residual:.3e}",
            f"alpha: {self.alpha:.6g}" + (" (clamped to 1/(L+1))" if self.alpha_clamped else ""),
        ]
        if self.message:
            lines.append(f"note: {self.message}")
        return "\n".join(lines)


def _averaged(f: Oracle, k: int) -> Callable[[float], tuple[float, float]]:
    def h(x):
        ys = np.array([f(x) for _ in range(k)], dtype=float)
        return float(ys.mean()), float(ys.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0

    return h


def iterate_to_fixed_point(
    problem: FixedPointProblem,
    x0: float,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    *,
    clamp_alpha: bool = True,
    log_trajectory: bool = False,
    noisy: bool = False,
    noise_samples: int = 64,
    tail: int = 50,
) -> SolveReport:
    """Iterate ``x <- alpha f(x) + (1 - alpha) x`` from ``x0``.

    Stops once ``|x_{t+1} - x_t| <= tol * max(1, x_t)``.  When the problem
    declares a Lipschitz bound and ``alpha`` exceeds ``1 / (L + 1)``, alpha is
    clamped to that bound unless ``clamp_alpha`` is False.

    In noisy mode each evaluation averages ``noise_samples`` oracle calls and
    the stopping threshold is widened to three standard errors of the
    averaged step when that is larger than ``tol``.

    Failure to meet the tolerance within ``max_iter`` is reported through
    ``converged=False`` together with the last ``tail`` iterates.
    """
    if not x0 > 0:
        raise ValueError("x0 must be > 0")
    if not tol > 0:
        raise ValueError("tol must be > 0")

    bound = problem.alpha_bound
    alpha = problem.alpha if problem.alpha is not None else (bound if bound is not None else 0.5)
    clamped = False
    if clamp_alpha and bound is not None and alpha > bound:
        log.info("alpha %.6g exceeds 1/(L+1) = %.6g; clamping", alpha, bound)
        alpha, clamped = bound, True

    if noisy:
        evaluate = _averaged(problem.f, noise_samples)
    else:
        evaluate = lambda x: (float(problem.f(x)), 0.0)  # noqa: E731

    x = float(x0)
    traj = [x]
    for it in range(1, max_iter + 1):
        fx, se = evaluate(x)
        x_next = alpha * fx + (1 - alpha) * x
        if log_trajectory or len(traj) < tail:
            traj.append(x_next)
        else:
            traj = traj[1:] + [x_next]
        threshold = max(tol, 3 * alpha * se / max(1.0, x)) if noisy else tol
        if abs(x_next - x) <= threshold * max(1.0, x):
            fx_star, _ = evaluate(x_next)
            residual = abs(alpha * fx_star + (1 - alpha) * x_next - x_next)
            return SolveReport(x_next, it, residual, True, alpha, clamped, traj if log_trajectory else [])
        x = x_next

    fx, _ = evaluate(x)
    residual = abs(alpha * fx + (1 - alpha) * x - x)
    return SolveReport(
        x, max_iter, residual, False, alpha, clamped, traj[-tail:],
        message=f"tolerance not met after {max_iter} iterations",
    )


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class ContractionDiagnostics:
    concavity_violations: list
    peak: float
    decreasing_slope: float
    witness: float | None


def check_concave_contraction(g: Oracle, grid: Sequence[float], tol: float = 1e-9) -> ContractionDiagnostics:
    """Grid check of the conditions the concave contraction argument needs.

    Reports midpoint-concavity violations on consecutive triples, the
    largest finite-difference slope magnitude right of the grid maximum,
    and the smallest grid point ``b > 0`` with ``g(b) < b`` (None if absent).
    """
    xs = np.asarray(grid, dtype=float)
    if xs.size < 3:
        raise ValueError("grid needs at least 3 points")
    ys = np.array([g(x) for x in xs], dtype=float)
    violations = []
    for i in range(1, xs.size - 1):
        if math.isclose(xs[i] - xs[i - 1], xs[i + 1] - xs[i], rel_tol=1e-9, abs_tol=1e-12):
            if ys[i] < 0.5 * (ys[i - 1] + ys[i + 1]) - tol:
                violations.append((xs[i - 1], xs[i], xs[i + 1]))
    top = int(np.argmax(ys))
    slopes = np.abs(np.diff(ys[top:]) / np.diff(xs[top:])) if top < xs.size - 1 else np.zeros(1)
    below = np.flatnonzero((ys < xs) & (xs > 0))
    witness = float(xs[below[0]]) if below.size else None
    return ContractionDiagnostics(violations, float(xs[top]), float(slopes.max()), witness)


# --------------------------------------------------------------------------
# builtin test maps (strictly concave on [0, 4], zero beyond)


def f1(x: float) -> float:
    return 4.0 - (x - 2.0) ** 2 if 0.0 <= x <= 4.0 else 0.0


def f2(x: float) -> float:
    return f1(x) / 2.0


BUILTINS = {
    "f1": FixedPointProblem(f1, a_bar=4.0, lipschitz_L=4.0, name="f1"),
    "f2": FixedPointProblem(f2, a_bar=4.0, lipschitz_L=2.0, name="f2"),
}
