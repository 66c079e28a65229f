import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from feelab.fixedpoint import (
    BUILTINS,
    FixedPointProblem,
    check_concave_contraction,
    f1,
    f2,
    iterate_to_fixed_point,
    mixture,
)

TOL = 1e-6


def test_mixture_endpoints_and_value():
    assert mixture(f1, 0.0)(1.3) == 1.3
    assert mixture(f1, 1.0)(1.3) == f1(1.3)
    assert mixture(f1, 0.4)(1.0) == pytest.approx(1.8)


@pytest.mark.parametrize("name,expected", [("f1", 3.0), ("f2", 2.0)])
@pytest.mark.parametrize("x0", [0.1, 4.0])
def test_builtin_fixed_points_unclamped(name, expected, x0):
    problem = BUILTINS[name]
    p = FixedPointProblem(problem.f, problem.a_bar, problem.lipschitz_L, 0.4, name)
    rep = iterate_to_fixed_point(p, x0, tol=TOL, clamp_alpha=False)
    assert rep.converged and not rep.alpha_clamped
    assert rep.x_star == pytest.approx(expected, abs=1e-5)
    assert rep.residual <= TOL * max(1, rep.x_star)


def test_alpha_clamped_to_lipschitz_bound():
    p = FixedPointProblem(f1, 4.0, 4.0, 0.4)
    rep = iterate_to_fixed_point(p, 0.1, tol=TOL)
    assert rep.alpha_clamped and rep.alpha == pytest.approx(0.2)
    assert rep.x_star == pytest.approx(3.0, abs=1e-5)


def test_zero_map_converges_to_zero():
    rep = iterate_to_fixed_point(FixedPointProblem(lambda x: 0.0, 1.0, 1.0), 1.0, tol=1e-9)
    assert rep.converged and rep.x_star < 1e-8


def test_non_convergence_is_reported_with_tail():
    # alternating map: g(x) = 0.5 * (10 - x) + 0.5 * x is constant; use a 2-cycle instead
    p = FixedPointProblem(lambda x: 4.0 if x < 2 else 0.0, 4.0, alpha=0.75)
    rep = iterate_to_fixed_point(p, 1.0, tol=1e-9, max_iter=200, clamp_alpha=False, tail=10)
    assert not rep.converged and rep.iterations == 200
    assert len(rep.trajectory) == 10 and "not met" in rep.message


def test_input_validation():
    p = BUILTINS["f1"]
    with pytest.raises(ValueError):
        iterate_to_fixed_point(p, 0.0)
    with pytest.raises(ValueError):
        iterate_to_fixed_point(p, 1.0, tol=0)
    with pytest.raises(ValueError):
        FixedPointProblem(f1, a_bar=math.inf)


def test_noisy_mode_converges_near_root():
    rng = np.random.default_rng(0)
    noisy = FixedPointProblem(lambda x: f2(x) + rng.normal(0, 0.01), 4.0, 2.0)
    rep = iterate_to_fixed_point(noisy, 0.1, tol=TOL, noisy=True, noise_samples=64)
    assert rep.converged and rep.x_star == pytest.approx(2.0, abs=0.02)


def test_logged_trajectory_starts_at_x0():
    rep = iterate_to_fixed_point(BUILTINS["f2"], 0.1, log_trajectory=True)
    assert rep.trajectory[0] == 0.1 and rep.trajectory[-1] == rep.x_star
    assert len(rep.trajectory) == rep.iterations + 1


def grid(hi):
    return np.round(np.arange(0, hi + 1e-9, 0.05), 10)


def test_contraction_check_on_reference_map():
    d = check_concave_contraction(mixture(f1, 0.4), grid(4.0))
    assert d.concavity_violations == []
    assert d.witness == pytest.approx(3.05)
    # at alpha = 0.4 > 1/(L+1) the decreasing branch is steeper than 1 - alpha
    assert d.decreasing_slope == pytest.approx(0.98, abs=1e-9)


def test_contraction_check_with_admissible_alpha():
    d = check_concave_contraction(mixture(f1, 0.2), grid(4.0))
    assert d.decreasing_slope <= 0.8
    assert d.witness == pytest.approx(3.05)


def test_contraction_check_flags_kink_past_support():
    d = check_concave_contraction(mixture(f1, 0.4), grid(4.5))
    assert [tuple(map(float, t)) for t in d.concavity_violations] == [(3.95, 4.0, 4.05)]


def test_contraction_check_identity_and_convex():
    assert check_concave_contraction(lambda x: x, grid(4.0)).witness is None
    assert check_concave_contraction(mixture(lambda x: (x - 2) ** 2, 0.5), grid(4.0)).concavity_violations


# random nonincreasing piecewise-linear kernels


@st.composite
def decreasing_kernels(draw):
    k = draw(st.integers(1, 6))
    knots = sorted(draw(st.lists(st.floats(0, 100), min_size=k, max_size=k, unique=True)))
    slopes = draw(st.lists(st.floats(0, 20), min_size=k + 1, max_size=k + 1))
    top = draw(st.floats(0, 1000))
    xs = np.concatenate([[0.0], knots, [max(knots[-1], 0) + 100.0]])
    ys = [top]
    for i in range(1, len(xs)):
        ys.append(ys[-1] - slopes[i - 1] * (xs[i] - xs[i - 1]))
    ys = np.maximum(np.array(ys), 0.0)
    L = max(slopes) or 1.0
    return (lambda x, xs=xs, ys=ys: float(np.interp(x, xs, ys))), L


@settings(max_examples=100, deadline=None)
@given(decreasing_kernels(), st.lists(st.tuples(st.floats(0, 250), st.floats(0, 250)), min_size=20, max_size=20))
def test_mixture_is_contractive(kernel, pairs):
    f, L = kernel
    alpha = 1.0 / (L + 1.0)
    g = mixture(f, alpha)
    for x, y in pairs:
        assert abs(g(x) - g(y)) <= (1 - alpha) * abs(x - y) + 1e-12


@st.composite
def concave_parabolas(draw):
    # f(x) = a - b (x - c)^2 clipped at 0, with f(0) >= 0 and peak value a < c
    c = draw(st.floats(1, 5))
    a = draw(st.floats(0.1 * c, 0.95 * c))
    b = draw(st.floats(0.01, 1)) * a / c**2
    a_bar = c + math.sqrt(a / b)
    L = max(2 * b * c, 2 * math.sqrt(a * b))

    def f(x):
        return max(0.0, a - b * (x - c) ** 2) if x <= a_bar else 0.0

    def slope(x):
        return -2 * b * (x - c)

    return FixedPointProblem(f, a_bar, L), slope


@settings(max_examples=40, deadline=None)
@given(concave_parabolas(), st.lists(st.floats(0.01, 10), min_size=20, max_size=20))
def test_unique_positive_fixed_point_and_monotone_entry(problem_and_peak, starts):
    problem, slope = problem_and_peak
    g = mixture(problem.f, problem.alpha_bound)
    results = []
    for x0 in starts:
        rep = iterate_to_fixed_point(problem, x0, tol=TOL, log_trajectory=True)
        assert rep.converged
        results.append(rep.x_star)
        assert abs(problem.f(rep.x_star) - rep.x_star) <= TOL / rep.alpha * max(1, rep.x_star) + 1e-12
        traj = np.array(rep.trajectory)
        inside = np.flatnonzero([g(x) >= x for x in traj])
        if inside.size:
            assert np.all(np.diff(traj[inside[0]:]) >= -1e-12)
    # the stop rule bounds the step; distance to the root is step * rho / (1 - rho)
    x = max(results)
    kappa = problem.alpha_bound * (1 - slope(x))
    assert max(results) - min(results) <= 2 * TOL * max(1, x) / kappa


@pytest.mark.parametrize("name", ["f1", "f2"])
def test_random_starts_agree_on_reference_maps(name):
    starts = np.random.default_rng(5).uniform(0.01, 4.0, size=20)
    xs = [iterate_to_fixed_point(BUILTINS[name], x0, tol=TOL).x_star for x0 in starts]
    assert max(xs) - min(xs) <= 10 * TOL
