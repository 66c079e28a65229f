# %% [markdown]
# Fixed points of concave maps and of the mechanism kernels
#
# Iterating the mixture x <- alpha f(x) + (1 - alpha) x converges to the
# positive fixed point of a concave f when alpha is small enough compared to
# f's Lipschitz constant.

# %%
from feelab.dynamics import TWDPP, WDPP, UpdateParams
from feelab.experiments import solve_equilibrium_price, welfare_bound_check
from feelab.fixedpoint import BUILTINS, FixedPointProblem, iterate_to_fixed_point
from feelab.values import Exponential, Uniform

# %%
for name in ("f1", "f2"):
    base = BUILTINS[name]
    for alpha in (0.4, None):
        problem = FixedPointProblem(base.f, base.a_bar, base.lipschitz_L, alpha, name)
        rep = iterate_to_fixed_point(problem, 0.1, tol=1e-6, clamp_alpha=False)
        print(f"{name} alpha={rep.alpha:.3f}: x* = {rep.x_star:.6f} after {rep.iterations} steps")

# %% [markdown]
# The same solver applied to a Monte-Carlo estimate of each mechanism's
# expected next price gives its equilibrium price. We then check the welfare
# of posting that price against the optimum.

# %%
params = UpdateParams(alpha=1 / 16, delta=1.0, m=100)
for dist in (Uniform(0, 200), Exponential(100)):
    for mech in (WDPP, TWDPP):
        q_star, _ = solve_equilibrium_price(mech, dist, 200, params, samples=10_000)
        chk = welfare_bound_check(dist, 200, 100, params, q_star.value, mech, samples=20_000)
        print(f"{type(dist).__name__:12s} {mech.name:6s} q* = {q_star.value:7.2f}  "
              f"welfare/optimum = {chk.ratio:.3f}  (guaranteed >= {chk.bound_factor})")
