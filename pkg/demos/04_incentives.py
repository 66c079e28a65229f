# %% [markdown]
# Who gains from deviating?
#
# Bidders may misreport and the block producer may reorder, drop or invent
# bids. Exhaustive search over small instances shows which mechanisms leave
# room for either.

# %%
from feelab.game import InstanceFamily, bidder_best_response, check_ic_dsic, miner_best_deviation
from feelab.market import PostedPriceMV, SecondPrice, truthful_bids

# %%
cases = [
    ("first-price", InstanceFamily()),
    ("second-price", InstanceFamily()),
    ("posted-mv", InstanceFamily(excess_demand=True)),
    ("posted-rm", InstanceFamily(excess_demand=True)),
    ("gsp-mod", InstanceFamily()),
]
for name, family in cases:
    rep = check_ic_dsic(name, family, trials=100, seed=0)
    print(f"{name:14s} bidders truthful: {rep.ic_holds!s:5s}  miner honest: {rep.dsic_holds}")

# %% [markdown]
# A second-price miner profits from a fake bid equal to the m-th highest
# real bid: it pushes up the price every winner pays.

# %%
rep = miner_best_deviation(SecondPrice(), truthful_bids([5, 4, 3]), 2)
print("honest revenue", rep.honest_utility, "best revenue", rep.best_utility)
print("announced:", [(b.bid, "fake" if b.is_fake else "real") for b in rep.best_announcement])

# %% [markdown]
# With a posted price and value-ordered allocation, a bidder who would
# lose at the margin can bid far above their value and still only pay the
# posted price.

# %%
grid = [float(b) for b in range(21)] + [100.0]
br = bidder_best_response(PostedPriceMV(10), truthful_bids([12]), 11.0, grid, 1)
print("truthful utility", br.truthful_utility, "best utility", br.best_utility, "with bids", br.best_bids)
