"""Spillover tables and business-cycle turning points from an estimated model.

After estimating the monthly system, each retained parameter draw implies a
reduced-form VAR; the generalized forecast-error-variance decomposition
(invariant to variable ordering) is averaged over stable draws into a
connectedness table.  Separately, a latent monthly growth path is cumulated
into a level index and run through the turning-point dating rules
(5-month extrema windows, 6-month minimum phase, 15-month minimum cycle).
"""

from dataclasses import replace

import numpy as np

from statemf.analysis import (
    connectedness_from,
    connectedness_to,
    date_cycles,
    generalized_fevd,
)
from statemf.evaluation import estimate_draws
from statemf.mfvar import McmcSettings
from statemf.simulate import DgpConfig, full_model_definition, simulate_world

world = simulate_world(DgpConfig(n_states=3, n_months=180, break_month=None),
                       seed=21)
model = full_model_definition(world, McmcSettings(burn=100, keep=50, thin=1),
                              two_step=False)
draws, _ = estimate_draws(model, world.panel, np.random.default_rng(2))
ids = draws.spec.variables

shares, used = None, 0
for params in draws.params:
    _, Phi, Omega = params.reduced_form()
    try:
        table = generalized_fevd(Phi, Omega, horizon=12)
    except ValueError:
        continue                      # skip explosive or singular draws
    shares = table.shares if shares is None else shares + table.shares
    used += 1
shares /= used
print(f"12-month-ahead connectedness, averaged over {used} draws:")
mean_table = replace(table, shares=shares)
for j, vid in enumerate(ids):
    print(f"  {vid:10s} from-others {connectedness_from(mean_table, j):.2f}"
          f"  to-others {connectedness_to(mean_table, j):.2f}")

# turning points of the national level index implied by the latent path
growth = draws.insample_paths().mean(axis=0)[:, ids.index("us_gdp_m")]
levels = 100.0 * np.cumprod(1.0 + growth)
points = date_cycles(levels)
months = world.panel.months
print("\nnational turning points:")
for p in points.peaks:
    print(f"  peak   {months[p]}")
for t in points.troughs:
    print(f"  trough {months[t]}")
