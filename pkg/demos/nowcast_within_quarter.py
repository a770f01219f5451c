"""Nowcast a quarter's state GDP as information accumulates.

The panel is truncated to what a forecaster would have seen at the end of
each month of 2003Q3 (the release calendar delays quarterly state GDP by
three months and monthly indicators by one).  At each vintage the model is
re-estimated and the predictive distribution of the quarter's growth is
drawn; the predictive standard deviation shrinks as the quarter's monthly
indicators arrive.
"""

import numpy as np

from statemf.evaluation import estimate_draws
from statemf.mfvar import McmcSettings, nowcast
from statemf.panel import truncate_to_vintage
from statemf.simulate import DgpConfig, full_model_definition, simulate_world

world = simulate_world(DgpConfig(n_states=3, n_months=132, start="1994-01",
                                 break_month=None), seed=3)
mcmc = McmcSettings(burn=100, keep=60, thin=1)
# the simulated economy has one-month memory, so a short lag order keeps
# the desk-scale posterior tight
model = full_model_definition(world, mcmc, p=2, two_step=False)

target_quarter = np.datetime64("2003-09", "M")
sid = world.state_ids()[0]
outturn_col = [m.id for m in world.panel.metas].index(f"{sid}_gdp_q")
outturn = world.panel.values[outturn_col][
    world.panel.months == target_quarter][0]
print(f"target: {sid} GDP growth in the quarter ending {target_quarter} "
      f"(outturn {outturn:+.3f})")

for vintage in ("2003-07", "2003-08", "2003-09"):
    panel = truncate_to_vintage(world.panel, world.calendar, vintage)
    rng = np.random.default_rng(1)
    draws, _ = estimate_draws(model, panel, rng)
    dists = nowcast(panel, model.monthly_spec, draws,
                    [(f"{sid}_gdp_m", target_quarter)], rng)
    sample = np.asarray(dists[0].samples)
    print(f"  vintage {vintage}: mean {sample.mean():+.3f}  "
          f"sd {sample.std(ddof=1):.3f}  "
          f"error {sample.mean() - outturn:+.3f}")
