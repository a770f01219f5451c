"""Estimate latent monthly state GDP growth from mixed-frequency data.

A synthetic three-state economy is simulated: monthly indicators, quarterly
national GDP, and state GDP that is observed annually early in the sample
and quarterly after a break.  The two-step sampler first estimates a
quarterly system carrying the annual constraints, then cycles its latent
quarterly draws into a monthly system with the cross-sectional adding-up
identity.  The posterior-mean monthly paths are compared against the truth
the simulator recorded, and the quarterly aggregation identity is checked
on a retained draw.
"""

import numpy as np

from statemf.aggregation import triangle_weights
from statemf.evaluation import estimate_draws
from statemf.mfvar import McmcSettings
from statemf.simulate import DgpConfig, full_model_definition, simulate_world

config = DgpConfig(n_states=3, n_months=216, start="1994-01",
                   break_month="2003-01")
world = simulate_world(config, seed=7)
print(f"simulated {config.n_states} states over {config.n_months} months; "
      f"state GDP switches from annual to quarterly at {config.break_month}")

mcmc = McmcSettings(burn=100, keep=50, thin=1)
model = full_model_definition(world, mcmc, mcmc_quarterly=mcmc)
draws, _ = estimate_draws(model, world.panel, np.random.default_rng(0))

paths = draws.insample_paths()           # (n_keep, T, n_variables)
posterior_mean = paths.mean(axis=0)
col = {v: j for j, v in enumerate(draws.spec.variables)}

print("\ncorrelation of posterior-mean monthly growth with the truth:")
for sid in ("us",) + world.state_ids():
    est = posterior_mean[:, col[f"{sid}_gdp_m"]]
    truth = world.truth[f"{sid}_gdp_m"]
    print(f"  {sid:3s}  corr = {np.corrcoef(est, truth)[0, 1]:.3f}")

# every retained draw reproduces observed quarterly GDP exactly through the
# (1/3, 2/3, 1, 2/3, 1/3) triangle
t3 = triangle_weights(3)
sid = world.state_ids()[0]
lat = paths[0][:, col[f"{sid}_gdp_m"]]
qobs = world.panel.values[[m.id for m in world.panel.metas]
                          .index(f"{sid}_gdp_q")]
worst = max(abs(float(t3 @ lat[t - 4:t + 1][::-1]) - qobs[t])
            for t in range(4, qobs.size) if np.isfinite(qobs[t]))
print(f"\nworst quarterly aggregation residual on a draw: {worst:.2e}")
