"""Mixed-frequency Bayesian VAR toolkit for monthly state GDP estimation.

Subpackages:
    panel       -- mixed-frequency, ragged-edge, vintage-stamped data panels
    transform   -- stationarity transforms, backcasting, state weights
    statespace  -- Kalman filter and simulation smoother
    aggregation -- intertemporal and cross-sectional constraint rows
    prior       -- horseshoe prior Gibbs updates
    mfvar       -- the two-step mixed-frequency VAR sampler and nowcasts
    analysis    -- connectedness and business-cycle dating
    evaluation  -- recursive pseudo-real-time scoring harness
    simulate    -- synthetic data generators
"""

__version__ = "0.1.0"
