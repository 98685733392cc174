"""Factor copula stochastic volatility toolkit.

Simulation, Bayesian fitting (HMC within Gibbs, with linking-family
selection) and one-day-ahead portfolio VaR forecasting for the single
factor copula model with stochastic volatility margins.
"""

__version__ = "0.1.0"

from .bicop import CopulaFamily, PairCopula  # noqa: F401
