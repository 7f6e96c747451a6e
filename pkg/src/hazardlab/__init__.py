"""Duration analysis of stock-market decline spells.

Parametric survival regression (exponential, Weibull, gamma, generalized
gamma, log-normal; AFT and PH metrics; gamma and inverse-Gaussian frailty),
Cox partial likelihood, nonparametric curves, residual diagnostics and a
reproducible study pipeline.
"""

__version__ = "0.1.0"
