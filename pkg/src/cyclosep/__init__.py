"""Single-channel separation of two cyclostationary complex-Gaussian sources.

Simulation of mixtures with latent time offsets and interference gain,
Bayesian and linear estimators built on windowed covariance models, and a
Monte Carlo benchmark harness with reproducible file outputs.
"""

__version__ = "0.1.0"
