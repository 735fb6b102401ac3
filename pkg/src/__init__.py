"""
DiffLab - Desk-scale Diffusion Laboratory

Compares noise schedules, sampling parametrizations, deterministic versus
stochastic diffusion and discrete-state diffusion against a mixture of two
Gaussians whose scores are known exactly.
"""

__version__ = "0.1.0"
