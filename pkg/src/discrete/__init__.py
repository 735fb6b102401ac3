"""Discrete-state diffusion: transition chains and the categorical demo."""

from src.discrete.chain import (
    TransitionChain,
    make_marginal_chain,
    make_uniform_chain,
    posterior,
    reverse_distribution,
)
from src.discrete.demo import DiscreteConfig, discrete_demo_run

__all__ = [
    "DiscreteConfig",
    "TransitionChain",
    "discrete_demo_run",
    "make_marginal_chain",
    "make_uniform_chain",
    "posterior",
    "reverse_distribution",
]
