"""Discrete Malliavin calculus on random-walk approximations of Brownian motion."""
from .noise import NoiseSpec, binary_noise, custom_noise, sample
from .paths import CoupledPath, WalkPath, simulate_coupled_binary, simulate_walk, walk_value
from .functionals import DiscreteProcessFn, RandomVariableFn
from .kernels import DiscreteKernel, StepFunction
from .walsh import WalshVector

__version__ = "0.1.0"

__all__ = [
    "NoiseSpec", "binary_noise", "custom_noise", "sample",
    "WalkPath", "CoupledPath", "simulate_walk", "simulate_coupled_binary", "walk_value",
    "RandomVariableFn", "DiscreteProcessFn", "DiscreteKernel", "StepFunction", "WalshVector",
]
