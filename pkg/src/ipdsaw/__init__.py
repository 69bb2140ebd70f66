"""Exact numerics for the interacting partially directed self-avoiding walk."""
from .kernels import BACKEND
from .law import WalkLaw, beta_c, gamma_factor, phi_growth, sigma2
from .polymer import ModelKind, StretchConfig

__version__ = "0.1.0"
__all__ = ["BACKEND", "ModelKind", "StretchConfig", "WalkLaw",
           "beta_c", "gamma_factor", "phi_growth", "sigma2"]
