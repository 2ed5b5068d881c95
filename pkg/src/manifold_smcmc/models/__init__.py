"""Reference state-space models with exact observations."""

from .base import (
    GaussianTransitionTable,
    ModelSpec,
    TransitionTable,
    preconditioned_model,
    simulate_path,
)
from .fhn import fhn_taylor15_spec, hessian_trace_correction
from .ks import MaternConfig, ks_preconditioner, ks_spec, matern_covariance
from .lgm import lgm_matrices, lgm_spec
from .sphere import sphere_spec

__all__ = [
    "GaussianTransitionTable",
    "MaternConfig",
    "ModelSpec",
    "TransitionTable",
    "fhn_taylor15_spec",
    "hessian_trace_correction",
    "ks_preconditioner",
    "ks_spec",
    "lgm_matrices",
    "lgm_spec",
    "matern_covariance",
    "preconditioned_model",
    "simulate_path",
    "sphere_spec",
]
