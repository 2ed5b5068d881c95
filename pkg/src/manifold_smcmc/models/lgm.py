"""Linear Gaussian benchmark model.

Dynamics average the state, X_k = B X_{k-1} + sigma nu_k with
B = (1/d) * ones, and the first coordinate is observed exactly.  The
degenerate Kalman filter is exact here, which makes the model the main
correctness benchmark.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError
from .base import GaussianTransitionTable, ModelSpec


def lgm_matrices(dim_x: int, sigma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Observation, transition, and noise matrices (A, B, C)."""
    a = np.zeros((1, dim_x))
    a[0, 0] = 1.0
    b = np.full((dim_x, dim_x), 1.0 / dim_x)
    c = sigma * np.eye(dim_x)
    return a, b, c


def lgm_spec(dim_x: int = 20, sigma: float = 0.1) -> ModelSpec:
    if dim_x < 2:
        raise ContractViolationError("lgm requires dim_x >= 2")
    a, b, c = lgm_matrices(dim_x, sigma)

    def table(k, prev_states):
        return GaussianTransitionTable.isotropic(prev_states @ b.T, sigma)

    return ModelSpec(
        name="lgm",
        dim_x=dim_x,
        dim_y=1,
        transition_table=table,
        simulate_step=lambda k, x, rng: b @ x + sigma * rng.standard_normal(dim_x),
        observe=lambda x: x[:1].copy(),
        observe_jacobian=lambda x: a,
        initial_state=np.zeros(dim_x),
        constant_jacobian=True,
        extras={"A": a, "B": b, "C": c, "sigma": sigma},
    )
