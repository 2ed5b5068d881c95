"""Gaussian dynamics observed through the squared norm.

The observation h(x) = ||x||^2 constrains each filtering distribution to a
sphere.  At the first observation time the filter is exactly uniform on the
sphere of radius sqrt(y_1) (isotropic transition from the origin, constant
Gram weight), which gives a closed-form correctness check.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError
from .base import GaussianTransitionTable, ModelSpec


def sphere_spec(dim_x: int = 100, sigma: float = 0.5) -> ModelSpec:
    # The source description of the noise matrix is ambiguous ("C = I with
    # sigma = 0.5"); we read it as C = sigma * I, matching the linear model.
    if dim_x < 2:
        raise ContractViolationError("sphere model requires dim_x >= 2")
    b_diag = 0.5

    def table(k, prev_states):
        return GaussianTransitionTable.isotropic(b_diag * prev_states, sigma)

    return ModelSpec(
        name="sphere",
        dim_x=dim_x,
        dim_y=1,
        transition_table=table,
        simulate_step=lambda k, x, rng: b_diag * x + sigma * rng.standard_normal(dim_x),
        observe=lambda x: np.array([float(x @ x)]),
        observe_jacobian=lambda x: 2.0 * x[None, :],
        initial_state=np.zeros(dim_x),
        extras={"B": b_diag * np.eye(dim_x), "C": sigma * np.eye(dim_x), "sigma": sigma},
    )
