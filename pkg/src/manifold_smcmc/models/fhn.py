"""FitzHugh-Nagumo neuron model, discretized by a strong order 1.5 Taylor scheme.

The SDE has scalar Wiener noise entering the recovery variable only, so the
one-step transition is a nondegenerate bivariate Gaussian: the scheme's two
noise terms span the plane because the drift Jacobian mixes the coordinates.
The membrane potential (first coordinate) is observed exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError
from .base import GaussianTransitionTable, ModelSpec

_COND_LIMIT = 1e14


def _drift_terms(x1, x2, eps, gamma, beta):
    """Drift and the state-dependent Jacobian entry, vectorized."""
    a1 = (x1 - x1**3 - x2) / eps
    a2 = gamma * x1 - x2 + beta
    da11 = (1.0 - 3.0 * x1 * x1) / eps
    return a1, a2, da11


def hessian_trace_correction(x, sigma, eps, delta):
    """The scheme's 0.25 * delta^4 * tr(Hess(a_i) B B^T) vector.

    Kept in its general form even though it vanishes identically for this
    drift: B B^T weights only the (2,2) Hessian entries and both drift
    components are linear in the recovery variable.
    """
    x = np.asarray(x, dtype=float)
    hess_a1 = np.array([[-6.0 * x[0] / eps, 0.0], [0.0, 0.0]])
    hess_a2 = np.zeros((2, 2))
    bbt = np.array([[0.0, 0.0], [0.0, sigma * sigma]])
    return 0.25 * delta**4 * np.array([np.trace(hess_a1 @ bbt), np.trace(hess_a2 @ bbt)])


def fhn_taylor15_spec(
    sigma: float = 0.5,
    eps: float = 0.2,
    gamma: float = 1.5,
    beta: float = 0.5,
    delta: float = 0.05,
) -> ModelSpec:
    for name, value in [("sigma", sigma), ("eps", eps), ("delta", delta)]:
        if value <= 0:
            raise ContractViolationError(f"{name} must be positive")

    # The noise columns depend on the drift Jacobian only through its second
    # column, which is constant, so the transition covariance is too.
    jac_b = sigma * np.array([-1.0 / eps, -1.0])
    g1 = np.sqrt(delta) * np.array([0.0, sigma]) + 0.5 * delta**1.5 * jac_b
    g2 = 0.5 * delta**1.5 * jac_b / np.sqrt(3.0)
    noise_matrix = np.column_stack([g1, g2])
    cov = noise_matrix @ noise_matrix.T
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= 0 or eigvals[1] / eigvals[0] > _COND_LIMIT:
        raise ContractViolationError(
            f"transition covariance numerically singular for parameters "
            f"sigma={sigma}, eps={eps}, delta={delta}"
        )
    chol = np.linalg.cholesky(cov)

    def means(prev_states):
        x1 = prev_states[:, 0]
        x2 = prev_states[:, 1]
        a1, a2, da11 = _drift_terms(x1, x2, eps, gamma, beta)
        daa1 = da11 * a1 + (-1.0 / eps) * a2
        daa2 = gamma * a1 + (-1.0) * a2
        out = np.empty_like(prev_states)
        # The Hessian-trace correction of the scheme is omitted from the sum:
        # it is identically zero for this drift (see hessian_trace_correction),
        # which the test suite asserts.
        out[:, 0] = x1 + delta * a1 + 0.5 * delta**2 * daa1
        out[:, 1] = x2 + delta * a2 + 0.5 * delta**2 * daa2
        return out

    def table(k, prev_states):
        return GaussianTransitionTable.correlated(means(prev_states), chol)

    def simulate(k, x, rng):
        w = rng.standard_normal(2)
        return means(np.asarray(x, dtype=float)[None, :])[0] + noise_matrix @ w

    return ModelSpec(
        name="fhn",
        dim_x=2,
        dim_y=1,
        transition_table=table,
        simulate_step=simulate,
        observe=lambda x: x[:1].copy(),
        observe_jacobian=lambda x: np.array([[1.0, 0.0]]),
        initial_state=np.zeros(2),
        constant_jacobian=True,
        extras={
            "noise_matrix": noise_matrix,
            "cov": cov,
            "sigma": sigma,
            "eps": eps,
            "gamma": gamma,
            "beta": beta,
            "delta": delta,
            "mean_fn": lambda x: means(np.asarray(x, dtype=float)[None, :])[0],
        },
    )
