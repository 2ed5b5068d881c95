"""Model interface shared by the reference state-space models.

A model supplies its transition density through a *table*: given the previous
particle cloud it precomputes whatever is reusable (conditional means, noise
factors) once, after which single evaluations are cheap row-wise operations.
The sequential filter leans on this, since each MCMC sweep only touches a
small subset of the previous cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
import scipy.linalg

from ..errors import ContractViolationError


class TransitionTable(Protocol):
    """Conditional transition log densities against a fixed previous cloud."""

    def logpdf(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Log f(x_prev[row], x) for each requested row; shape (len(rows),)."""
        ...


@dataclass
class ModelSpec:
    """A state-space model with exact observations.

    ``transition_table(k, prev_states)`` builds the table of transition
    densities from time k-1 states to time k.  ``observe`` and
    ``observe_jacobian`` give the observation map and its analytic Jacobian;
    finite differences never appear on the sampling path.
    ``constant_jacobian`` marks position-independent observation Jacobians,
    which lets downstream geometry reuse frames.
    """

    name: str
    dim_x: int
    dim_y: int
    transition_table: Callable[[int, np.ndarray], TransitionTable]
    simulate_step: Callable[[int, np.ndarray, np.random.Generator], np.ndarray]
    observe: Callable[[np.ndarray], np.ndarray]
    observe_jacobian: Callable[[np.ndarray], np.ndarray]
    initial_state: np.ndarray
    constant_jacobian: bool = False
    extras: dict = field(default_factory=dict)

    def transition_logpdf(self, k: int, x_prev, x) -> float:
        """Scalar log f_k(x_prev, x); convenience wrapper over the table."""
        prev = np.asarray(x_prev, dtype=float)[None, :]
        table = self.transition_table(k, prev)
        return float(table.logpdf(np.asarray(x, dtype=float), np.array([0]))[0])


class GaussianTransitionTable:
    """Gaussian transitions sharing one covariance across rows.

    Means and evaluation points are stored whitened, so a row's value never
    depends on how many rows are evaluated together.
    """

    def __init__(self, whitened_means, whiten, log_norm):
        self._whitened_means = whitened_means
        self._whiten = whiten
        self._log_norm = log_norm

    @classmethod
    def isotropic(cls, means: np.ndarray, sigma: float) -> "GaussianTransitionTable":
        d = means.shape[1]
        log_norm = -0.5 * d * np.log(2.0 * np.pi * sigma * sigma)
        return cls(means / sigma, lambda x: x / sigma, log_norm)

    @classmethod
    def correlated(cls, means: np.ndarray, chol_lower: np.ndarray) -> "GaussianTransitionTable":
        d = means.shape[1]
        log_norm = -0.5 * d * np.log(2.0 * np.pi) - float(
            np.sum(np.log(np.diag(chol_lower)))
        )
        whiten = lambda x: scipy.linalg.solve_triangular(chol_lower, x, lower=True)
        return cls(
            scipy.linalg.solve_triangular(chol_lower, means.T, lower=True).T,
            whiten,
            log_norm,
        )

    def logpdf(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        diff = self._whiten(x) - self._whitened_means[rows]
        return self._log_norm - 0.5 * np.sum(diff * diff, axis=1)


def simulate_path(
    model: ModelSpec, n_steps: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a trajectory of length ``n_steps`` and its exact observations."""
    if n_steps < 1:
        raise ContractViolationError("n_steps must be at least 1")
    states = np.empty((n_steps, model.dim_x))
    observations = np.empty((n_steps, model.dim_y))
    x = np.asarray(model.initial_state, dtype=float)
    for k in range(1, n_steps + 1):
        x = model.simulate_step(k, x, rng)
        states[k - 1] = x
        observations[k - 1] = model.observe(x)
    return states, observations


def preconditioned_model(model: ModelSpec, transform: np.ndarray) -> ModelSpec:
    """Re-express a model in the coordinates ``v`` with ``x = P v``.

    Running the filter on the transformed model with the identity metric is
    the same as using the metric (P P^T)^-1 on the original state; it changes
    mixing only, not the filtering distribution.
    """
    p = np.asarray(transform, dtype=float)
    if p.shape != (model.dim_x, model.dim_x):
        raise ContractViolationError("transform must be a square state-dimension matrix")
    sign, logdet = np.linalg.slogdet(p)
    if sign <= 0 and not np.isclose(abs(sign), 1.0):
        raise ContractViolationError("transform must be invertible")
    logdet = float(logdet)

    def table_builder(k, prev_v):
        inner = model.transition_table(k, prev_v @ p.T)

        class _Wrapped:
            def logpdf(self, v, rows):
                return inner.logpdf(p @ v, rows) + logdet

        return _Wrapped()

    return ModelSpec(
        name=f"{model.name}[preconditioned]",
        dim_x=model.dim_x,
        dim_y=model.dim_y,
        transition_table=table_builder,
        simulate_step=lambda k, v, rng: np.linalg.solve(p, model.simulate_step(k, p @ v, rng)),
        observe=lambda v: model.observe(p @ v),
        observe_jacobian=lambda v: model.observe_jacobian(p @ v) @ p,
        initial_state=np.linalg.solve(p, np.asarray(model.initial_state, dtype=float)),
        constant_jacobian=model.constant_jacobian,
        extras={"transform": p, "base_model": model},
    )
