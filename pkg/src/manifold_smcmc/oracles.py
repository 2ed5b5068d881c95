"""Ground-truth references used by tests and the CLI.

The degenerate Kalman filter is exact for the linear Gaussian benchmark, the
sphere marginal is a closed form, and the grid filter realizes the
prediction-update recursion by brute-force quadrature on the manifold
parametrization.  None of these touch the sampling code paths.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.special

from .errors import ContractViolationError
from .models import ModelSpec


@dataclass
class GaussianBelief:
    """Gaussian filtering state; the covariance may be singular because exact
    observations collapse it along the observed directions."""

    mean: np.ndarray
    covariance: np.ndarray


def kalman_step(
    belief: GaussianBelief,
    transition: np.ndarray,
    noise: np.ndarray,
    observation_matrix: np.ndarray,
    y: np.ndarray,
    obs_cov: Optional[np.ndarray] = None,
) -> GaussianBelief:
    """One predict-update cycle for X_k = B X_{k-1} + C nu, Y = A X + e.

    ``obs_cov`` is the observation noise covariance R; None means R = 0, the
    degenerate case, where the posterior mean satisfies A mean = y exactly.
    """
    b, c, a = transition, noise, observation_matrix
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean_pred = b @ belief.mean
    cov_pred = b @ belief.covariance @ b.T + c @ c.T
    innovation_cov = a @ cov_pred @ a.T
    if obs_cov is not None:
        innovation_cov = innovation_cov + obs_cov
    try:
        gain = np.linalg.solve(innovation_cov.T, (cov_pred @ a.T).T).T
    except np.linalg.LinAlgError as exc:
        raise ContractViolationError("singular innovation covariance") from exc
    mean = mean_pred + gain @ (y - a @ mean_pred)
    joseph = np.eye(b.shape[0]) - gain @ a
    cov = joseph @ cov_pred @ joseph.T
    if obs_cov is not None:
        cov = cov + gain @ obs_cov @ gain.T
    return GaussianBelief(mean=mean, covariance=0.5 * (cov + cov.T))


def kalman_degenerate_step(belief, transition, noise, observation_matrix, y):
    """Exact filter update for a noise-free observation (R = 0)."""
    return kalman_step(belief, transition, noise, observation_matrix, y, obs_cov=None)


def kalman_filter_path(
    model: ModelSpec, observations: np.ndarray, obs_cov: Optional[np.ndarray] = None
) -> list[GaussianBelief]:
    """Run the (degenerate) Kalman filter along a whole observation sequence.

    Requires a linear Gaussian model exposing A, B, C in its extras.
    """
    try:
        a, b, c = model.extras["A"], model.extras["B"], model.extras["C"]
    except KeyError as exc:
        raise ContractViolationError("model does not expose linear matrices") from exc
    belief = GaussianBelief(
        mean=np.asarray(model.initial_state, dtype=float),
        covariance=np.zeros((model.dim_x, model.dim_x)),
    )
    out = []
    for y in np.atleast_2d(observations):
        belief = kalman_step(belief, b, c, a, y, obs_cov=obs_cov)
        out.append(belief)
    return out


def sphere_coordinate_marginal_pdf(d: int, radius: float, t) -> np.ndarray:
    """Density of one coordinate under the uniform law on a sphere in R^d.

    Proportional to (1 - t^2/R^2)^((d-3)/2) on [-R, R]; the normalizer is the
    Beta-function constant Gamma(d/2) / (R sqrt(pi) Gamma((d-1)/2)).
    """
    if d < 3:
        raise ContractViolationError("coordinate marginal needs dimension >= 3")
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    log_norm = (
        scipy.special.gammaln(d / 2.0)
        - scipy.special.gammaln((d - 1) / 2.0)
        - 0.5 * np.log(np.pi)
        - np.log(radius)
    )
    inside = np.abs(t_arr) <= radius
    out = np.zeros_like(t_arr)
    u = np.clip(1.0 - (t_arr[inside] / radius) ** 2, 0.0, None)
    # d = 3 gives exponent zero: the flat 1/(2R) marginal.
    out[inside] = np.exp(log_norm + 0.5 * (d - 3) * np.log(np.maximum(u, 1e-300)))
    return float(out[0]) if scalar else out


def sphere_coordinate_marginal_cdf(d: int, radius: float, t) -> np.ndarray:
    """CDF companion of the coordinate marginal: (1 + t/R)/2 is Beta-distributed
    with both shape parameters (d-1)/2."""
    if d < 3:
        raise ContractViolationError("coordinate marginal needs dimension >= 3")
    t = np.asarray(t, dtype=float)
    u = np.clip((1.0 + t / radius) / 2.0, 0.0, 1.0)
    return scipy.special.betainc((d - 1) / 2.0, (d - 1) / 2.0, u)


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over the manifold coordinates z (dimension <= 2)."""

    lower: tuple
    upper: tuple
    points: int = 81


@dataclass
class GridMarginal:
    """One time step of the grid filter: coordinates, weights, density values."""

    z_nodes: np.ndarray        # (n_nodes, dim_z)
    weights: np.ndarray        # trapezoid quadrature weights, (n_nodes,)
    density: np.ndarray        # normalized pdf values on the nodes
    x_nodes: np.ndarray        # nodes mapped to the ambient state space

    def mean(self) -> np.ndarray:
        return (self.density * self.weights) @ self.x_nodes

    def std(self) -> np.ndarray:
        m = self.mean()
        second = (self.density * self.weights) @ (self.x_nodes - m) ** 2
        return np.sqrt(np.clip(second, 0.0, None))


def _axis_nodes_weights(lo, hi, n):
    nodes = np.linspace(lo, hi, n)
    w = np.full(n, nodes[1] - nodes[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return nodes, w


def grid_filter(
    model: ModelSpec,
    observations: np.ndarray,
    grid: GridSpec,
) -> list[GridMarginal]:
    """Brute-force filter for linear observations and at most 2 free dimensions.

    Each manifold is parametrized isometrically by z through the minimum-norm
    particular solution and an orthonormal kernel basis, so surface integrals
    become plain quadrature in z.  Prediction is a dense quadrature sum over
    the previous grid; the Gram factor is constant for linear constraints and
    cancels in the normalization, but is kept for fidelity.
    """
    from .geometry import ConstraintSystem, gram_log_weight
    from .linear_noise import LinearObservation, build_parametrization

    dim_z = model.dim_x - model.dim_y
    if dim_z > 2:
        raise ContractViolationError("grid filter supports at most 2 free dimensions")
    a_mat = np.asarray(model.observe_jacobian(np.zeros(model.dim_x)), dtype=float)

    axes = [_axis_nodes_weights(grid.lower[i], grid.upper[i], grid.points) for i in range(dim_z)]
    if dim_z == 1:
        z_nodes = axes[0][0][:, None]
        weights = axes[0][1]
    else:
        za, zb = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
        z_nodes = np.column_stack([za.ravel(), zb.ravel()])
        weights = np.outer(axes[0][1], axes[1][1]).ravel()

    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    steps: list[GridMarginal] = []
    prev: Optional[GridMarginal] = None
    for k, y in enumerate(observations, start=1):
        param = build_parametrization(LinearObservation(a_mat, y, 0.0))
        x_nodes = param.particular_solution[None, :] + z_nodes @ param.basis.T
        sys = ConstraintSystem(
            model.dim_x, model.dim_y, y, model.observe,
            model.observe_jacobian, constant_jacobian=model.constant_jacobian,
        )
        log_g = np.array([gram_log_weight(sys, x) for x in x_nodes])
        if prev is None:
            table = model.transition_table(1, np.asarray(model.initial_state)[None, :])
            log_pred = np.array([table.logpdf(x, np.array([0]))[0] for x in x_nodes])
        else:
            table = model.transition_table(k, prev.x_nodes)
            rows = np.arange(prev.x_nodes.shape[0])
            mass = prev.density * prev.weights
            log_pred = np.empty(x_nodes.shape[0])
            for i, x in enumerate(x_nodes):
                vals = table.logpdf(x, rows)
                m = np.max(vals)
                log_pred[i] = m + np.log(np.dot(mass, np.exp(vals - m)))
        log_post = log_g + log_pred
        log_post -= np.max(log_post)
        density = np.exp(log_post)
        total = float(density @ weights)
        density /= total
        edge = _edge_mass(density, weights, grid.points, dim_z)
        if edge > 1e-6:
            warnings.warn(
                f"grid filter boundary mass {edge:.2e} at step {k}; enlarge the grid",
                RuntimeWarning,
            )
        prev = GridMarginal(z_nodes=z_nodes, weights=weights, density=density, x_nodes=x_nodes)
        steps.append(prev)
    return steps


def _edge_mass(density, weights, points, dim_z):
    """Probability mass sitting on the outermost layer of grid nodes."""
    mass = density * weights
    if dim_z == 1:
        return float(mass[0] + mass[-1])
    grid_mass = mass.reshape(points, points)
    total = grid_mass[0, :].sum() + grid_mass[-1, :].sum()
    total += grid_mass[1:-1, 0].sum() + grid_mass[1:-1, -1].sum()
    return float(total)
