"""Random-walk kernels for linear observations, with and without noise.

For Y = A X + sqrt(delta) eps the solution set of the observation equation is
an affine subspace, so the sampler can run in unconstrained coordinates: a
particular solution plus an orthonormal kernel basis.  Two kernels result, one
on the augmented (state, noise) space for delta > 0 and one on the state
kernel for the exact-observation case, together with a numerical probe of how
the first converges to the second as delta shrinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ContractViolationError
from .models import ModelSpec
from .validation import as_vector

_KERNEL_RTOL = 1e-12


@dataclass(frozen=True)
class LinearObservation:
    """Linear observation Y = A X + sqrt(delta) eps with full-row-rank A."""

    matrix: np.ndarray
    observation: np.ndarray
    delta: float

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] >= a.shape[1]:
            raise ContractViolationError("need a d_y x d_x matrix with d_y < d_x")
        if np.linalg.svd(a, compute_uv=False)[-1] <= 1e-12:
            raise ContractViolationError("observation matrix must have full row rank")
        if self.delta < 0:
            raise ContractViolationError("delta must be nonnegative")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(
            self, "observation", as_vector(self.observation, a.shape[0], "observation")
        )


@dataclass(frozen=True)
class KernelParametrization:
    """Affine chart of the observation solution set.

    For delta = 0 the chart is u(z) = particular + basis z on the state space
    (basis: dim_x columns minus dim_y).  For delta > 0 it lives on the
    augmented space of dimension dim_x + dim_y and the basis has dim_x
    columns.  Basis columns are orthonormal.
    """

    particular_solution: np.ndarray
    basis: np.ndarray
    delta: float
    dim_x: int
    dim_y: int

    def map(self, z) -> np.ndarray:
        """Chart point for coordinates z."""
        z = np.asarray(z, dtype=float)
        return self.particular_solution + self.basis @ z

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        """State and noise blocks of the augmented chart point (delta > 0)."""
        if self.delta == 0:
            raise ContractViolationError("split applies to the augmented chart only")
        u = self.map(z)
        return u[: self.dim_x], u[self.dim_x :]


def build_parametrization(obs: LinearObservation) -> KernelParametrization:
    """Particular solution and orthonormal kernel basis for the chart.

    The particular solution is the minimum-norm solve of A z = y, extended by
    zeros on the noise block when delta > 0; the basis spans ker(A) or
    ker([A, sqrt(delta) I]).
    """
    a = obs.matrix
    d_y, d_x = a.shape
    z_star, *_ = np.linalg.lstsq(a, obs.observation, rcond=None)
    if obs.delta == 0.0:
        basis = scipy.linalg.null_space(a)
        return KernelParametrization(z_star, basis, 0.0, d_x, d_y)
    stacked = np.hstack([a, math.sqrt(obs.delta) * np.eye(d_y)])
    basis = scipy.linalg.null_space(stacked)
    particular = np.concatenate([z_star, np.zeros(d_y)])
    return KernelParametrization(particular, basis, obs.delta, d_x, d_y)


def aligned_augmented_basis(
    obs: LinearObservation, degenerate: KernelParametrization
) -> KernelParametrization:
    """Augmented chart rotated onto the block target [[V*, 0], [0, I]].

    Kernel bases are unique only up to rotation; aligning them (orthogonal
    Procrustes) makes the small-delta limit visible at fixed coordinates.
    """
    if obs.delta <= 0:
        raise ContractViolationError("alignment applies to delta > 0")
    raw = build_parametrization(obs)
    d_x, d_y = raw.dim_x, raw.dim_y
    target = np.zeros((d_x + d_y, d_x))
    target[:d_x, : d_x - d_y] = degenerate.basis
    target[d_x:, d_x - d_y :] = np.eye(d_y)
    rotation, _ = scipy.linalg.orthogonal_procrustes(raw.basis, target)
    return KernelParametrization(
        raw.particular_solution, raw.basis @ rotation, raw.delta, d_x, d_y
    )


def _standard_normal_logpdf(v: np.ndarray) -> float:
    return -0.5 * float(v @ v) - 0.5 * v.size * math.log(2.0 * math.pi)


def _mixture_log(table, x: np.ndarray, n_prev: int) -> float:
    """log (1/N) sum_i f(x_prev_i, x)."""
    vals = table.logpdf(x, np.arange(n_prev))
    m = float(np.max(vals))
    if not np.isfinite(m):
        return -np.inf
    return m + math.log(float(np.mean(np.exp(vals - m))))


def low_noise_log_target(
    param: KernelParametrization, prev_states: np.ndarray, model: ModelSpec, k: int, z_tilde
) -> float:
    """Unnormalized log density of the noisy filter in chart coordinates."""
    if param.delta <= 0:
        raise ContractViolationError("low-noise target needs delta > 0")
    x_part, eps_part = param.split(z_tilde)
    table = model.transition_table(k, np.atleast_2d(prev_states))
    return _standard_normal_logpdf(eps_part) + _mixture_log(
        table, x_part, np.atleast_2d(prev_states).shape[0]
    )


def degenerate_log_target(
    param: KernelParametrization, prev_states: np.ndarray, model: ModelSpec, k: int, z
) -> float:
    """Unnormalized log density of the exact-observation filter in chart coordinates."""
    if param.delta != 0:
        raise ContractViolationError("degenerate target needs the delta = 0 chart")
    table = model.transition_table(k, np.atleast_2d(prev_states))
    return _mixture_log(table, param.map(z), np.atleast_2d(prev_states).shape[0])


def low_noise_acceptance(
    param, prev_states, model: ModelSpec, k: int, z_tilde, z_tilde_new
) -> float:
    """min{1, ratio} of the noisy kernel at a fixed proposed pair."""
    log_num = low_noise_log_target(param, prev_states, model, k, z_tilde_new)
    log_den = low_noise_log_target(param, prev_states, model, k, z_tilde)
    return min(1.0, math.exp(min(log_num - log_den, 0.0)) if log_num > -np.inf else 0.0)


def degenerate_acceptance(param, prev_states, model, k, z, z_new) -> float:
    """min{1, ratio} of the exact-observation kernel at a fixed proposed pair."""
    log_num = degenerate_log_target(param, prev_states, model, k, z_new)
    log_den = degenerate_log_target(param, prev_states, model, k, z)
    return min(1.0, math.exp(min(log_num - log_den, 0.0)) if log_num > -np.inf else 0.0)


def low_noise_step(
    z_tilde, prev_states, model, k, param, proposal_scale, rng
) -> tuple[np.ndarray, bool]:
    """Gaussian random-walk move for the noisy chart; returns (state, accepted)."""
    if param.delta <= 0:
        raise ContractViolationError("use degenerate_step when delta = 0")
    z_tilde = as_vector(z_tilde, param.dim_x, "z_tilde")
    proposal = z_tilde + proposal_scale * rng.standard_normal(param.dim_x)
    log_ratio = low_noise_log_target(
        param, prev_states, model, k, proposal
    ) - low_noise_log_target(param, prev_states, model, k, z_tilde)
    if math.log(rng.random()) < log_ratio:
        return proposal, True
    return z_tilde, False


def degenerate_step(
    z, prev_states, model, k, param, proposal_scale, rng
) -> tuple[np.ndarray, bool]:
    """Gaussian random-walk move on the exact-observation chart."""
    if param.delta != 0:
        raise ContractViolationError("degenerate_step needs the delta = 0 chart")
    z = as_vector(z, param.dim_x - param.dim_y, "z")
    proposal = z + proposal_scale * rng.standard_normal(z.size)
    log_ratio = degenerate_log_target(
        param, prev_states, model, k, proposal
    ) - degenerate_log_target(param, prev_states, model, k, z)
    if math.log(rng.random()) < log_ratio:
        return proposal, True
    return z, False


def limit_acceptance(
    degenerate_param, prev_z, model, k, z_tilde, z_tilde_new
) -> float:
    """Acceptance of the limiting kernel at fixed augmented coordinates.

    The limit splits z_tilde = (z, z_bar): the z block drives the state chart,
    the z_bar block only contributes standard Gaussian factors.
    """
    d_free = degenerate_param.dim_x - degenerate_param.dim_y
    z, z_bar = np.split(np.asarray(z_tilde, dtype=float), [d_free])
    z_new, z_bar_new = np.split(np.asarray(z_tilde_new, dtype=float), [d_free])
    log_num = _standard_normal_logpdf(z_bar_new) + degenerate_log_target(
        degenerate_param, prev_z, model, k, z_new
    )
    log_den = _standard_normal_logpdf(z_bar) + degenerate_log_target(
        degenerate_param, prev_z, model, k, z
    )
    return min(1.0, math.exp(min(log_num - log_den, 0.0)))


def convergence_probe(
    z_tilde,
    z_tilde_new,
    prev_states: np.ndarray,
    model: ModelSpec,
    k: int,
    matrix: np.ndarray,
    observation: np.ndarray,
    delta_grid: Sequence[float] = tuple(10.0 ** (-e) for e in range(1, 9)),
) -> list[dict]:
    """Acceptance gap between the noisy kernel and its zero-noise limit.

    ``prev_states`` holds the previous particles as plain state vectors, one
    row per particle; they enter both kernels identically, so the gap
    isolates the delta dependence of the current chart.  Each grid delta is
    evaluated with the augmented basis aligned to the degenerate chart
    (kernel bases are unique only up to rotation), and the rows report delta,
    both acceptance values, and the absolute gap.
    """
    deltas = list(delta_grid)
    if any(d <= 0 for d in deltas) or any(
        deltas[i] <= deltas[i + 1] for i in range(len(deltas) - 1)
    ):
        raise ContractViolationError("delta grid must be strictly decreasing and positive")
    degenerate = build_parametrization(LinearObservation(matrix, observation, 0.0))
    prev_states = np.atleast_2d(np.asarray(prev_states, dtype=float))
    acc_limit = limit_acceptance(degenerate, prev_states, model, k, z_tilde, z_tilde_new)
    rows = []
    for delta in deltas:
        param = aligned_augmented_basis(
            LinearObservation(matrix, observation, delta), degenerate
        )
        acc_delta = low_noise_acceptance(
            param, prev_states, model, k, z_tilde, z_tilde_new
        )
        rows.append(
            {
                "delta": delta,
                "acceptance_delta": acc_delta,
                "acceptance_limit": acc_limit,
                "gap": abs(acc_delta - acc_limit),
            }
        )
    return rows


def factorized_marginal_acceptance(
    degenerate_param, prev_z_states, model, k, z_tilde, z_tilde_new
) -> float:
    """Limiting acceptance under the factorized proposal q(z, z') p_N(z_bar').

    The Hastings correction for that proposal cancels the Gaussian z_bar
    factors, so the z marginal accepts exactly like the degenerate kernel.
    Both the numerator and denominator are evaluated in full, keeping the
    cancellation a numerical fact rather than an algebraic shortcut.
    """
    d_free = degenerate_param.dim_x - degenerate_param.dim_y
    z, z_bar = np.split(np.asarray(z_tilde, dtype=float), [d_free])
    z_new, z_bar_new = np.split(np.asarray(z_tilde_new, dtype=float), [d_free])
    log_target_ratio = (
        _standard_normal_logpdf(z_bar_new)
        + degenerate_log_target(degenerate_param, prev_z_states, model, k, z_new)
        - _standard_normal_logpdf(z_bar)
        - degenerate_log_target(degenerate_param, prev_z_states, model, k, z)
    )
    # Proposal ratio q(back) / q(forward); the symmetric z factors cancel,
    # leaving the Gaussian z_bar densities.
    log_proposal_ratio = _standard_normal_logpdf(z_bar) - _standard_normal_logpdf(z_bar_new)
    return min(1.0, math.exp(min(log_target_ratio + log_proposal_ratio, 0.0)))
