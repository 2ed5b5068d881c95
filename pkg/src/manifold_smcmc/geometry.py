"""Geometry of an observation-constraint manifold.

At each observation time the filtering distribution lives on the level set
``{x : y - h(x) = 0}``.  This module bundles the constraint residual, its
Jacobian, the Gram weight relating ambient and surface densities, orthonormal
tangent frames, and the Newton projection used by the constrained kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolationError, SingularJacobianError
from .validation import as_vector, spd_cholesky

# Smallest |R_ii| of the constraint Jacobian's QR before we declare rank loss.
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class NewtonConfig:
    """Settings for the projection root finder.

    Convergence requires the max-norm residual to drop below ``tol``.
    Divergence is declared after ``divergence_window`` consecutive iterations
    with a growing residual; the projection then reports failure rather than
    raising, because a failed projection is a normal rejection upstream.
    """

    tol: float = 1e-10
    max_iter: int = 50
    divergence_window: int = 5


class ConstraintSystem:
    """Observation constraint ``c(x) = y - h(x)`` with its ambient metric.

    Parameters
    ----------
    dim_x, dim_y : int
        State and observation dimensions; ``dim_y < dim_x`` is required so the
        level set is a proper submanifold.
    observation : array, shape (dim_y,)
        The observed value ``y``.
    h : callable
        Observation map from R^dim_x to R^dim_y.
    h_jacobian : callable
        Analytic Jacobian of ``h``; shape (dim_y, dim_x).
    metric : array or None
        Positive-definite metric matrix, identity when omitted.  It enters the
        Gram weight only; tangent frames use the Euclidean embedding.
    constant_jacobian : bool
        Set when ``h_jacobian`` does not depend on the point, which lets
        frames, Gram weights, and Newton systems be computed once and reused.
        The cached values are bit-identical to recomputation.
    """

    def __init__(self, dim_x, dim_y, observation, h, h_jacobian, metric=None,
                 constant_jacobian=False):
        if dim_x <= 0 or dim_y <= 0:
            raise ContractViolationError("dimensions must be positive")
        if dim_y >= dim_x:
            raise ContractViolationError(
                f"need dim_y < dim_x for a submanifold, got dim_y={dim_y}, dim_x={dim_x}"
            )
        self.dim_x = int(dim_x)
        self.dim_y = int(dim_y)
        self.observation = as_vector(observation, dim_y, "observation")
        self.h = h
        self.h_jacobian = h_jacobian
        self.metric = None if metric is None else np.asarray(metric, dtype=float)
        # Factor once; also proves the metric is SPD.
        self._metric_chol = None if self.metric is None else spd_cholesky(self.metric, "metric")
        self.constant_jacobian = bool(constant_jacobian)
        self._jacobian_cache = None
        self._tangent_cache = None
        self._log_gram_cache = None


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal tangent basis and constraint-Jacobian rows at a point.

    ``tangent_basis`` has shape (dim_x - dim_y, dim_x) with orthonormal rows
    spanning the tangent space; ``normal_basis`` is the Jacobian ``dc(x)``
    whose rows span the normal space.
    """

    base_point: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray


def evaluate_constraint(sys: ConstraintSystem, x) -> np.ndarray:
    """Residual ``y - h(x)``; the zero vector exactly on the manifold."""
    x = as_vector(x, sys.dim_x, "x")
    return sys.observation - as_vector(sys.h(x), sys.dim_y, "h(x)")


def constraint_jacobian(sys: ConstraintSystem, x) -> np.ndarray:
    """Jacobian of the residual, ``-dh(x)``, shape (dim_y, dim_x)."""
    if sys.constant_jacobian and sys._jacobian_cache is not None:
        return sys._jacobian_cache
    x = as_vector(x, sys.dim_x, "x")
    jac = np.asarray(sys.h_jacobian(x), dtype=float)
    if jac.shape != (sys.dim_y, sys.dim_x):
        raise ContractViolationError(
            f"h_jacobian must return shape {(sys.dim_y, sys.dim_x)}, got {jac.shape}"
        )
    jac = -jac
    if sys.constant_jacobian:
        sys._jacobian_cache = jac
    return jac


def gram_log_weight(sys: ConstraintSystem, x) -> float:
    """Log of the Gram weight det(dc M^-1 dc^T)^(-1/2).

    Computed from the Cholesky factor of the Gram matrix, so large
    observation dimensions do not underflow.
    """
    if sys.constant_jacobian and sys._log_gram_cache is not None:
        return sys._log_gram_cache
    jac = constraint_jacobian(sys, x)
    if sys.metric is None:
        gram = jac @ jac.T
    else:
        # J M^-1 J^T through the cached Cholesky factor of M.
        half = np.linalg.solve(sys._metric_chol, jac.T)
        gram = half.T @ half
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobianError(
            f"constraint Gram matrix not positive definite at x={x}"
        ) from exc
    value = -float(np.sum(np.log(np.diag(chol))))
    if sys.constant_jacobian:
        sys._log_gram_cache = value
    return value


def gram_weight(sys: ConstraintSystem, x) -> float:
    """Gram weight itself; prefer :func:`gram_log_weight` inside targets."""
    return float(np.exp(gram_log_weight(sys, x)))


def tangent_frame(sys: ConstraintSystem, x) -> TangentFrame:
    """Orthonormal tangent frame from the full QR of ``dc(x)^T``.

    The first ``dim_y`` columns of Q get their signs fixed so the diagonal of
    R is nonnegative, which makes frames deterministic across runs.
    """
    x = as_vector(x, sys.dim_x, "x")
    if sys.constant_jacobian and sys._tangent_cache is not None:
        basis, jac = sys._tangent_cache
        return TangentFrame(base_point=x, tangent_basis=basis, normal_basis=jac)
    jac = constraint_jacobian(sys, x)
    q, r = np.linalg.qr(jac.T, mode="complete")
    diag = np.diag(r)
    if np.min(np.abs(diag)) <= _RANK_TOL:
        raise SingularJacobianError(f"constraint Jacobian is rank deficient at x={x}")
    signs = np.where(diag < 0, -1.0, 1.0)
    q = q.copy()
    q[:, : sys.dim_y] *= signs
    basis = q[:, sys.dim_y :].T
    if sys.constant_jacobian:
        sys._tangent_cache = (basis, jac)
    return TangentFrame(base_point=x, tangent_basis=basis, normal_basis=jac)


def split_tangent_normal(frame: TangentFrame, w) -> tuple[np.ndarray, np.ndarray]:
    """Split an ambient vector into tangent and normal components at the frame."""
    w = as_vector(w, frame.tangent_basis.shape[1], "w")
    tangent = frame.tangent_basis.T @ (frame.tangent_basis @ w)
    return tangent, w - tangent


def project_to_manifold(
    sys: ConstraintSystem,
    base,
    shift,
    cfg: NewtonConfig = NewtonConfig(),
) -> Optional[np.ndarray]:
    """Solve ``c(base + shift + dc(base)^T a) = 0`` for ``a`` by Newton.

    Returns the projected point, or None when the iteration hits its budget,
    diverges, or meets a singular system.  Non-convergence is an expected
    outcome (it triggers a rejection in the kernel), never an exception.
    """
    base = as_vector(base, sys.dim_x, "base")
    shift = as_vector(shift, sys.dim_x, "shift")
    jac_base_t = constraint_jacobian(sys, base).T

    x = base + shift
    a = np.zeros(sys.dim_y)
    c = evaluate_constraint(sys, x)
    prev_norm = np.max(np.abs(c))
    growth = 0
    system_const = jac_base_t.T @ jac_base_t if sys.constant_jacobian else None
    for _ in range(cfg.max_iter):
        norm = np.max(np.abs(c))
        if not np.isfinite(norm):
            return None
        if norm <= cfg.tol:
            return x
        system = (
            system_const
            if system_const is not None
            else constraint_jacobian(sys, x) @ jac_base_t
        )
        try:
            step = np.linalg.solve(system, c)
        except np.linalg.LinAlgError:
            return None
        a = a - step
        x = base + shift + jac_base_t @ a
        c = evaluate_constraint(sys, x)
        norm = np.max(np.abs(c))
        if norm > prev_norm:
            growth += 1
            if growth >= cfg.divergence_window:
                return None
        else:
            growth = 0
        prev_norm = norm
    if np.max(np.abs(c)) <= cfg.tol:
        return x
    return None


def on_manifold(sys: ConstraintSystem, x, tol: float) -> bool:
    """True when the max-norm residual at ``x`` is within ``tol``."""
    return bool(np.max(np.abs(evaluate_constraint(sys, x))) <= tol)
