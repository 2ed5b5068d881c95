"""Reversible random-walk Metropolis kernel on a constraint manifold.

One step: draw a Gaussian move in the tangent space at the current point,
project it back onto the manifold by Newton, verify the move is reversible by
re-running the same projection backwards, then accept or reject with a
Metropolis-Hastings ratio taken with respect to the surface measure.
Projection or reversibility failures count as rejections.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolationError
from .geometry import (
    ConstraintSystem,
    NewtonConfig,
    evaluate_constraint,
    project_to_manifold,
    split_tangent_normal,
    tangent_frame,
)
from .validation import check_positive, check_probability

# Recovered reverse point must match the chain state this tightly; looser than
# the Newton tolerance to absorb round-off in the recovery path.
REVERSE_CHECK_TOL = 1e-8

# Re-verify reversibility on every 100th accepted move (outside the step, so
# the check consumes no randomness and cannot perturb the chain).
_POST_HOC_CHECK_EVERY = 100


class RejectionReason(enum.Enum):
    NONE = "none"
    PROJECTION_FAILED = "projection_failed"
    REVERSE_CHECK_FAILED = "reverse_check_failed"
    MH_REJECTED = "mh_rejected"


@dataclass(frozen=True)
class KernelConfig:
    """Proposal scale and projection settings for the constrained kernel."""

    rho: float
    newton: NewtonConfig = NewtonConfig()
    target_acceptance: float = 0.234

    def __post_init__(self):
        check_positive(self.rho, "rho")
        check_probability(self.target_acceptance, "target_acceptance")


@dataclass(frozen=True)
class KernelStepRecord:
    """Outcome of a single kernel step.

    ``log_ratio`` is the Metropolis-Hastings log ratio, NaN when the proposal
    died before the accept/reject stage.
    """

    accepted: bool
    rejection_reason: RejectionReason
    log_ratio: float


def tangent_gaussian_logpdf(coefficients: np.ndarray, rho: float) -> float:
    """Log density of the tangent proposal in its coefficient coordinates.

    The ambient proposal N(0, rho^2 U^T U) is rank deficient, so it is
    evaluated as an isotropic Gaussian on the tangent coefficients z = U v / rho,
    which equals the proposal's density with respect to the tangent-space
    Lebesgue measure.
    """
    k = coefficients.size
    return -0.5 * float(coefficients @ coefficients) - 0.5 * k * math.log(
        2.0 * math.pi * rho * rho
    )


def kernel_step(
    target_log_density: Callable[[np.ndarray], float],
    sys: ConstraintSystem,
    x: np.ndarray,
    cfg: KernelConfig,
    rng: np.random.Generator,
    log_density_x: Optional[float] = None,
) -> tuple[np.ndarray, KernelStepRecord]:
    """Advance the chain by one constrained random-walk Metropolis step.

    ``target_log_density`` is the unnormalized log density with respect to
    the surface measure (for filter targets it already includes the log Gram
    weight).  When ``log_density_x`` is passed, the target is evaluated only
    at the proposal; callers may rely on the proposal being the last point the
    callback sees within a step.
    """
    if np.max(np.abs(evaluate_constraint(sys, x))) > cfg.newton.tol:
        raise ContractViolationError("kernel_step requires a state on the manifold")

    frame_x = tangent_frame(sys, x)
    z = rng.standard_normal(sys.dim_x - sys.dim_y)
    v = cfg.rho * (frame_x.tangent_basis.T @ z)

    proposal = project_to_manifold(sys, x, v, cfg.newton)
    if proposal is None:
        return x, KernelStepRecord(False, RejectionReason.PROJECTION_FAILED, float("nan"))

    frame_y = tangent_frame(sys, proposal)
    v_rev, _ = split_tangent_normal(frame_y, x - proposal)
    recovered = project_to_manifold(sys, proposal, v_rev, cfg.newton)
    if recovered is None or np.max(np.abs(recovered - x)) > REVERSE_CHECK_TOL:
        return x, KernelStepRecord(False, RejectionReason.REVERSE_CHECK_FAILED, float("nan"))

    lp_x = target_log_density(x) if log_density_x is None else log_density_x
    lp_y = target_log_density(proposal)
    z_rev = (frame_y.tangent_basis @ v_rev) / cfg.rho
    log_ratio = (
        lp_y
        + tangent_gaussian_logpdf(z_rev, cfg.rho)
        - lp_x
        - tangent_gaussian_logpdf(z, cfg.rho)
    )
    if math.log(rng.random()) < log_ratio:
        return proposal, KernelStepRecord(True, RejectionReason.NONE, float(log_ratio))
    return x, KernelStepRecord(False, RejectionReason.MH_REJECTED, float(log_ratio))


def _assert_reversible(sys, cfg, x_old, x_new):
    """Post-hoc reverse check for an accepted move; raises on violation."""
    frame_new = tangent_frame(sys, x_new)
    v_rev, _ = split_tangent_normal(frame_new, x_old - x_new)
    recovered = project_to_manifold(sys, x_new, v_rev, cfg.newton)
    if recovered is None or np.max(np.abs(recovered - x_old)) > REVERSE_CHECK_TOL:
        raise AssertionError("accepted move failed the post-hoc reverse projection check")


def run_chain(
    target_log_density: Callable[[np.ndarray], float],
    sys: ConstraintSystem,
    x0: np.ndarray,
    n_steps: int,
    cfg: KernelConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Run the kernel for ``n_steps`` and return (states, acceptance rate).

    All visited states are stored, one row per step.  An empty run returns a
    (0, dim_x) array with acceptance 0.
    """
    states = np.empty((n_steps, sys.dim_x))
    if n_steps == 0:
        return states, 0.0
    x = np.asarray(x0, dtype=float)
    lp = target_log_density(x)
    accepted = 0
    for i in range(n_steps):
        x_new, record = kernel_step(target_log_density, sys, x, cfg, rng, log_density_x=lp)
        if record.accepted:
            accepted += 1
            if accepted % _POST_HOC_CHECK_EVERY == 0:
                _assert_reversible(sys, cfg, x, x_new)
            x = x_new
            lp = target_log_density(x)
        states[i] = x
    return states, accepted / n_steps


def adapt_rho(
    cfg: KernelConfig,
    pilot_target: Callable[[np.ndarray], float],
    sys: ConstraintSystem,
    x0: np.ndarray,
    rng: np.random.Generator,
    pilot_steps: int = 2000,
    window: int = 100,
) -> float:
    """Tune the proposal scale toward the configured acceptance rate.

    Stochastic-approximation update log rho += t^-0.6 (acc_t - target) over
    pilot windows; the returned scale is frozen afterwards so the measured
    chain keeps its exact invariance.
    """
    if pilot_steps < 500:
        raise ContractViolationError("pilot budget must be at least 500 steps")
    rho = cfg.rho
    x = np.asarray(x0, dtype=float)
    n_windows = pilot_steps // window
    for t in range(1, n_windows + 1):
        states, acc = run_chain(pilot_target, sys, x, window, replace(cfg, rho=rho), rng)
        x = states[-1]
        rho = float(np.exp(np.log(rho) + t ** (-0.6) * (acc - cfg.target_acceptance)))
    return rho
