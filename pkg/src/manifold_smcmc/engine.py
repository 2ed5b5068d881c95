"""Sequential MCMC driver.

At each observation time the filter target is the Gram-weighted mixture of
transition densities from the previous particle cloud, restricted to the new
constraint manifold.  Rather than paying for the full N-term mixture at every
density evaluation, the chain runs on an auxiliary joint target over the
state and a small subset of previous-particle indices: a
Metropolis-within-Gibbs composition alternates the constrained random-walk
move on the state with a Metropolis move on the index subset.  Summing the
auxiliary target over all subsets recovers the full mixture, so the state
marginal is unchanged while each evaluation costs only the subset size.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diagnostics import ess_per_coordinate
from .errors import ContractViolationError, InitializationError
from .geometry import (
    ConstraintSystem,
    NewtonConfig,
    evaluate_constraint,
    gram_log_weight,
    project_to_manifold,
)
from .kernel import KernelConfig, KernelStepRecord, kernel_step
from .models import ModelSpec, preconditioned_model
from .rng import FILTER_STREAM, stream
from .validation import as_vector

# Initialization retries: Gaussian perturbations of the seed at growing scale.
_INIT_SCALES = (0.1, 1.0, 10.0)
_INIT_ATTEMPTS_PER_SCALE = 10


@dataclass
class ParticleCloud:
    """States of one observation time, one row per retained MCMC sweep."""

    time_index: int
    states: np.ndarray
    acceptance_rate: float
    ess: float
    wall_time: float

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    def mean(self) -> np.ndarray:
        return self.states.mean(axis=0)

    def std(self) -> np.ndarray:
        return self.states.std(axis=0, ddof=1)


@dataclass(frozen=True)
class IndexSet:
    """Ordered subset of distinct previous-particle indices (0-based)."""

    indices: np.ndarray
    n_total: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1 or idx.size == 0:
            raise ContractViolationError("index set must be a nonempty vector")
        if len(set(idx.tolist())) != idx.size:
            raise ContractViolationError("index set entries must be distinct")
        if idx.min() < 0 or idx.max() >= self.n_total:
            raise ContractViolationError("index out of range")

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class SmcmcConfig:
    """Filter-level settings: cloud size, subset size, burn-in, kernel."""

    n_particles: int
    subset_size: int
    kernel: KernelConfig
    burn_in: Optional[int] = None
    index_moves_per_sweep: int = 1

    def __post_init__(self):
        if self.n_particles < 1:
            raise ContractViolationError("n_particles must be positive")
        if not (1 <= self.subset_size <= self.n_particles):
            raise ContractViolationError("subset_size must lie in {1, ..., n_particles}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ContractViolationError("burn_in must be nonnegative")
        if self.index_moves_per_sweep < 1:
            raise ContractViolationError("index_moves_per_sweep must be >= 1")

    @property
    def effective_burn_in(self) -> int:
        return self.burn_in if self.burn_in is not None else int(0.1 * self.n_particles)


@dataclass
class StepDiagnostics:
    time_index: int
    acceptance_rate: float
    ess_median: float
    ess_min: float
    wall_time: float


@dataclass
class FilterRun:
    """Everything a filter run produced: clouds, diagnostics, provenance."""

    clouds: list[ParticleCloud]
    diagnostics: list[StepDiagnostics]
    seed: int
    model_name: str
    config: SmcmcConfig

    def means(self) -> np.ndarray:
        return np.array([c.mean() for c in self.clouds])

    def stds(self) -> np.ndarray:
        return np.array([c.std() for c in self.clouds])


def _logsumexp(values: np.ndarray) -> float:
    m = float(np.max(values))
    if not np.isfinite(m):
        return -np.inf
    return m + math.log(float(np.sum(np.exp(values - m))))


def aux_target_log_density(
    x, idx: IndexSet, prev: ParticleCloud, model: ModelSpec, sys: ConstraintSystem
) -> float:
    """Log of the auxiliary target: Gram weight times the subset mixture.

    Returns -inf when every mixture component vanishes, which simply forces a
    Metropolis rejection upstream.
    """
    if idx.n_total != prev.n_particles:
        raise ContractViolationError("index set sized for a different cloud")
    table = model.transition_table(prev.time_index + 1, prev.states)
    x = as_vector(x, model.dim_x, "x")
    return gram_log_weight(sys, x) + _logsumexp(table.logpdf(x, idx.indices))


def _draw_replacement(idx_set: set, n_total: int, rng) -> int:
    """Uniform draw from the complement of the current index set."""
    while True:
        candidate = int(rng.integers(n_total))
        if candidate not in idx_set:
            return candidate


class _AuxTarget:
    """Target callback that caches the breakdown of its latest evaluation.

    The kernel evaluates the target at most once per step (at the proposal),
    so after an accepted step ``last_*`` describe the new state; the sweeper
    relies on that to update its caches without re-evaluating.
    """

    def __init__(self, table, sys, indices):
        self.table = table
        self.sys = sys
        self.indices = indices
        self.last_point = None
        self.last_log_g = None
        self.last_log_f = None
        self.last_value = None

    def __call__(self, x):
        self.last_point = x
        self.last_log_g = gram_log_weight(self.sys, x)
        self.last_log_f = self.table.logpdf(x, self.indices)
        self.last_value = self.last_log_g + _logsumexp(self.last_log_f)
        return self.last_value


class _Sweeper:
    """Metropolis-within-Gibbs sweep for one observation time.

    Holds the chain state, the index subset, and cached pieces of the target
    (the log Gram weight at the current state and the per-index transition
    log densities).  With ``naive=True`` every sweep recomputes the caches
    from scratch; results are identical bit for bit, which the tests assert.
    """

    def __init__(self, table, sys, x0, indices, n_total, cfg, rng, naive=False):
        self.table = table
        self.sys = sys
        self.cfg = cfg
        self.rng = rng
        self.naive = naive
        self.n_total = n_total
        self.x = np.asarray(x0, dtype=float)
        self.indices = np.asarray(indices, dtype=np.int64).copy()
        self.index_set = set(self.indices.tolist())
        self.target = _AuxTarget(table, sys, self.indices)
        self.log_g = gram_log_weight(sys, self.x)
        self.log_f = table.logpdf(self.x, self.indices)
        self.accepted_state_moves = 0

    def _current_value(self) -> float:
        return self.log_g + _logsumexp(self.log_f)

    def _refresh(self):
        self.log_g = gram_log_weight(self.sys, self.x)
        self.log_f = self.table.logpdf(self.x, self.indices)

    def state_move(self) -> KernelStepRecord:
        if self.naive:
            self._refresh()
        self.target.indices = self.indices
        x_new, record = kernel_step(
            self.target, self.sys, self.x, self.cfg.kernel, self.rng,
            log_density_x=self._current_value(),
        )
        if record.accepted:
            self.accepted_state_moves += 1
            self.x = x_new
            # The proposal was the last point the target callback saw.
            assert self.target.last_point is x_new
            self.log_g = self.target.last_log_g
            self.log_f = self.target.last_log_f
        return record

    def index_moves(self):
        s = self.indices.size
        if s == self.n_total:
            return
        for _ in range(self.cfg.index_moves_per_sweep):
            if self.naive:
                self._refresh()
            position = int(self.rng.integers(s))
            candidate = _draw_replacement(self.index_set, self.n_total, self.rng)
            new_log_f = self.table.logpdf(self.x, np.array([candidate]))[0]
            proposed = self.log_f.copy()
            proposed[position] = new_log_f
            log_ratio = _logsumexp(proposed) - _logsumexp(self.log_f)
            if math.log(self.rng.random()) < log_ratio:
                self.index_set.discard(int(self.indices[position]))
                self.index_set.add(candidate)
                self.indices[position] = candidate
                self.log_f = proposed

    def sweep(self) -> KernelStepRecord:
        record = self.state_move()
        self.index_moves()
        return record


def index_mh_step(
    x, idx: IndexSet, prev: ParticleCloud, model: ModelSpec, sys: ConstraintSystem,
    rng: np.random.Generator, moves: int = 1,
) -> IndexSet:
    """Metropolis update of the index subset with the state held fixed.

    Proposal: replace one uniformly chosen position with a uniform draw from
    the unused indices; the Gram factor cancels, so the ratio is the ratio of
    subset mixture sums.  With subset size N this is a no-op.
    """
    if idx.n_total != prev.n_particles:
        raise ContractViolationError("index set sized for a different cloud")
    table = model.transition_table(prev.time_index + 1, prev.states)
    cfg = SmcmcConfig(
        n_particles=prev.n_particles,
        subset_size=idx.size,
        kernel=KernelConfig(rho=1.0),
        index_moves_per_sweep=moves,
    )
    sweeper = _Sweeper(table, sys, x, idx.indices, prev.n_particles, cfg, rng)
    sweeper.index_moves()
    return IndexSet(sweeper.indices.copy(), prev.n_particles)


def composed_kernel_step(
    x, idx: IndexSet, prev: ParticleCloud, model: ModelSpec, sys: ConstraintSystem,
    cfg: SmcmcConfig, rng: np.random.Generator,
) -> tuple[np.ndarray, IndexSet, KernelStepRecord]:
    """One full sweep: state move given the subset, then subset moves given the state."""
    table = model.transition_table(prev.time_index + 1, prev.states)
    sweeper = _Sweeper(table, sys, x, idx.indices, prev.n_particles, cfg, rng)
    record = sweeper.sweep()
    return sweeper.x, IndexSet(sweeper.indices.copy(), prev.n_particles), record


def init_state(
    sys: ConstraintSystem,
    seed_point,
    rng: Optional[np.random.Generator] = None,
    newton: NewtonConfig = NewtonConfig(),
) -> np.ndarray:
    """Place a point on the manifold by Newton from the seed.

    The root solve moves along the normal directions of the seed's Jacobian.
    If it fails (for instance at a singular point), the seed is retried with
    Gaussian perturbations of growing scale before giving up.
    """
    seed_point = as_vector(seed_point, sys.dim_x, "seed_point")
    zero = np.zeros(sys.dim_x)
    point = project_to_manifold(sys, seed_point, zero, newton)
    if point is not None:
        return point
    if rng is None:
        raise InitializationError(
            "Newton initialization failed and no rng was supplied for restarts"
        )
    base_scale = max(1.0, float(np.max(np.abs(seed_point))))
    for scale in _INIT_SCALES:
        for _ in range(_INIT_ATTEMPTS_PER_SCALE):
            perturbed = seed_point + scale * base_scale * rng.standard_normal(sys.dim_x)
            point = project_to_manifold(sys, perturbed, zero, newton)
            if point is not None:
                return point
    raise InitializationError(
        f"could not project seed onto the constraint manifold; residual at seed "
        f"{np.max(np.abs(evaluate_constraint(sys, seed_point))):.3e}, "
        f"tried {len(_INIT_SCALES) * _INIT_ATTEMPTS_PER_SCALE} perturbed restarts"
    )


def estimate(cloud: ParticleCloud, phi: Callable[[np.ndarray], float]) -> float:
    """Monte Carlo estimate of a scalar function under the cloud."""
    if cloud.n_particles == 0:
        raise ContractViolationError("cannot estimate from an empty cloud")
    return float(np.mean([phi(row) for row in cloud.states]))


def run_filter(
    model: ModelSpec,
    observations,
    cfg: SmcmcConfig,
    seed: int,
    precondition: Optional[np.ndarray] = None,
    naive: bool = False,
    on_step: Optional[Callable[[ParticleCloud], None]] = None,
) -> FilterRun:
    """Run the sequential filter over an observation sequence.

    The first time targets the Gram-weighted transition from the fixed
    initial state with the plain constrained kernel; later times run the
    composed kernel against the previous cloud for burn-in plus n_particles
    sweeps, retaining the last n_particles states.  Per-step cost is a fixed
    number of subset-sized density evaluations, so the method is online.

    ``precondition`` applies the linear change of variables x = P v before
    kernel entry; outputs are mapped back to the original coordinates.
    """
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    if observations.size == 0:
        raise ContractViolationError("observations must be nonempty")
    if observations.shape[1] != model.dim_y:
        raise ContractViolationError(
            f"observations have dimension {observations.shape[1]}, model expects {model.dim_y}"
        )
    work = model if precondition is None else preconditioned_model(model, precondition)
    transform = None if precondition is None else np.asarray(precondition, dtype=float)

    n, burn = cfg.n_particles, cfg.effective_burn_in
    clouds: list[ParticleCloud] = []
    diagnostics: list[StepDiagnostics] = []
    prev_states: Optional[np.ndarray] = None
    chain_seed = np.asarray(work.initial_state, dtype=float)
    for k in range(1, observations.shape[0] + 1):
        rng = stream(seed, FILTER_STREAM, k, 0)
        sys = ConstraintSystem(
            work.dim_x, work.dim_y, observations[k - 1], work.observe,
            work.observe_jacobian, constant_jacobian=work.constant_jacobian,
        )
        started = time.perf_counter()
        x0 = init_state(sys, chain_seed, rng=rng, newton=cfg.kernel.newton)
        if k == 1:
            table = work.transition_table(1, np.asarray(work.initial_state)[None, :])
            indices = np.array([0])
            n_total = 1
        else:
            table = work.transition_table(k, prev_states)
            indices = np.arange(cfg.subset_size)
            n_total = n
        sweeper = _Sweeper(table, sys, x0, indices, n_total, cfg, rng, naive=naive)
        for _ in range(burn):
            sweeper.sweep()
        states = np.empty((n, work.dim_x))
        accepted = 0
        for i in range(n):
            record = sweeper.sweep()
            accepted += record.accepted
            states[i] = sweeper.x
        wall = time.perf_counter() - started

        ambient = states if transform is None else states @ transform.T
        # Coordinates pinned exactly by the constraint (for example the
        # observed entries under a selection observation) carry no chain
        # information; ESS is reported over the varying coordinates.
        varying = np.ptp(ambient, axis=0) > 0
        if n >= 10 and np.any(varying):
            coord_ess = ess_per_coordinate(ambient[:, varying])
        else:
            coord_ess = np.ones(1)
        cloud = ParticleCloud(
            time_index=k,
            states=ambient,
            acceptance_rate=accepted / n,
            ess=float(np.median(coord_ess)),
            wall_time=wall,
        )
        clouds.append(cloud)
        diagnostics.append(
            StepDiagnostics(
                time_index=k,
                acceptance_rate=cloud.acceptance_rate,
                ess_median=float(np.median(coord_ess)),
                ess_min=float(np.min(coord_ess)),
                wall_time=wall,
            )
        )
        if on_step is not None:
            on_step(cloud)
        prev_states = states
        chain_seed = sweeper.x
    return FilterRun(
        clouds=clouds,
        diagnostics=diagnostics,
        seed=int(seed),
        model_name=model.name,
        config=cfg,
    )
