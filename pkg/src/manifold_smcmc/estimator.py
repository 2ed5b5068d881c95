"""Estimator-style front end so the filter composes with sklearn pipelines."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import SmcmcConfig, init_state, run_filter
from .errors import ConfigError
from .geometry import ConstraintSystem, NewtonConfig, gram_log_weight
from .kernel import KernelConfig, adapt_rho
from .models import ModelSpec
from .rng import TUNING_STREAM, stream


class SMCMCFilter(BaseEstimator, TransformerMixin):
    """Sequential MCMC filter for state-space models with exact observations.

    ``fit(X)`` treats the rows of X as the observation sequence, runs the
    filter, and exposes the per-step particle clouds and summaries as fitted
    attributes.  ``transform(X)`` returns the filtered state means, so the
    filter slots into pipelines that map an observed sequence to a denoised
    latent sequence.

    Parameters
    ----------
    model : ModelSpec
        The state-space model (transition density, simulator, observation map).
    n_particles : int
        Retained MCMC sweeps per observation time.
    subset_size : int
        Size of the previous-particle subset conditioning each density
        evaluation; larger mixes better but costs proportionally more.
    rho : float or "auto"
        Tangent proposal scale; "auto" tunes it on the first observation's
        target before filtering and then freezes it.
    burn_in : int or None
        Discarded sweeps per observation time; None means 10% of n_particles.
    target_acceptance : float
        Acceptance rate targeted by automatic tuning.
    index_moves_per_sweep : int
        Subset-replacement proposals after each state move.
    precondition : array or None
        Linear change of variables x = P v applied before kernel entry.
    random_state : int
        Seed for all streams; runs are bit-reproducible.
    """

    def __init__(
        self,
        model: Optional[ModelSpec] = None,
        n_particles: int = 1000,
        subset_size: int = 10,
        rho="auto",
        burn_in: Optional[int] = None,
        target_acceptance: float = 0.234,
        index_moves_per_sweep: int = 1,
        precondition: Optional[np.ndarray] = None,
        random_state: int = 0,
    ):
        self.model = model
        self.n_particles = n_particles
        self.subset_size = subset_size
        self.rho = rho
        self.burn_in = burn_in
        self.target_acceptance = target_acceptance
        self.index_moves_per_sweep = index_moves_per_sweep
        self.precondition = precondition
        self.random_state = random_state

    def _validated_observations(self, X) -> np.ndarray:
        if self.model is None:
            raise ConfigError("SMCMCFilter needs a model")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.model.dim_y:
            raise ConfigError(
                f"observations have {X.shape[1]} columns, model emits {self.model.dim_y}"
            )
        return X

    def _resolve_rho(self, observations: np.ndarray) -> float:
        if self.rho != "auto":
            return float(self.rho)
        model = self.model
        sys = ConstraintSystem(
            model.dim_x, model.dim_y, observations[0], model.observe,
            model.observe_jacobian, constant_jacobian=model.constant_jacobian,
        )
        table = model.transition_table(1, np.asarray(model.initial_state)[None, :])

        def pilot_target(x):
            return gram_log_weight(sys, x) + float(table.logpdf(x, np.array([0]))[0])

        rng = stream(self.random_state, TUNING_STREAM)
        x0 = init_state(sys, np.asarray(model.initial_state, dtype=float), rng=rng)
        cfg = KernelConfig(rho=0.1, target_acceptance=self.target_acceptance)
        return adapt_rho(cfg, pilot_target, sys, x0, rng)

    def fit(self, X, y=None):
        observations = self._validated_observations(X)
        rho = self._resolve_rho(observations)
        cfg = SmcmcConfig(
            n_particles=self.n_particles,
            subset_size=self.subset_size,
            kernel=KernelConfig(rho=rho, target_acceptance=self.target_acceptance),
            burn_in=self.burn_in,
            index_moves_per_sweep=self.index_moves_per_sweep,
        )
        run = run_filter(
            self.model, observations, cfg, self.random_state, precondition=self.precondition
        )
        self.n_features_in_ = observations.shape[1]
        self.rho_ = rho
        self.observations_ = observations
        self.filter_run_ = run
        self.filtered_means_ = run.means()
        self.filtered_stds_ = run.stds()
        self.acceptance_rates_ = np.array([c.acceptance_rate for c in run.clouds])
        self.ess_ = np.array([c.ess for c in run.clouds])
        self.wall_times_ = np.array([c.wall_time for c in run.clouds])
        return self

    def transform(self, X) -> np.ndarray:
        """Filtered state means for the observation sequence X."""
        check_is_fitted(self, "filter_run_")
        observations = self._validated_observations(X)
        if np.array_equal(observations, self.observations_):
            return self.filtered_means_.copy()
        return type(self)(**self.get_params()).fit(observations).filtered_means_

    def predict(self, X) -> np.ndarray:
        return self.transform(X)
