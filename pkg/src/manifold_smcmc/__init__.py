"""Sequential MCMC filtering on observation-constraint manifolds.

State-space models whose observations are an exact function of the hidden
state concentrate the filter on a zero-measure level set.  This package
represents those level sets explicitly, runs reversible constrained
random-walk kernels on them, and chains the kernels in time through a
subset-mixture target whose per-evaluation cost stays fixed as particles
accumulate.
"""

__version__ = "0.1.0"

from .diagnostics import ess, ess_per_coordinate, l2_error
from .engine import (
    FilterRun,
    IndexSet,
    ParticleCloud,
    SmcmcConfig,
    StepDiagnostics,
    aux_target_log_density,
    composed_kernel_step,
    estimate,
    index_mh_step,
    init_state,
    run_filter,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    InitializationError,
    SingularJacobianError,
)
from .estimator import SMCMCFilter
from .geometry import (
    ConstraintSystem,
    NewtonConfig,
    TangentFrame,
    constraint_jacobian,
    evaluate_constraint,
    gram_log_weight,
    gram_weight,
    project_to_manifold,
    split_tangent_normal,
    tangent_frame,
)
from .kernel import (
    KernelConfig,
    KernelStepRecord,
    RejectionReason,
    adapt_rho,
    kernel_step,
    run_chain,
)
from .linear_noise import (
    KernelParametrization,
    LinearObservation,
    build_parametrization,
    convergence_probe,
    degenerate_step,
    low_noise_step,
)
from .models import (
    MaternConfig,
    ModelSpec,
    fhn_taylor15_spec,
    ks_preconditioner,
    ks_spec,
    lgm_spec,
    preconditioned_model,
    simulate_path,
    sphere_spec,
)
from .oracles import (
    GaussianBelief,
    GridSpec,
    grid_filter,
    kalman_degenerate_step,
    kalman_filter_path,
    kalman_step,
    sphere_coordinate_marginal_cdf,
    sphere_coordinate_marginal_pdf,
)
