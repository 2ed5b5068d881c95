"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument breaks a documented precondition (wrong shape, off-manifold state, ...)."""


class SingularJacobianError(RuntimeError):
    """The constraint Jacobian lost full row rank at a visited point."""


class InitializationError(RuntimeError):
    """Root finding could not place the chain on the constraint manifold."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
