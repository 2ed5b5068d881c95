"""Small input-validation helpers used at module boundaries."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError


def as_vector(x, dim: int, name: str = "x") -> np.ndarray:
    """Coerce to a float vector of length ``dim`` or raise."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.shape[0] != dim:
        raise ContractViolationError(
            f"{name} must be a vector of length {dim}, got shape {np.shape(x)}"
        )
    return v


def as_matrix(a, shape: tuple[int, int], name: str = "a") -> np.ndarray:
    """Coerce to a float matrix with the given shape or raise."""
    m = np.asarray(a, dtype=float)
    if m.shape != shape:
        raise ContractViolationError(
            f"{name} must have shape {shape}, got {np.shape(a)}"
        )
    return m


def check_positive(value: float, name: str) -> float:
    if not np.isfinite(value) or value <= 0:
        raise ContractViolationError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_probability(value: float, name: str) -> float:
    if not (0.0 < value < 1.0):
        raise ContractViolationError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def spd_cholesky(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return the lower Cholesky factor, raising if the matrix is not SPD."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolationError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=1e-12, rtol=1e-12):
        raise ContractViolationError(f"{name} must be symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise ContractViolationError(f"{name} is not positive definite") from exc
