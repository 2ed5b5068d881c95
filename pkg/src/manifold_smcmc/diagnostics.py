"""Chain and run diagnostics: effective sample size and error norms."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ContractViolationError


def _autocorrelations(chain: np.ndarray) -> np.ndarray:
    """Normalized autocorrelations via FFT, biased estimator."""
    n = chain.size
    centered = chain - chain.mean()
    size = int(2 ** np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n].real / n
    return acov / acov[0]


def ess(chain) -> float:
    """Effective sample size with Geyer initial-positive-sequence truncation.

    Sums paired autocorrelations Gamma_m = rho_{2m} + rho_{2m+1} while they
    stay positive, then returns N / (1 + 2 sum rho), clamped to [1, N].  A
    constant chain has no information and returns 1 by convention.
    """
    chain = np.asarray(chain, dtype=float).ravel()
    n = chain.size
    if n < 10:
        raise ContractViolationError("ess needs a chain of length >= 10")
    if np.ptp(chain) == 0.0:
        warnings.warn("constant chain passed to ess; returning 1", RuntimeWarning)
        return 1.0
    rho = _autocorrelations(chain)
    tail = 0.0
    for m in range(1, n // 2):
        gamma = rho[2 * m] + rho[2 * m + 1] if 2 * m + 1 < n else rho[2 * m]
        if gamma <= 0.0:
            break
        tail += gamma
    # Initial pair Gamma_0 = rho_0 + rho_1 always enters the sum.
    tau = 1.0 + 2.0 * rho[1] + 2.0 * tail
    return float(np.clip(n / max(tau, 1e-12), 1.0, n))


def ess_per_coordinate(states: np.ndarray) -> np.ndarray:
    """ESS of each coordinate's chain; states has shape (n_steps, dim)."""
    return np.array([ess(states[:, j]) for j in range(states.shape[1])])


def l2_error(estimate, truth) -> float:
    """Euclidean norm of the estimate error."""
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ContractViolationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
