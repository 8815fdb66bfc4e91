"""Recursive second-order statistics with exponential forgetting.

Tracks the input autocorrelation matrix and the input/output
cross-correlation vector from streaming samples. Toeplitz mode estimates
only the first autocorrelation row (stationary scalar-input convolution
model); full symmetric mode estimates the whole matrix (vector-observation
models where the autocorrelation is not Toeplitz).
"""

from __future__ import annotations

import numpy as np

from .linalg import SymMatrix, as_vector

MODES = ("toeplitz", "fullsym")


class CorrelationEstimator:
    """Exponentially weighted estimates of R and p.

    Updates follow
    ``r <- gamma*r + u[0]*u`` (Toeplitz) or ``R <- gamma*R + u u^T`` (full),
    and ``p <- gamma*p + d*u``, starting from zero. No ``1 - gamma``
    normalization is applied: Krylov bases and Wiener solutions are
    invariant to a common positive scaling of (R, p).

    Parameters
    ----------
    mode : {"toeplitz", "fullsym"}
    n : int
        Regressor length.
    gamma : float
        Forgetting factor, strictly inside (0, 1); fixed for the lifetime
        of the estimator.
    warmup_factor : float
        The estimator reports itself mature after ``warmup_factor * n``
        samples; consumers may defer basis builds until then.
    """

    def __init__(self, mode: str, n: int, gamma: float, warmup_factor: float = 1.0):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1), got {gamma}")
        if n < 1:
            raise ValueError(f"dimension must be positive, got {n}")
        self.mode = mode
        self.n = int(n)
        self.gamma = float(gamma)
        self.warmup_factor = float(warmup_factor)
        self.sample_count = 0
        self._p = np.zeros(self.n)
        if mode == "toeplitz":
            self._r = np.zeros(self.n)
            self._matrix = None
        else:
            self._matrix = np.zeros((self.n, self.n))
            self._r = None

    @property
    def mature(self) -> bool:
        return self.sample_count >= self.warmup_factor * self.n

    def update(self, u, d: float) -> None:
        """Fold one sample pair into the running estimates."""
        v = as_vector(u, self.n)
        g = self.gamma
        if self.mode == "toeplitz":
            # newest scalar sample times the regressor vector
            self._r = g * self._r + v[0] * v
        else:
            self._matrix = g * self._matrix + np.outer(v, v)
        self._p = g * self._p + float(d) * v
        self.sample_count += 1

    def r_matrix(self) -> SymMatrix:
        """Immutable snapshot of the autocorrelation estimate."""
        if self.mode == "toeplitz":
            return SymMatrix(first_row=self._r)
        return SymMatrix(self._matrix)

    def p_vector(self) -> np.ndarray:
        """Immutable snapshot of the cross-correlation estimate."""
        p = self._p.copy()
        p.flags.writeable = False
        return p

    def __repr__(self) -> str:
        return (f"CorrelationEstimator(mode={self.mode!r}, n={self.n}, "
                f"gamma={self.gamma}, samples={self.sample_count})")
