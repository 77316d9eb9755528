"""Bounds and update rules shared by the successive convex approximation solvers.

* :func:`scale_coeffs` -- the tangent lower bound
  ``alpha*log(z) + beta <= log(1 + z)`` used to make the rate concave in
  log-power.
* :func:`agma_condense` -- arithmetic/geometric mean condensation of a sum
  into a product, used to turn posynomial denominators into monomials.
* :func:`subgradient_update` -- projected multiplier step for per-BS power
  budgets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScaleCoeffs",
    "scale_coeffs",
    "agma_condense",
    "DualState",
    "subgradient_update",
]


@dataclass(frozen=True)
class ScaleCoeffs:
    """Coefficients of ``alpha*log(z) + beta``, elementwise over ``z0``.

    ``z0`` is ``None`` for the high-SINR start (``alpha = 1``, ``beta = 0``).
    """

    alpha: np.ndarray | float
    beta: np.ndarray | float
    z0: np.ndarray | float | None = None

    @classmethod
    def high_sinr(cls, shape=()) -> "ScaleCoeffs":
        if shape == ():
            return cls(alpha=1.0, beta=0.0, z0=None)
        return cls(alpha=np.ones(shape), beta=np.zeros(shape), z0=None)

    def bound(self, z):
        """Evaluate the lower bound at ``z > 0``."""
        return self.alpha * np.log(z) + self.beta


def scale_coeffs(z0) -> ScaleCoeffs:
    """Tangent of ``log(1+z)`` in ``log z`` coordinates at ``z0``.

    Accepts a scalar or an array; every entry must be positive and finite.
    """
    z = np.asarray(z0, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(z <= 0):
        raise ValueError("expansion point must be positive and finite")
    alpha = z / (z + 1.0)
    beta = np.log1p(z) - alpha * np.log(z)
    if z.ndim == 0:
        return ScaleCoeffs(alpha=float(alpha), beta=float(beta), z0=float(z))
    return ScaleCoeffs(alpha=alpha, beta=beta, z0=z)


def agma_condense(terms, anchor):
    """Condense ``sum(terms)`` into the monomial lower bound anchored at ``anchor``.

    Returns ``(weights, bound)`` with ``weights = anchor / sum(anchor)`` and
    ``bound = prod((terms / weights) ** weights)``.  The bound never exceeds
    ``sum(terms)`` and is exact when ``terms`` is proportional to ``anchor``.
    """
    v = np.asarray(terms, dtype=float).reshape(-1)
    a = np.asarray(anchor, dtype=float).reshape(-1)
    if v.size == 0 or v.shape != a.shape:
        raise ValueError("terms and anchor must be nonempty and of equal length")
    if np.any(v <= 0) or np.any(a <= 0):
        raise ValueError("terms and anchor must be strictly positive")
    u = a / a.sum()
    log_bound = float(np.sum(u * (np.log(v) - np.log(u))))
    return u, float(np.exp(log_bound))


@dataclass(frozen=True)
class DualState:
    """Per-BS budget multipliers with their step size and iteration counter."""

    lam: np.ndarray
    step: np.ndarray | float
    iteration: int = 0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if np.any(lam < 0):
            raise ValueError("multipliers must be nonnegative")
        if np.any(np.asarray(self.step) <= 0):
            raise ValueError("step must be positive")
        object.__setattr__(self, "lam", lam)


def subgradient_update(state: DualState, residual_per_bs) -> DualState:
    """``lam <- [lam - step * (p_max - consumed)]^+``.

    ``residual_per_bs`` is the unused budget of each BS, so an overspent
    budget (negative residual) raises the price.
    """
    r = np.asarray(residual_per_bs, dtype=float).reshape(state.lam.shape)
    lam = np.maximum(state.lam - state.step * r, 0.0)
    return DualState(lam=lam, step=state.step, iteration=state.iteration + 1)
