"""scikit-learn style front ends for the two solvers.

There is nothing to learn across scenarios: ``fit`` runs the alternating
solver on one :class:`~nomascma.hetnet.ChannelState` and stores the
allocation.  The estimator protocol still buys ``get_params``/``set_params``,
``clone`` and parameter grids for free.

Examples
--------
>>> from nomascma import NetworkConfig, generate_scenario, NomaAllocator
>>> state = generate_scenario(NetworkConfig(), seed=3)
>>> est = NomaAllocator(outer_iters=5).fit(state)
>>> est.sum_rate_ > 0
True
"""

from __future__ import annotations

from dataclasses import replace

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import SolverConfig
from .hetnet import ChannelState
from .noma import noma_sum_rate, solve_noma
from .scma import enumerate_codebooks, scma_sum_rate, solve_scma

__all__ = ["NomaAllocator", "ScmaAllocator"]


def _check_state(state) -> ChannelState:
    if not isinstance(state, ChannelState):
        raise TypeError(f"expected a ChannelState, got {type(state).__name__}")
    return state


class _Allocator(BaseEstimator):
    _overrides: tuple = ()

    def _solver_config(self) -> SolverConfig:
        base = self.config if self.config is not None else SolverConfig()
        return replace(base, **{name: getattr(self, name) for name in self._overrides})

    def _store(self, state, sol):
        self.assignment_ = sol.assignment
        self.power_ = sol.power
        self.sum_rate_ = sol.sum_rate
        self.n_iter_ = sol.iterations
        self.converged_ = sol.converged
        self.stop_reason_ = sol.stop_reason
        self.history_ = list(sol.history)
        self.n_bs_, self.n_users_, self.n_subcarriers_ = state.gain.shape
        return self

    def _check_same_shape(self, state):
        if state.gain.shape != (self.n_bs_, self.n_users_, self.n_subcarriers_):
            raise ValueError(
                f"state has shape {state.gain.shape}, allocator was fitted on "
                f"{(self.n_bs_, self.n_users_, self.n_subcarriers_)}"
            )


class NomaAllocator(_Allocator):
    """Joint subcarrier and power allocation with SIC receivers.

    Parameters
    ----------
    max_users_per_subcarrier : int, default=3
        Users superimposed on one subcarrier of one base station.
    outer_iters : int, default=20
        Alternations between assignment and power steps.
    stall_iters : int or None, default=3
        Stop after this many alternations without a better sum-rate.
    config : SolverConfig, optional
        Everything else; the three parameters above override its fields.

    Attributes
    ----------
    assignment_ : NomaAssignment
    power_ : NomaPower
    sum_rate_ : float
        Sum-rate of the fitted allocation, nats/s/Hz.
    n_iter_ : int
    converged_ : bool
        Whether the power iterates settled within the outer tolerance.
    """

    _overrides = ("max_users_per_subcarrier", "outer_iters", "stall_iters")

    def __init__(self, max_users_per_subcarrier=3, outer_iters=20, stall_iters=3, config=None):
        self.max_users_per_subcarrier = max_users_per_subcarrier
        self.outer_iters = outer_iters
        self.stall_iters = stall_iters
        self.config = config

    def fit(self, state, y=None):
        state = _check_state(state)
        return self._store(state, solve_noma(state, self._solver_config()))

    def score(self, state, y=None):
        """Sum-rate of the fitted allocation on ``state`` (same shape)."""
        check_is_fitted(self, "sum_rate_")
        state = _check_state(state)
        self._check_same_shape(state)
        return noma_sum_rate(state, self.assignment_.rho, self.power_.p)


class ScmaAllocator(_Allocator):
    """Joint codebook and power allocation with MPA receivers.

    Parameters
    ----------
    max_reuse : int, default=6
        Codebook links allowed per subcarrier of one base station.
    codebook_size : int, default=2
        Subcarriers per codebook; all ``C(N, codebook_size)`` codebooks are
        used with equal power shares.
    outer_iters : int, default=20
    stall_iters : int or None, default=3
    config : SolverConfig, optional

    Attributes
    ----------
    assignment_ : ScmaAssignment
    power_ : ScmaPower
    codebooks_ : CodebookSet
    sum_rate_ : float
    n_iter_ : int
    converged_ : bool
    """

    _overrides = ("max_reuse", "codebook_size", "outer_iters", "stall_iters")

    def __init__(self, max_reuse=6, codebook_size=2, outer_iters=20, stall_iters=3, config=None):
        self.max_reuse = max_reuse
        self.codebook_size = codebook_size
        self.outer_iters = outer_iters
        self.stall_iters = stall_iters
        self.config = config

    def fit(self, state, y=None):
        state = _check_state(state)
        cfg = self._solver_config()
        self.codebooks_ = enumerate_codebooks(state.num_subcarriers, cfg.codebook_size)
        self._literal = cfg.literal_scma_interference
        return self._store(state, solve_scma(state, cfg, self.codebooks_))

    def score(self, state, y=None):
        """Sum-rate of the fitted allocation on ``state`` (same shape)."""
        check_is_fitted(self, "sum_rate_")
        state = _check_state(state)
        self._check_same_shape(state)
        return scma_sum_rate(state, self.codebooks_, self.assignment_.q, self.power_.p, self._literal)
