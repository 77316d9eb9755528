from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["SolverConfig"]


@dataclass(frozen=True)
class SolverConfig:
    """Tunables for the NOMA and SCMA solvers.

    ``outer_tol`` of ``None`` means ``1e-4 * max(p_max)`` watts.  ``step`` is
    the dual step relative to the current multiplier and budget, i.e. the
    per-BS step size is ``step * lam_f / p_max_f`` times a gain that adapts
    to the sign pattern of the budget residual.
    """

    max_users_per_subcarrier: int = 3  # L_T
    max_reuse: int = 6  # K
    codebook_size: int = 2  # U
    outer_tol: float | None = None
    dual_tol: float = 1e-7
    inner_rounds: int = 10  # S
    step: float = 0.5
    outer_iters: int = 20
    stall_iters: int | None = 3  # stop after this many outer iterations without a new best
    condense_iters: int = 10
    dual_iters: int = 500
    condense_tol: float = 1e-3  # relative gain in the relaxed sum-rate
    gp_tol: float = 1e-3  # duality gap of each condensed GP, nats
    gp_initial_gap: float = 1.0
    gp_max_iter: int = 500
    barrier_factor: float = 0.1
    p_floor: float = 1e-12
    relax_floor: float = 1e-3
    round_threshold: float = 0.1
    literal_scma_interference: bool = False
    max_codebooks_per_user: int | None = None

    def __post_init__(self):
        for name in ("dual_tol", "step", "condense_tol", "gp_tol", "gp_initial_gap", "p_floor", "relax_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.outer_tol is not None and not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        for name in (
            "max_users_per_subcarrier",
            "max_reuse",
            "codebook_size",
            "inner_rounds",
            "outer_iters",
            "condense_iters",
            "dual_iters",
            "gp_max_iter",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.barrier_factor < 1:
            raise ValueError("barrier_factor must lie in (0, 1)")
        if not 0 <= self.round_threshold <= 1:
            raise ValueError("round_threshold must lie in [0, 1]")
        if self.relax_floor >= self.round_threshold and self.round_threshold > 0:
            raise ValueError("relax_floor must sit below round_threshold")
        if self.stall_iters is not None and self.stall_iters < 1:
            raise ValueError("stall_iters must be >= 1")
        if self.max_codebooks_per_user is not None and self.max_codebooks_per_user < 1:
            raise ValueError("max_codebooks_per_user must be >= 1")

    def outer_tolerance(self, p_max) -> float:
        if self.outer_tol is not None:
            return self.outer_tol
        return 1e-4 * float(max(p_max))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
