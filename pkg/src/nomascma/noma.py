"""Power-domain NOMA downlink: SINR model and the alternating solver.

Users of a BS share a subcarrier in the power domain.  On each subcarrier
the users of a BS are ordered by channel gain (strongest first); a user
cancels the signals of everyone after it in that order and sees the users
before it, plus all co-channel users of other BSs, as interference.

The solver alternates

* subcarrier allocation: the assignment is relaxed to ``[eps, 1]``, the
  rate numerators are condensed into monomials and the resulting geometric
  program is solved repeatedly, then rounded;
* power allocation: the rate is replaced by its SCALE lower bound, whose
  Lagrangian stationary point has a closed form, and the per-BS budget
  multipliers follow a projected subgradient step.

All arrays are indexed ``[bs, user, subcarrier]`` with global user indices;
entries for users not served by ``bs`` are zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _links
from .config import SolverConfig
from .convex import DualState, ScaleCoeffs
from .hetnet import ChannelState

__all__ = [
    "NomaAssignment",
    "NomaPower",
    "NomaSolution",
    "NomaLinks",
    "decode_order",
    "noma_sinr",
    "noma_sum_rate",
    "allocate_subcarriers",
    "round_assignment",
    "noma_power_closed_form",
    "allocate_power",
    "solve_noma",
    "power_order_violations",
]

logger = logging.getLogger(__name__)


@dataclass
class NomaAssignment:
    rho: np.ndarray  # (F, M, N)
    mode: str = "binary"  # or "relaxed"
    history: list = field(default_factory=list)  # relaxed sum-rate per condensation round

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.mode not in ("binary", "relaxed"):
            raise ValueError("mode must be 'binary' or 'relaxed'")
        if np.any(self.rho < 0) or np.any(self.rho > 1):
            raise ValueError("assignment values must lie in [0, 1]")
        if self.mode == "binary" and not np.all(np.isin(self.rho, (0.0, 1.0))):
            raise ValueError("binary assignment must be 0/1")


@dataclass
class NomaPower:
    """Transmit powers; the optional fields describe how they were obtained."""

    p: np.ndarray  # (F, M, N) watts
    sum_rate: float | None = None
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    lam: np.ndarray | None = None
    converged: bool | None = None
    rounds: int = 0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < 0):
            raise ValueError("powers must be nonnegative")


@dataclass
class NomaSolution:
    assignment: NomaAssignment
    power: NomaPower
    sum_rate: float
    iterations: int
    history: list  # best-so-far sum-rate after each outer iteration
    converged: bool
    stop_reason: str = "tolerance"  # or "stalled", "max_iter"


def _values(obj, attr):
    return np.asarray(getattr(obj, attr, obj), dtype=float)


def decode_order(state: ChannelState, f: int, n: int) -> np.ndarray:
    """Users of BS ``f`` on subcarrier ``n`` by descending gain, ties by index."""
    users = state.users_of(f)
    g = state.gain[f, users, n]
    return users[np.argsort(-g, kind="stable")]


class NomaLinks:
    """Flattening of the served (bs, user, subcarrier) triples into links."""

    def __init__(self, state: ChannelState, max_users_per_subcarrier: int):
        self.state = state
        F, M, N = state.gain.shape
        fs, ms, ns = [], [], []
        for f in range(F):
            for m in state.users_of(f):
                fs.extend([f] * N)
                ms.extend([m] * N)
                ns.extend(range(N))
        self.f = np.asarray(fs, dtype=int)
        self.m = np.asarray(ms, dtype=int)
        self.n = np.asarray(ns, dtype=int)
        L = self.f.size

        rank = np.zeros((F, M, N), dtype=int)
        for f in range(F):
            for n in range(N):
                rank[f, decode_order(state, f, n), n] = np.arange(state.users_of(f).size)
        pos = rank[self.f, self.m, self.n]
        own_gain = state.gain[self.f, self.m, self.n]

        same_n = self.n[:, None] == self.n[None, :]
        same_f = self.f[:, None] == self.f[None, :]
        stronger = pos[None, :] < pos[:, None]
        coupling = np.where(same_n & same_f & stronger, own_gain[:, None], 0.0)
        # other-BS co-channel links reach victim v through gain[f_u, m_v, n]
        cross = state.gain[self.f[None, :], self.m[:, None], self.n[:, None]]
        coupling += np.where(same_n & ~same_f, cross, 0.0)

        resources = np.zeros((F * N, L), dtype=bool)
        resources[self.f * N + self.n, np.arange(L)] = True
        self.system = _links.LinkSystem(
            signal=own_gain,
            coupling=coupling,
            noise=state.noise[self.f, self.m, self.n],
            bs=self.f,
            user=self.m,
            p_max=state.p_max,
            resources=resources,
            caps=np.full(F * N, float(max_users_per_subcarrier)),
        )

    def flat(self, arr) -> np.ndarray:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 0:
            return np.full(self.f.size, float(arr))
        return arr[self.f, self.m, self.n]

    def unflat(self, vec) -> np.ndarray:
        out = np.zeros(self.state.gain.shape)
        out[self.f, self.m, self.n] = vec
        return out


def _check_served(state: ChannelState, arr, name):
    served = np.zeros(state.gain.shape, dtype=bool)
    served[state.association, np.arange(state.num_users), :] = True
    if arr.shape != state.gain.shape:
        raise ValueError(f"{name} must have shape {state.gain.shape}")
    if np.any(arr[~served] != 0):
        raise ValueError(f"{name} is nonzero for a user its BS does not serve")


def noma_sinr(state: ChannelState, rho, p, f: int, m: int, n: int) -> float:
    """SINR of user ``m`` served by BS ``f`` on subcarrier ``n``."""
    if state.association[m] != f:
        raise ValueError(f"user {m} is not served by BS {f}")
    links = NomaLinks(state, state.num_users)
    v = np.flatnonzero((links.f == f) & (links.m == m) & (links.n == n))[0]
    return float(links.system.sinr(links.flat(_values(rho, "rho")), links.flat(_values(p, "p")))[v])


def noma_sum_rate(state: ChannelState, rho, p) -> float:
    """Sum over BSs, users and subcarriers of ``log(1 + sinr)`` in nats."""
    links = NomaLinks(state, state.num_users)
    return links.system.sum_rate(links.flat(_values(rho, "rho")), links.flat(_values(p, "p")))


def _candidate_power(links: NomaLinks, p_flat) -> np.ndarray:
    """Current power where positive, else the BS's mean positive power."""
    sysm = links.system
    out = np.array(p_flat, dtype=float)
    for f in range(sysm.n_bs):
        idx = np.flatnonzero(sysm.bs == f)
        pos = out[idx] > 0
        fill = out[idx][pos].mean() if pos.any() else sysm.p_max[f] / idx.size
        out[idx[~pos]] = fill
    return out


def allocate_subcarriers(state: ChannelState, p, rho_init, cfg: SolverConfig | None = None) -> NomaAssignment:
    """Relaxed subcarrier allocation for fixed powers.

    Entries of ``p`` that are zero are replaced by the BS's mean assigned
    power so that currently unassigned pairs can still be picked up.  The
    returned assignment carries the relaxed sum-rate after each accepted
    condensation round in ``history``.
    """
    cfg = cfg or SolverConfig()
    links = NomaLinks(state, cfg.max_users_per_subcarrier)
    anchor = links.flat(_values(rho_init, "rho"))
    if np.any(anchor < 0) or np.any(anchor > 1):
        raise ValueError("rho_init must lie in [0, 1]")
    p_hat = _candidate_power(links, links.flat(_values(p, "p")))
    res = _links.allocate_assignment(links.system, p_hat, anchor, cfg)
    return NomaAssignment(links.unflat(res.x), mode="relaxed", history=res.objective_history)


def round_assignment(rho_relaxed, L_T: int, threshold: float = 0.1) -> NomaAssignment:
    """Per (bs, subcarrier) keep the ``L_T`` largest values that reach ``threshold``."""
    rho = _values(rho_relaxed, "rho")
    out = np.zeros_like(rho)
    F, M, N = rho.shape
    for f in range(F):
        for n in range(N):
            vals = rho[f, :, n]
            order = np.argsort(-vals, kind="stable")
            picked = [m for m in order if vals[m] >= threshold and vals[m] > 0][:L_T]
            out[f, picked, n] = 1.0
    return NomaAssignment(out, mode="binary")


def noma_power_closed_form(
    state: ChannelState, rho, p_current, scale: ScaleCoeffs, duals: DualState, p_floor: float = 1e-12
) -> NomaPower:
    """One evaluation of the closed-form stationary power for fixed multipliers.

    ``p_current`` supplies the SINRs and powers on the right-hand side; the
    SCALE ``alpha`` may be a scalar or an (F, M, N) array.
    """
    links = NomaLinks(state, state.num_users)
    active = links.flat(_values(rho, "rho")) > 0.5
    alpha = links.flat(scale.alpha)
    lam = np.asarray(duals.lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    p = _links.closed_form_power(links.system, active, links.flat(_values(p_current, "p")), alpha, lam, p_floor)
    return NomaPower(links.unflat(p))


def _power_from_result(links: NomaLinks, res: _links.PowerResult) -> NomaPower:
    return NomaPower(
        p=links.unflat(res.p),
        sum_rate=res.sum_rate,
        alpha=links.unflat(res.alpha),
        beta=links.unflat(res.beta),
        lam=res.lam,
        converged=res.converged,
        rounds=res.rounds,
    )


def allocate_power(state: ChannelState, rho, p_init, cfg: SolverConfig | None = None) -> NomaPower:
    """SCALE power allocation for a fixed binary assignment.

    Starts from the high-SINR bound (``alpha=1, beta=0``), solves each
    concave surrogate with the dual loop and re-tightens the bound at the
    new SINRs for up to ``cfg.inner_rounds`` rounds.  The round with the
    best true sum-rate is returned; ``converged`` is False if its dual loop
    hit the iteration cap.
    """
    cfg = cfg or SolverConfig()
    links = NomaLinks(state, cfg.max_users_per_subcarrier)
    rho_arr = _values(rho, "rho")
    _check_served(state, rho_arr, "rho")
    active = links.flat(rho_arr) > 0.5
    p0 = links.flat(_values(p_init, "p"))
    p0 = np.where(active & (p0 <= 0), cfg.p_floor, p0)
    res = _links.allocate_power(links.system, active, p0, cfg)
    out = _power_from_result(links, res)
    violations = power_order_violations(state, rho_arr, out.p)
    if violations:
        logger.debug("%d subcarriers break the ascending-power ordering", violations)
    return out


def power_order_violations(state: ChannelState, rho, p) -> int:
    """Count (bs, subcarrier) pairs whose assigned powers are not
    non-decreasing along the decoding order."""
    rho, p = _values(rho, "rho"), _values(p, "p")
    count = 0
    for f in range(state.num_bs):
        for n in range(state.num_subcarriers):
            order = [m for m in decode_order(state, f, n) if rho[f, m, n] > 0.5]
            if np.any(np.diff(p[f, order, n]) < 0):
                count += 1
    return count


def _uniform_start(state: ChannelState, links: NomaLinks, L_T: int):
    rho = np.zeros(state.gain.shape)
    p = np.zeros(state.gain.shape)
    N = state.num_subcarriers
    for f in range(state.num_bs):
        users = state.users_of(f)
        rho[f, users, :] = min(1.0, L_T / users.size)
        p[f, users, :] = state.p_max[f] / (users.size * N)
    return rho, p


def solve_noma(state: ChannelState, cfg: SolverConfig | None = None) -> NomaSolution:
    """Alternate subcarrier and power allocation, keeping the best feasible pair.

    Stops when the power matrix moves by at most ``cfg.outer_tolerance``
    (Euclidean norm, watts) between outer iterations, when the best
    sum-rate has not improved for ``cfg.stall_iters`` iterations, or after
    ``cfg.outer_iters`` iterations.
    """
    cfg = cfg or SolverConfig()
    links = NomaLinks(state, cfg.max_users_per_subcarrier)
    L_T = cfg.max_users_per_subcarrier
    rho_relaxed, p = _uniform_start(state, links, L_T)
    tol = cfg.outer_tolerance(state.p_max)
    best = None
    history = []
    prev_p = None
    converged = False
    stop_reason = "max_iter"
    since_best = 0
    k = 0
    for k in range(1, cfg.outer_iters + 1):
        try:
            relaxed = allocate_subcarriers(state, p, rho_relaxed, cfg)
        except Exception as exc:
            raise RuntimeError(f"NOMA subcarrier allocation failed at outer iteration {k}: {exc}") from exc
        rho_relaxed = relaxed.rho
        binary = round_assignment(relaxed, L_T, cfg.round_threshold)
        active = links.flat(binary.rho) > 0.5
        # warm start from the previous powers where still assigned
        p_init = np.where(active, _candidate_power(links, links.flat(p)), 0.0)
        power = allocate_power(state, binary, links.unflat(p_init), cfg)
        rate = noma_sum_rate(state, binary, power)
        if best is None or rate > best[2] * (1 + 1e-9):
            best = (binary, power, rate)
            since_best = 0
        else:
            since_best += 1
        history.append(best[2])
        p = power.p
        if prev_p is not None and np.linalg.norm(p - prev_p) <= tol:
            converged = True
            stop_reason = "tolerance"
            break
        if cfg.stall_iters is not None and since_best >= cfg.stall_iters:
            stop_reason = "stalled"
            break
        prev_p = p
    return NomaSolution(best[0], best[1], best[2], k, history, converged, stop_reason)
