"""SCMA downlink: codebooks, SINR model and the alternating solver.

A codebook is a fixed set of ``U`` subcarriers with power-split weights
``eta``.  Every BS may hand each codebook to several of its users; the MPA
receiver separates users of the same BS, so only other BSs interfere.  A
subcarrier of a BS may be used by at most ``K`` (user, codebook) pairs.

By default the interference seen on codebook ``c`` is the power other BSs
radiate on the subcarriers of ``c``: an interfering codebook ``c'``
contributes ``eta[n, c'] * p * g`` on every shared subcarrier ``n``.  With
``SolverConfig.literal_scma_interference`` only other-BS users of the very
same codebook interfere, through their gains summed over all subcarriers.

Arrays are indexed ``[bs, user, codebook]`` with global user indices.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import _links
from .config import SolverConfig
from .convex import DualState, ScaleCoeffs
from .hetnet import ChannelState

__all__ = [
    "CodebookSet",
    "ScmaAssignment",
    "ScmaPower",
    "ScmaSolution",
    "ScmaLinks",
    "enumerate_codebooks",
    "scma_sinr",
    "scma_sum_rate",
    "allocate_codebooks",
    "round_codebooks",
    "scma_power_closed_form",
    "allocate_power_scma",
    "solve_scma",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CodebookSet:
    """Codebooks as subcarrier subsets with incidence and weight matrices.

    Attributes
    ----------
    codebooks : tuple of tuple of int
        Subcarriers of each codebook, ascending.
    incidence : ndarray, shape (N, C)
        1 where subcarrier ``n`` belongs to codebook ``c``.
    weights : ndarray, shape (N, C)
        Power share ``eta[n, c]``; every column sums to one.
    """

    codebooks: tuple
    incidence: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.incidence, dtype=float)
        eta = np.asarray(self.weights, dtype=float)
        if inc.ndim != 2 or inc.shape != eta.shape:
            raise ValueError("incidence and weights must be (N, C) arrays of equal shape")
        if inc.shape[1] != len(self.codebooks) or inc.shape[1] == 0:
            raise ValueError("need one incidence column per codebook")
        if np.any((eta != 0) & (inc == 0)):
            raise ValueError("weights must vanish off the codebook's subcarriers")
        if np.any(eta < 0) or np.any(np.abs(eta.sum(axis=0) - 1.0) > 1e-12):
            raise ValueError("codebook weights must be nonnegative and sum to 1")
        object.__setattr__(self, "incidence", inc)
        object.__setattr__(self, "weights", eta)

    @property
    def num_codebooks(self) -> int:
        return len(self.codebooks)

    @property
    def num_subcarriers(self) -> int:
        return self.incidence.shape[0]

    @property
    def size(self) -> int:
        return len(self.codebooks[0])


def enumerate_codebooks(N: int, U: int, eta_rule="uniform") -> CodebookSet:
    """All ``C(N, U)`` subcarrier subsets in lexicographic order.

    ``eta_rule`` is ``"uniform"`` (``1/U`` on each subcarrier) or a length-``U``
    sequence of shares, applied in ascending subcarrier order.
    """
    if not 1 <= U <= N:
        raise ValueError(f"codebook size U={U} must satisfy 1 <= U <= N={N}")
    if isinstance(eta_rule, str):
        if eta_rule != "uniform":
            raise ValueError(f"unknown eta rule {eta_rule!r}")
        shares = np.full(U, 1.0 / U)
    else:
        shares = np.asarray(eta_rule, dtype=float)
        if shares.shape != (U,):
            raise ValueError(f"eta_rule needs {U} shares")
    books = tuple(itertools.combinations(range(N), U))
    inc = np.zeros((N, len(books)))
    eta = np.zeros((N, len(books)))
    for c, book in enumerate(books):
        inc[list(book), c] = 1.0
        eta[list(book), c] = shares
    return CodebookSet(books, inc, eta)


@dataclass
class ScmaAssignment:
    q: np.ndarray  # (F, M, C)
    mode: str = "binary"  # or "relaxed"
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.mode not in ("binary", "relaxed"):
            raise ValueError("mode must be 'binary' or 'relaxed'")
        if np.any(self.q < 0) or np.any(self.q > 1):
            raise ValueError("assignment values must lie in [0, 1]")
        if self.mode == "binary" and not np.all(np.isin(self.q, (0.0, 1.0))):
            raise ValueError("binary assignment must be 0/1")


@dataclass
class ScmaPower:
    p: np.ndarray  # (F, M, C) watts
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
class ScmaSolution:
    assignment: ScmaAssignment
    power: ScmaPower
    sum_rate: float
    iterations: int
    history: list  # best-so-far sum-rate after each outer iteration
    converged: bool
    stop_reason: str = "tolerance"  # or "stalled", "max_iter"


def _values(obj, attr):
    return np.asarray(getattr(obj, attr, obj), dtype=float)


class ScmaLinks:
    """Flattening of the served (bs, user, codebook) triples into links."""

    def __init__(self, state: ChannelState, cbs: CodebookSet, max_reuse: int, literal: bool = False):
        F, M, N = state.gain.shape
        if cbs.num_subcarriers != N:
            raise ValueError(f"codebooks span {cbs.num_subcarriers} subcarriers, channel has {N}")
        self.state, self.cbs = state, cbs
        C = cbs.num_codebooks
        order = np.concatenate([state.users_of(f) for f in range(F)])
        self.m = np.repeat(order, C)
        self.f = state.association[self.m]
        self.c = np.tile(np.arange(C), order.size)
        L = self.m.size

        inc, eta = cbs.incidence, cbs.weights
        g = state.gain  # (F, M, N)
        signal = np.einsum("mn,nm->m", g[self.f, self.m], eta[:, self.c])
        noise = np.einsum("mn,nm->m", state.noise[self.f, self.m], eta[:, self.c])

        gt = g[:, order, :]  # (F, U_users, N): from every BS to every user
        if literal:
            total = gt.sum(axis=2)  # (F, users)
            blocks = total[:, :, None, None] * np.eye(C)[None, None]
        else:
            # victim codebook c on its subcarriers, interferer codebook c' with its shares
            blocks = np.einsum("nc,fmn,nd->fmcd", inc, gt, eta)
        f_of = state.association[order]
        # blocks[f', m, c, c'] couples (m, c) to every user of BS f' on c'
        coup = blocks[f_of[None, :], np.arange(order.size)[:, None]]  # (m, m', C, C)
        coup = coup * (f_of[:, None] != f_of[None, :])[:, :, None, None]
        coupling = coup.transpose(0, 2, 1, 3).reshape(L, L)

        resources = np.zeros((F * N, L), dtype=bool)
        for n in range(N):
            on = inc[n, self.c] > 0
            resources[self.f[on] * N + n, np.flatnonzero(on)] = True
        self.system = _links.LinkSystem(
            signal=signal,
            coupling=coupling,
            noise=noise,
            bs=self.f,
            user=self.m,
            p_max=state.p_max,
            resources=resources,
            caps=np.full(F * N, float(max_reuse)),
        )

    def flat(self, arr) -> np.ndarray:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 0:
            return np.full(self.m.size, float(arr))
        return arr[self.f, self.m, self.c]

    def unflat(self, vec) -> np.ndarray:
        out = np.zeros((self.state.num_bs, self.state.num_users, self.cbs.num_codebooks))
        out[self.f, self.m, self.c] = vec
        return out


def _check_served(state: ChannelState, arr, C, name):
    shape = (state.num_bs, state.num_users, C)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}")
    served = np.zeros(shape, dtype=bool)
    served[state.association, np.arange(state.num_users), :] = True
    if np.any(arr[~served] != 0):
        raise ValueError(f"{name} is nonzero for a user its BS does not serve")


def scma_sinr(state: ChannelState, cbs: CodebookSet, q, p, f: int, m: int, c: int, literal: bool = False) -> float:
    """SINR of user ``m`` of BS ``f`` on codebook ``c``."""
    if state.association[m] != f:
        raise ValueError(f"user {m} is not served by BS {f}")
    links = ScmaLinks(state, cbs, 1, literal)
    v = np.flatnonzero((links.m == m) & (links.c == c))[0]
    return float(links.system.sinr(links.flat(_values(q, "q")), links.flat(_values(p, "p")))[v])


def scma_sum_rate(state: ChannelState, cbs: CodebookSet, q, p, literal: bool = False) -> float:
    """Sum of ``log(1 + sinr)`` over BSs, users and codebooks, in nats."""
    links = ScmaLinks(state, cbs, 1, literal)
    return links.system.sum_rate(links.flat(_values(q, "q")), links.flat(_values(p, "p")))


def _candidate_power(links: ScmaLinks, p_flat, cap_links) -> np.ndarray:
    """Current power where positive, else the BS's mean positive power
    (or its budget spread over ``cap_links[f]`` links)."""
    sysm = links.system
    out = np.array(p_flat, dtype=float)
    for f in range(sysm.n_bs):
        idx = np.flatnonzero(sysm.bs == f)
        pos = out[idx] > 0
        fill = out[idx][pos].mean() if pos.any() else sysm.p_max[f] / cap_links[f]
        out[idx[~pos]] = fill
    return out


def _links_per_bs(state: ChannelState, cbs: CodebookSet, K: int) -> np.ndarray:
    """How many (user, codebook) links a BS can switch on at once."""
    fit = (K * cbs.num_subcarriers) // cbs.size
    return np.array([max(1, min(state.users_of(f).size * cbs.num_codebooks, fit)) for f in range(state.num_bs)])


def allocate_codebooks(state: ChannelState, cbs: CodebookSet, p, q_init, cfg: SolverConfig | None = None) -> ScmaAssignment:
    """Relaxed codebook assignment by iterated condensation, then rounding.

    Links with zero power in ``p`` are priced at the BS's mean assigned
    power.  The result is binary and respects the reuse cap ``K`` (and the
    optional per-user cap); the relaxed sum-rate per accepted round is kept
    in ``history``.
    """
    cfg = cfg or SolverConfig()
    relaxed = _relaxed_codebooks(state, cbs, p, q_init, cfg)
    return round_codebooks(state, cbs, relaxed, cfg, p)


def _relaxed_codebooks(state, cbs, p, q_init, cfg) -> ScmaAssignment:
    links = ScmaLinks(state, cbs, cfg.max_reuse, cfg.literal_scma_interference)
    anchor = links.flat(_values(q_init, "q"))
    if np.any(anchor < 0) or np.any(anchor > 1):
        raise ValueError("q_init must lie in [0, 1]")
    p_hat = _candidate_power(links, links.flat(_values(p, "p")), _links_per_bs(state, cbs, cfg.max_reuse))
    res = _links.allocate_assignment(links.system, p_hat, anchor, cfg, cfg.max_codebooks_per_user)
    return ScmaAssignment(links.unflat(res.x), mode="relaxed", history=res.objective_history)


def round_codebooks(
    state: ChannelState, cbs: CodebookSet, q_relaxed, cfg: SolverConfig | None = None, p=None
) -> ScmaAssignment:
    """Greedy rounding by decreasing relaxed value under the reuse cap.

    Relaxed values that agree to three decimals (about the accuracy of the
    relaxed solve) are ordered by the link's SINR at powers ``p`` when
    given, zero entries of ``p`` priced as in :func:`allocate_codebooks`;
    remaining ties go to the lower (user, codebook) index.
    """
    cfg = cfg or SolverConfig()
    links = ScmaLinks(state, cbs, cfg.max_reuse, cfg.literal_scma_interference)
    relaxed = ScmaAssignment(_values(q_relaxed, "q"), mode="relaxed")
    x = links.flat(relaxed.q)
    tiebreak = None
    if p is not None:
        p_hat = _candidate_power(links, links.flat(_values(p, "p")), _links_per_bs(state, cbs, cfg.max_reuse))
        tiebreak = links.system.sinr(x, p_hat)
    chosen = _links.round_links(
        links.system, x, cfg.round_threshold, cfg.max_codebooks_per_user, tiebreak=tiebreak, decimals=3, exchange=True
    )
    return ScmaAssignment(links.unflat(chosen), mode="binary", history=list(getattr(q_relaxed, "history", [])))


def scma_power_closed_form(
    state: ChannelState,
    cbs: CodebookSet,
    q,
    p_current,
    scale: ScaleCoeffs,
    duals: DualState,
    p_floor: float = 1e-12,
    literal: bool = False,
) -> ScmaPower:
    """One evaluation of the closed-form stationary power for fixed multipliers."""
    links = ScmaLinks(state, cbs, 1, literal)
    active = links.flat(_values(q, "q")) > 0.5
    alpha = links.flat(scale.alpha)
    lam = np.asarray(duals.lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    p = _links.closed_form_power(links.system, active, links.flat(_values(p_current, "p")), alpha, lam, p_floor)
    return ScmaPower(links.unflat(p))


def allocate_power_scma(state: ChannelState, cbs: CodebookSet, q, p_init, cfg: SolverConfig | None = None) -> ScmaPower:
    """SCALE power allocation for a fixed binary codebook assignment.

    Same procedure as the NOMA power step: high-SINR start, dual loop on
    each surrogate, up to ``cfg.inner_rounds`` re-tightenings, best true
    sum-rate returned.
    """
    cfg = cfg or SolverConfig()
    links = ScmaLinks(state, cbs, cfg.max_reuse, cfg.literal_scma_interference)
    q_arr = _values(q, "q")
    _check_served(state, q_arr, cbs.num_codebooks, "q")
    active = links.flat(q_arr) > 0.5
    p0 = links.flat(_values(p_init, "p"))
    p0 = np.where(active & (p0 <= 0), cfg.p_floor, p0)
    res = _links.allocate_power(links.system, active, p0, cfg)
    return ScmaPower(
        p=links.unflat(res.p),
        sum_rate=res.sum_rate,
        alpha=links.unflat(res.alpha),
        beta=links.unflat(res.beta),
        lam=res.lam,
        converged=res.converged,
        rounds=res.rounds,
    )


def _uniform_start(state: ChannelState, cbs: CodebookSet, K: int):
    shape = (state.num_bs, state.num_users, cbs.num_codebooks)
    q = np.zeros(shape)
    p = np.zeros(shape)
    per_subcarrier = comb(cbs.num_subcarriers - 1, cbs.size - 1)
    cap_links = _links_per_bs(state, cbs, K)
    for f in range(state.num_bs):
        users = state.users_of(f)
        q[f, users, :] = min(1.0, K / (users.size * per_subcarrier))
        p[f, users, :] = state.p_max[f] / cap_links[f]
    return q, p


def solve_scma(state: ChannelState, cfg: SolverConfig | None = None, codebooks: CodebookSet | None = None) -> ScmaSolution:
    """Alternate codebook and power allocation, keeping the best feasible pair.

    Uses all ``C(N, U)`` codebooks with equal shares unless ``codebooks`` is
    given.  Stopping rule as in the NOMA solver.
    """
    cfg = cfg or SolverConfig()
    cbs = codebooks or enumerate_codebooks(state.num_subcarriers, cfg.codebook_size)
    links = ScmaLinks(state, cbs, cfg.max_reuse, cfg.literal_scma_interference)
    q_relaxed, p = _uniform_start(state, cbs, cfg.max_reuse)
    cap_links = _links_per_bs(state, cbs, cfg.max_reuse)
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
            relaxed = _relaxed_codebooks(state, cbs, p, q_relaxed, cfg)
        except Exception as exc:
            raise RuntimeError(f"SCMA codebook allocation failed at outer iteration {k}: {exc}") from exc
        q_relaxed = relaxed.q
        binary = round_codebooks(state, cbs, relaxed, cfg, p)
        active = links.flat(binary.q) > 0.5
        p_init = np.where(active, _candidate_power(links, links.flat(p), cap_links), 0.0)
        power = allocate_power_scma(state, cbs, binary, links.unflat(p_init), cfg)
        rate = links.system.sum_rate(active.astype(float), links.flat(power.p))
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
    return ScmaSolution(best[0], best[1], best[2], k, history, converged, stop_reason)
