"""Link-level machinery shared by the NOMA and SCMA solvers.

Both systems reduce to a set of *links* ``v`` (a BS serving one user on one
subcarrier, or on one codebook) with

    sinr_v = x_v * S_v * p_v / (sum_u C[v, u] * x_u * p_u + noise_v)

where ``x`` is the (relaxed) assignment, ``S`` the effective own-channel
gain and ``C`` the interference coupling.  Links consume shared resources
(one subcarrier of one BS) subject to a reuse cap, and draw power from the
budget of their BS.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .config import SolverConfig
from .convex import DualState, ScaleCoeffs, scale_coeffs, subgradient_update
from .gp import GpInfeasibleError, GpProblem, Posynomial, PosynomialSet, solve_gp

logger = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass
class LinkSystem:
    signal: np.ndarray  # (L,)
    coupling: np.ndarray  # (L, L)
    noise: np.ndarray  # (L,)
    bs: np.ndarray  # (L,)
    user: np.ndarray  # (L,)
    p_max: np.ndarray  # (F,)
    resources: np.ndarray  # (R, L) bool
    caps: np.ndarray  # (R,)

    @property
    def n_links(self) -> int:
        return self.signal.size

    @property
    def n_bs(self) -> int:
        return self.p_max.size

    def link_p_max(self) -> np.ndarray:
        return self.p_max[self.bs]

    def interference(self, x, p) -> np.ndarray:
        return self.coupling @ (x * p)

    def sinr(self, x, p) -> np.ndarray:
        return x * self.signal * p / (self.interference(x, p) + self.noise)

    def rates(self, x, p) -> np.ndarray:
        return np.log1p(self.sinr(x, p))

    def sum_rate(self, x, p) -> float:
        return float(self.rates(x, p).sum())

    def consumed(self, x, p) -> np.ndarray:
        return np.bincount(self.bs, weights=x * p, minlength=self.n_bs)

    def usage(self, x) -> np.ndarray:
        return self.resources.astype(float) @ x


# ---------------------------------------------------------------- power


@dataclass
class PowerResult:
    """Outcome of the SCALE + dual power allocation on a fixed assignment.

    ``alpha``/``beta`` are the SCALE coefficients and ``lam`` the multipliers
    of the round that produced ``p``, so the closed form can be re-evaluated
    at the returned point.
    """

    p: np.ndarray
    sum_rate: float
    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    converged: bool
    rounds: int
    dual_iterations: int


def closed_form_power(system: LinkSystem, active, p_current, alpha, lam, p_floor) -> np.ndarray:
    """Stationary point of the SCALE Lagrangian for fixed multipliers.

    ``p_u = alpha_u / (lam_bs(u) + sum_v C[v,u] alpha_v sinr_v / (S_v p_v))``;
    inactive links get zero power, active ones are clamped to
    ``[p_floor, p_max]``.
    """
    x = active.astype(float)
    p = np.where(active, p_current, 0.0)
    gamma = system.sinr(x, p)
    own = system.signal * p
    term = np.zeros_like(p)
    ok = active & (own > 0)
    term[ok] = alpha[ok] * gamma[ok] / own[ok]
    denom = lam[system.bs] + system.coupling.T @ term
    cap = system.link_p_max()
    with np.errstate(divide="ignore"):
        raw = np.where(denom > 0, alpha / np.where(denom > 0, denom, 1.0), cap)
    return np.where(active, np.clip(raw, p_floor, cap), 0.0)


def _lambda_scale(system: LinkSystem, active, alpha) -> np.ndarray:
    return np.bincount(system.bs, weights=np.where(active, alpha, 0.0), minlength=system.n_bs) / system.p_max


class _ActiveSet:
    """Slices of a link system restricted to the active links."""

    def __init__(self, system: LinkSystem, active, p_floor):
        self.idx = np.flatnonzero(active)
        idx = self.idx
        self.C = system.coupling[np.ix_(idx, idx)]
        self.noise = system.noise[idx]
        self.bs = system.bs[idx]
        self.lo = np.full(idx.size, np.log(p_floor))
        self.hi = np.log(system.p_max[self.bs])


def _newton_stationary(sub: _ActiveSet, a, lam_l, y, tol, max_iter):
    C, noise, lo, hi = sub.C, sub.noise, sub.lo, sub.hi
    diag = np.diag_indices(y.size)

    def lagrangian(yy):
        q = np.exp(yy)
        return float(np.sum(a * (yy - np.log(C @ q + noise))) - np.sum(lam_l * q))

    it = 0
    value = lagrangian(y)
    for it in range(1, max_iter + 1):
        # grad = 0 is exactly the closed-form condition p = alpha / denom
        q = np.exp(y)
        D = C @ q + noise
        denom = lam_l + C.T @ (a / D)
        grad = a - q * denom
        free = ~(((y <= lo) & (grad < 0)) | ((y >= hi) & (grad > 0)))
        if not free.any() or np.max(np.abs(grad[free]) / a[free]) <= tol:
            break
        B = C * q[None, :]
        H = (B.T * (a / D**2)) @ B
        H[diag] -= q * denom
        all_free = free.all()
        Hf = H if all_free else H[np.ix_(free, free)]
        gf = grad if all_free else grad[free]
        try:
            d_free = np.linalg.solve(Hf, -gf)
        except np.linalg.LinAlgError:
            d_free = gf / np.maximum(q * denom, _TINY)[free]
        if gf @ d_free <= 0:
            d_free = gf / np.maximum(q * denom, _TINY)[free]
        if all_free:
            d = d_free
        else:
            d = np.zeros_like(y)
            d[free] = d_free
        if gf @ d_free <= 1e-14 * max(1.0, abs(value)):
            y = np.clip(y + d, lo, hi)
            break
        step = 1.0
        for _ in range(30):
            y_new = np.clip(y + step * d, lo, hi)
            new_value = lagrangian(y_new)
            if new_value >= value + 1e-4 * (grad @ (y_new - y)):
                break
            step *= 0.5
        else:
            break
        y, value = y_new, new_value
    return y, it


def stationary_power(system: LinkSystem, active, p0, alpha, lam, p_floor, tol=1e-12, max_iter=100, _sub=None):
    """Solve the closed-form condition ``p = clip(alpha / denom(p))`` for fixed ``lam``.

    The condition is the stationarity of the concave log-power Lagrangian
    ``sum alpha_v log sinr_v - sum lam_f p``; it is solved by projected
    Newton steps in ``y = log p`` over ``[log p_floor, log p_max]``.
    Returns ``(p, iterations)``.
    """
    sub = _sub if _sub is not None else _ActiveSet(system, active, p_floor)
    p = np.zeros(system.n_links)
    if sub.idx.size == 0:
        return p, 0
    idx = sub.idx
    y0 = np.clip(np.log(np.maximum(p0[idx], p_floor)), sub.lo, sub.hi)
    y, it = _newton_stationary(sub, alpha[idx], lam[sub.bs], y0, tol, max_iter)
    p[idx] = np.exp(y)
    return p, it


def dual_power_loop(system: LinkSystem, active, p0, alpha, lam0, cfg: SolverConfig):
    """Alternate the stationary power for fixed multipliers with the
    projected subgradient multiplier step.

    The per-BS step is ``gain_f * cfg.step * lam_f / p_max_f``, which makes
    the step scale-free in watts.  ``gain_f`` doubles while the budget
    residual of BS ``f`` keeps its sign and halves when it flips.  Returns
    ``(p, lam, converged, iterations)``.
    """
    lam = np.asarray(lam0, dtype=float).copy()
    p = np.where(active, np.maximum(p0, cfg.p_floor), 0.0)
    scale = np.maximum(_lambda_scale(system, active, alpha), _TINY)
    sub = _ActiveSet(system, active, cfg.p_floor)
    gain = np.ones(system.n_bs)
    prev_sign = np.zeros(system.n_bs)
    for t in range(1, cfg.dual_iters + 1):
        p_new, _ = stationary_power(system, active, p, alpha, lam, cfg.p_floor, _sub=sub)
        residual = system.p_max - system.consumed(active, p_new)
        sign = np.sign(residual)
        gain = np.where(sign * prev_sign > 0, np.minimum(2 * gain, 1e6), gain)
        gain = np.where(sign * prev_sign < 0, np.maximum(0.5 * gain, 1e-3), gain)
        prev_sign = sign
        step = gain * cfg.step * np.maximum(lam, 1e-2 * scale) / system.p_max
        lam_new = subgradient_update(DualState(lam=lam, step=step), residual).lam
        dlam = np.max(np.abs(lam_new - lam) / (lam + scale))
        dp = np.max(np.abs(p_new - p)[active] / p_new[active]) if active.any() else 0.0
        p, lam = p_new, lam_new
        if dlam <= cfg.dual_tol and dp <= cfg.dual_tol:
            return p, lam, True, t
    return p, lam, False, cfg.dual_iters


def _fit_budget(system: LinkSystem, active, p) -> np.ndarray:
    used = system.consumed(active, p)
    shrink = np.where(used > system.p_max, system.p_max / np.maximum(used, _TINY), 1.0)
    return p * shrink[system.bs]


def allocate_power(system: LinkSystem, active, p_init, cfg: SolverConfig) -> PowerResult:
    """SCALE outer rounds around the dual inner loop, keeping the best iterate."""
    active = np.asarray(active, dtype=bool)
    n = system.n_links
    coeffs = ScaleCoeffs.high_sinr(n)
    alpha, beta = coeffs.alpha, coeffs.beta
    p = np.where(active, np.maximum(np.asarray(p_init, dtype=float), cfg.p_floor), 0.0)
    p = _fit_budget(system, active, p)
    lam = _lambda_scale(system, active, alpha)
    x = active.astype(float)
    best = None
    total_dual = 0
    rounds = 0
    prev = None
    for s in range(cfg.inner_rounds):
        rounds = s + 1
        p, lam, conv, iters = dual_power_loop(system, active, p, alpha, lam, cfg)
        total_dual += iters
        if not conv:
            logger.warning("dual loop hit %d iterations without converging (round %d)", iters, s)
        p = _fit_budget(system, active, p)
        rate = system.sum_rate(x, p)
        if best is None or rate > best.sum_rate:
            best = PowerResult(p.copy(), rate, alpha.copy(), beta.copy(), lam.copy(), conv, rounds, 0)
        gamma = system.sinr(x, p)
        new = scale_coeffs(np.maximum(gamma, 1e-300))
        alpha = np.where(active, new.alpha, 1.0)
        beta = np.where(active, new.beta, 0.0)
        if prev is not None and active.any():
            change = np.max(np.abs(p - prev)[active] / p[active])
            if change <= 1e-7:
                break
        prev = p.copy()
    best.rounds = rounds
    best.dual_iterations = total_dual
    return best


# ----------------------------------------------------------- assignment


def round_links(
    system: LinkSystem,
    x_relaxed,
    threshold: float,
    user_cap: int | None = None,
    tiebreak=None,
    decimals: int | None = None,
    exchange: bool = False,
) -> np.ndarray:
    """Greedy rounding: take links by decreasing relaxed value while every
    resource they use, and the user's cap, has room.

    With ``decimals`` the values are compared after rounding to that many
    places; ties go to the larger ``tiebreak`` (if given), then the lower
    index.  With ``exchange`` the greedy set is then improved by single
    swaps: drop one link, refill greedily, and keep the result if it holds
    more links, or as many links with a larger ``sum(log1p(tiebreak))``.
    Exchange mode also fills any room left after the thresholded pass with
    sub-threshold links, in the same order.
    """
    x = np.asarray(x_relaxed, dtype=float)
    key = x if decimals is None else np.round(x, decimals)
    tb = np.zeros_like(x) if tiebreak is None else np.asarray(tiebreak, dtype=float)
    full = np.lexsort((np.arange(x.size), -tb, -key))
    order = full[x[full] >= threshold]
    res_of = [np.flatnonzero(col) for col in system.resources.T]

    res_list = [r.tolist() for r in res_of]
    user = system.user.tolist()

    def fill(chosen, remaining, per_user, candidates):
        # plain Python lists: this loop is hot and the sets are tiny
        rem = remaining.tolist()
        for v in candidates.tolist():
            if chosen[v]:
                continue
            r = res_list[v]
            if any(rem[i] < 1 for i in r):
                continue
            if user_cap is not None and per_user.get(user[v], 0) >= user_cap:
                continue
            chosen[v] = True
            for i in r:
                rem[i] -= 1
            per_user[user[v]] = per_user.get(user[v], 0) + 1
        remaining[:] = rem

    chosen = np.zeros(x.size, dtype=bool)
    remaining = system.caps.astype(float).copy()
    per_user = {}
    fill(chosen, remaining, per_user, order)
    if not exchange:
        return chosen.astype(float)
    # spare room goes to sub-threshold links too; power allocation decides
    # whether they carry anything
    order = full
    fill(chosen, remaining, per_user, order)

    weight = np.log1p(np.maximum(tb, 0.0))
    rank = np.empty(x.size, dtype=np.int64)
    rank[order] = np.arange(order.size)
    eligible = np.zeros(x.size, dtype=bool)
    eligible[order] = True
    for _ in range(x.size):
        improved = False
        for v in np.flatnonzero(chosen)[np.argsort(weight[chosen], kind="stable")]:
            # only links sharing a resource (or the user) with v can newly fit
            near = system.resources[res_of[v]].any(axis=0)
            if user_cap is not None:
                near |= system.user == system.user[v]
            near &= eligible
            near[v] = False
            cand = np.flatnonzero(near)
            if cand.size == 0:
                continue
            trial, rem, pu = chosen.copy(), remaining.copy(), dict(per_user)
            trial[v] = False
            rem[res_of[v]] += 1
            pu[system.user[v]] -= 1
            fill(trial, rem, pu, cand[np.argsort(rank[cand])])
            gain = trial.sum() - chosen.sum()
            if gain > 0 or (gain == 0 and weight[trial].sum() > weight[chosen].sum() + 1e-12):
                chosen, remaining, per_user = trial, rem, pu
                improved = True
                break
        if not improved:
            break
    return chosen.astype(float)


def _unit_rows(cols, L) -> sparse.csr_matrix:
    """Rows of the identity selected by ``cols``."""
    cols = np.asarray(cols, dtype=np.int64)
    return sparse.csr_matrix(
        (np.ones(cols.size), cols, np.arange(cols.size + 1)), shape=(cols.size, L)
    )


def build_assignment_gp(system: LinkSystem, p_hat, anchor, cfg: SolverConfig, user_cap=None) -> GpProblem:
    """Condensed GP in the relaxed assignment for fixed candidate powers.

    Minimises ``prod_v D_v(x) / lowerbound(X_v)(x)`` where ``X_v/D_v`` is
    ``1 + sinr_v`` and the numerator ``X_v`` is condensed into a monomial at
    ``anchor``.
    """
    L = system.n_links
    inter = system.coupling * p_hat[None, :]
    own = system.signal * p_hat
    x0 = np.asarray(anchor, dtype=float)

    # denominators: one unit-exponent term per interferer, then the noise
    rows, cols = np.nonzero(inter > 0)
    v_all = np.concatenate([rows, np.arange(L)])
    c_all = np.concatenate([cols, np.full(L, -1)])
    order = np.lexsort((c_all < 0, v_all))
    v_all, c_all = v_all[order], c_all[order]
    has = c_all >= 0
    log_c = np.log(system.noise[v_all])
    log_c[has] = np.log(inter[v_all[has], c_all[has]])
    exps = sparse.csr_matrix(
        (np.ones(has.sum()), c_all[has], np.concatenate(([0], np.cumsum(has)))), shape=(v_all.size, L)
    )
    den = PosynomialSet(log_c, exps, np.bincount(v_all, minlength=L))

    # numerators condensed at the anchor: prod_k (term_k / w_k)^w_k
    terms = inter * x0[None, :]
    own_term = own * x0
    total = terms.sum(axis=1) + system.noise + own_term
    W = terms / total[:, None]
    w_noise = system.noise / total
    w_own = own_term / total
    with np.errstate(divide="ignore", invalid="ignore"):
        mono_log_c = np.where(W > 0, W * (np.log(inter) - np.log(W)), 0.0).sum(axis=1)
        mono_log_c += w_noise * (np.log(system.noise) - np.log(w_noise))
        mono_log_c += np.where(w_own > 0, w_own * (np.log(own) - np.log(w_own)), 0.0)
    E = W + np.diag(w_own)
    inv = PosynomialSet(-mono_log_c, sparse.csr_matrix(-E), np.ones(L, dtype=int))
    factors = [den, inv]

    constraints = []
    for f in range(system.n_bs):
        links = np.flatnonzero(system.bs == f)
        if links.size:
            constraints.append(Posynomial(p_hat[links] / system.p_max[f], _unit_rows(links, L)))
    for r in range(system.caps.size):
        links = np.flatnonzero(system.resources[r])
        if links.size > system.caps[r]:
            constraints.append(Posynomial(np.full(links.size, 1.0 / system.caps[r]), _unit_rows(links, L)))
    if user_cap is not None:
        for u in np.unique(system.user):
            links = np.flatnonzero(system.user == u)
            if links.size > user_cap:
                constraints.append(Posynomial(np.full(links.size, 1.0 / user_cap), _unit_rows(links, L)))
    return GpProblem(
        lower=np.full(L, cfg.relax_floor),
        upper=np.ones(L),
        objective=factors,
        constraints=constraints,
    )


@dataclass
class AssignmentResult:
    x: np.ndarray
    objective_history: list
    gp_iterations: int


def allocate_assignment(system: LinkSystem, p_hat, anchor, cfg: SolverConfig, user_cap=None) -> AssignmentResult:
    """Iterated AGMA condensation + GP on the relaxed assignment.

    A condensation round is accepted only if it does not lower the relaxed
    sum-rate, so the returned history is non-decreasing.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    if np.any(p_hat <= 0):
        raise ValueError("candidate powers must be positive for every link")
    x = np.clip(np.asarray(anchor, dtype=float), cfg.relax_floor, 1.0)
    history = [system.sum_rate(x, p_hat)]
    gp_iters = 0
    for _ in range(cfg.condense_iters):
        problem = build_assignment_gp(system, p_hat, x, cfg, user_cap)
        # every constraint grows with x, so shrinking the anchor makes it strictly feasible
        start = np.maximum(x * 0.95 / max(1.0, problem.max_constraint(x)), cfg.relax_floor)
        result = solve_gp(
            problem,
            tol=cfg.gp_tol,
            max_iter=cfg.gp_max_iter,
            x0=start,
            barrier_factor=cfg.barrier_factor,
            initial_gap=cfg.gp_initial_gap,
        )
        gp_iters += result.iterations
        if result.status == "infeasible":
            raise GpInfeasibleError(
                f"assignment GP infeasible: {system.n_links} links, {system.n_bs} BSs, "
                f"caps {system.caps.tolist()}, phase-1 slack {result.residual:.3g}"
            )
        value = system.sum_rate(result.x, p_hat)
        if value < history[-1]:
            break
        improvement = value - history[-1]
        x = result.x
        history.append(value)
        if improvement <= cfg.condense_tol * max(1.0, abs(value)):
            break
    return AssignmentResult(x=x, objective_history=history, gp_iterations=gp_iters)
