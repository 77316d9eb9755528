"""Geometric programs solved in log space with a logarithmic barrier.

With ``y = log(x)`` a posynomial ``sum_k c_k prod_j x_j**a_kj`` becomes
``log-sum-exp(A y + log c)``, which is convex.  :func:`solve_gp` minimises
the log of the objective under ``posynomial <= 1`` constraints and box
bounds with a barrier method; each centering step is a damped Newton
iteration with backtracking line search.  A phase-1 problem with one
slack variable supplies a strictly feasible start when the caller does not.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .convex import agma_condense

__all__ = ["Posynomial", "PosynomialSet", "GpProblem", "GpResult", "GpInfeasibleError", "solve_gp"]

logger = logging.getLogger(__name__)


class GpInfeasibleError(RuntimeError):
    """No strictly feasible point exists (phase-1 optimum is nonnegative)."""


class Posynomial:
    """Sum of monomials ``c_k * prod_j x_j**a_kj`` with ``c_k > 0``.

    Parameters
    ----------
    coef : array_like, shape (K,)
        Positive term coefficients.
    exponents : array_like or sparse matrix, shape (K, n)
        Exponent of every variable in every term.
    log_coef : array_like, optional
        Give ``log(coef)`` directly instead of ``coef`` to avoid overflow.
    """

    def __init__(self, coef=None, exponents=None, *, log_coef=None):
        if exponents is None:
            raise ValueError("exponents are required")
        if (coef is None) == (log_coef is None):
            raise ValueError("pass exactly one of coef and log_coef")
        if log_coef is None:
            coef = np.atleast_1d(np.asarray(coef, dtype=float))
            if np.any(~(coef > 0)):
                raise ValueError("posynomial coefficients must be positive")
            log_coef = np.log(coef)
        self.log_coef = np.atleast_1d(np.asarray(log_coef, dtype=float))
        if sparse.isspmatrix_csr(exponents) and exponents.dtype == float:
            exps = exponents
        elif sparse.issparse(exponents):
            exps = sparse.csr_matrix(exponents, dtype=float)
        else:
            exps = sparse.csr_matrix(np.atleast_2d(np.asarray(exponents, dtype=float)))
        if exps.shape[0] != self.log_coef.size or self.log_coef.size == 0:
            raise ValueError("need one exponent row per coefficient and at least one term")
        self.exponents = exps

    @classmethod
    def monomial(cls, coef: float, exponents) -> "Posynomial":
        return cls([coef], np.atleast_2d(np.asarray(exponents, dtype=float)))

    @property
    def n_vars(self) -> int:
        return self.exponents.shape[1]

    @property
    def n_terms(self) -> int:
        return self.log_coef.size

    @property
    def coef(self) -> np.ndarray:
        return np.exp(self.log_coef)

    def term_values(self, x) -> np.ndarray:
        y = np.log(np.asarray(x, dtype=float))
        return np.exp(self.exponents @ y + self.log_coef)

    def log_value(self, x) -> float:
        y = np.log(np.asarray(x, dtype=float))
        z = self.exponents @ y + self.log_coef
        zmax = z.max()
        return float(zmax + np.log(np.exp(z - zmax).sum()))

    def __call__(self, x) -> float:
        return float(np.exp(self.log_value(x)))

    def condense(self, x0) -> "Posynomial":
        """Single-term AGMA lower bound of this posynomial, exact at ``x0``."""
        terms = self.term_values(x0)
        weights, _ = agma_condense(terms, terms)
        # prod (c_k x^a_k / u_k)^u_k
        log_c = float(np.sum(weights * (self.log_coef - np.log(weights))))
        exps = sparse.csr_matrix(weights[None, :] @ self.exponents)
        return Posynomial(exponents=exps, log_coef=[log_c])


class PosynomialSet:
    """Several posynomials sharing one term matrix.

    Term rows ``sizes[0]`` and onwards belong to the first posynomial, the
    next ``sizes[1]`` to the second and so on.  Equivalent to a list of
    :class:`Posynomial` but built without per-posynomial overhead.
    """

    def __init__(self, log_coef, exponents, sizes):
        self.log_coef = np.asarray(log_coef, dtype=float).reshape(-1)
        self.exponents = sparse.csr_matrix(exponents, dtype=float)
        self.sizes = np.asarray(sizes, dtype=int).reshape(-1)
        if np.any(self.sizes < 1) or self.sizes.sum() != self.log_coef.size:
            raise ValueError("sizes must be positive and add up to the number of terms")
        if self.exponents.shape[0] != self.log_coef.size:
            raise ValueError("need one exponent row per coefficient")
        self.starts = np.concatenate(([0], np.cumsum(self.sizes)[:-1]))

    @classmethod
    def from_list(cls, posys: Sequence[Posynomial], n_vars: int) -> "PosynomialSet":
        if not posys:
            return cls(np.zeros(0), sparse.csr_matrix((0, n_vars)), np.zeros(0, dtype=int))
        return cls(
            np.concatenate([p.log_coef for p in posys]),
            sparse.vstack([p.exponents for p in posys], format="csr"),
            [p.n_terms for p in posys],
        )

    def concat(self, other: "PosynomialSet") -> "PosynomialSet":
        return PosynomialSet(
            np.concatenate([self.log_coef, other.log_coef]),
            sparse.vstack([self.exponents, other.exponents], format="csr"),
            np.concatenate([self.sizes, other.sizes]),
        )

    def __len__(self) -> int:
        return self.sizes.size

    @property
    def n_vars(self) -> int:
        return self.exponents.shape[1]

    def log_values(self, x) -> np.ndarray:
        """Log of every posynomial at ``x``."""
        if len(self) == 0:
            return np.zeros(0)
        z = self.exponents @ np.log(np.asarray(x, dtype=float)) + self.log_coef
        group = np.repeat(np.arange(len(self)), self.sizes)
        zmax = np.maximum.reduceat(z, self.starts)
        return zmax + np.log(np.add.reduceat(np.exp(z - zmax[group]), self.starts))


def _as_set(item, n_vars: int) -> PosynomialSet:
    if isinstance(item, PosynomialSet):
        return item
    if isinstance(item, Posynomial):
        item = [item]
    items = list(item)
    sets = [p for p in items if isinstance(p, PosynomialSet)]
    single = PosynomialSet.from_list([p for p in items if isinstance(p, Posynomial)], n_vars)
    for extra in sets:
        single = single.concat(extra)
    return single


@dataclass
class GpProblem:
    """``minimize prod(objective) s.t. c(x) <= 1 for c in constraints, lower <= x <= upper``.

    ``objective`` is a posynomial or a collection of posynomial factors
    whose product is minimised; the factored form keeps the log-objective a
    plain sum of log-sum-exp terms.  Factors and constraints may be given as
    :class:`Posynomial` objects, :class:`PosynomialSet` blocks or a mix.
    """

    lower: np.ndarray
    upper: np.ndarray
    objective: object
    constraints: object = ()

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        n = self.lower.size
        if n == 0:
            raise ValueError("a GP needs at least one variable")
        if self.upper.shape != (n,):
            raise ValueError("lower and upper bounds differ in length")
        if np.any(~(self.lower > 0)) or np.any(self.upper < self.lower) or not np.all(np.isfinite(self.upper)):
            raise ValueError("bounds must satisfy 0 < lower <= upper < inf")
        self.objective = _as_set(self.objective, n)
        self.constraints = _as_set(self.constraints, n)
        if len(self.objective) == 0:
            raise ValueError("objective needs at least one factor")
        for block in (self.objective, self.constraints):
            if block.n_vars != n:
                raise ValueError(f"posynomial has {block.n_vars} variables, problem has {n}")

    @property
    def n_vars(self) -> int:
        return self.lower.size

    def objective_value(self, x) -> float:
        return float(np.exp(self.objective.log_values(x).sum()))

    def max_constraint(self, x) -> float:
        """Largest constraint value (1.0 means active); 0.0 without constraints."""
        if len(self.constraints) == 0:
            return 0.0
        return float(np.exp(self.constraints.log_values(x).max()))


@dataclass
class GpResult:
    x: np.ndarray
    objective: float
    status: str  # "optimal", "max_iter" or "infeasible"
    residual: float  # duality-gap bound m/t plus final Newton decrement
    iterations: int

    @property
    def converged(self) -> bool:
        return self.status == "optimal"


_DENSE_LIMIT = 2_000_000  # terms x variables below which numpy beats scipy.sparse


class _Stack:
    """Posynomials stacked into one term matrix, grouped contiguously.

    Each group ``g`` contributes ``f_g(y) = log sum_t exp(a_t . y + b_t)``.
    Rows with at most one nonzero exponent (the bulk in practice) are kept
    as ``(column, value)`` pairs so gradients and Hessians reduce to
    bincounts; the remaining rows form a dense or sparse matrix.
    """

    def __init__(self, posys: PosynomialSet, free: np.ndarray, y_fixed: np.ndarray):
        A = posys.exponents
        b = posys.log_coef
        sizes = posys.sizes
        if (~free).any():
            b = b + A[:, ~free] @ y_fixed
        self.b = b
        self.n_vars = int(free.sum())
        self.n_groups = sizes.size
        self.n_terms = b.size
        self.starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(int)
        self.group = np.repeat(np.arange(self.n_groups), sizes)
        self.multi = sizes > 1
        self._split(A[:, free].tocsr())

    def _split(self, A):
        A.eliminate_zeros()
        nnz = np.diff(A.indptr)
        simple = nnz <= 1
        rows = np.flatnonzero(simple & (nnz == 1))
        self.s_rows = rows
        self.s_cols = A.indices[A.indptr[rows]]
        self.s_vals = A.data[A.indptr[rows]]
        self.g_rows = np.flatnonzero(~simple)
        Ag = A[self.g_rows]
        self.dense = Ag.shape[0] * Ag.shape[1] <= _DENSE_LIMIT
        self.Ag = Ag.toarray() if self.dense else Ag
        self.g_group = self.group[self.g_rows]
        self.g_multi = self.multi[self.g_group]
        self.Sg = sparse.csr_matrix(
            (np.ones(self.g_rows.size), (self.g_group, np.arange(self.g_rows.size))),
            shape=(self.n_groups, self.g_rows.size),
        )
        s_group = self.group[rows]
        self.s_flat = s_group * self.n_vars + self.s_cols
        self.s_multi = self.multi[s_group]

    def with_extra_column(self, column: np.ndarray) -> "_Stack":
        """Copy with one more variable whose exponent in every term is ``column``."""
        n = self.n_vars
        Ag = sparse.coo_matrix(self.Ag)
        rows = np.concatenate([self.s_rows, self.g_rows[Ag.row], np.arange(self.n_terms)])
        cols = np.concatenate([self.s_cols, Ag.col, np.full(self.n_terms, n)])
        vals = np.concatenate([self.s_vals, Ag.data, column])
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_terms, n + 1))
        new = object.__new__(_Stack)
        new.__dict__.update(self.__dict__)
        new.n_vars = n + 1
        new._split(A)
        return new

    def _z(self, y):
        z = self.b.copy()
        z[self.s_rows] += self.s_vals * y[self.s_cols]
        if self.g_rows.size:
            z[self.g_rows] += self.Ag @ y
        return z

    def values(self, y: np.ndarray) -> np.ndarray:
        if self.n_groups == 0:
            return np.zeros(0)
        z = self._z(y)
        zmax = np.maximum.reduceat(z, self.starts)
        s = np.add.reduceat(np.exp(z - zmax[self.group]), self.starts)
        return zmax + np.log(s)

    def derivatives(self, y: np.ndarray):
        """Group values, softmax term weights and the (groups x n) gradient matrix."""
        z = self._z(y)
        zmax = np.maximum.reduceat(z, self.starts)
        e = np.exp(z - zmax[self.group])
        s = np.add.reduceat(e, self.starts)
        f = zmax + np.log(s)
        w = e / s[self.group]
        n = self.n_vars
        G = np.bincount(self.s_flat, weights=w[self.s_rows] * self.s_vals, minlength=self.n_groups * n)
        G = G.reshape(self.n_groups, n).astype(float)
        if self.g_rows.size:
            wg = w[self.g_rows]
            if self.dense:
                G += self.Sg @ (wg[:, None] * self.Ag)
            else:
                G += (self.Sg @ self.Ag.multiply(wg[:, None])).toarray()
        return f, w, G

    def hessian(self, w, G, group_scale, group_curv) -> np.ndarray:
        """``sum_g group_scale_g * hess(f_g) + group_curv_g * grad(f_g) grad(f_g)^T``.

        Uses ``hess(f_g) = A_g^T diag(w_g) A_g - grad(f_g) grad(f_g)^T``,
        which vanishes for single-term groups.
        """
        n = self.n_vars
        d = w * group_scale[self.group]
        sm = self.s_multi
        H = np.diag(np.bincount(self.s_cols[sm], weights=d[self.s_rows[sm]] * self.s_vals[sm] ** 2, minlength=n).astype(float))
        gm = self.g_multi
        if gm.any():
            dg = d[self.g_rows[gm]]
            Ag = self.Ag[gm] if self.dense else self.Ag[np.flatnonzero(gm)]
            if self.dense:
                H += Ag.T @ (dg[:, None] * Ag)
            else:
                H += (Ag.T @ Ag.multiply(dg[:, None])).toarray()
        coef = np.where(self.multi, group_curv - group_scale, group_curv)
        nz = coef != 0
        if nz.any():
            Gn = G[nz]
            H += Gn.T @ (coef[nz][:, None] * Gn)
        return H


def _barrier_solve(obj: _Stack, con: _Stack, ulo, uhi, y0, tol, max_iter, barrier_factor, stop=None, t0=1.0):
    """Barrier method on ``sum(obj groups)`` with ``con groups <= 0`` and a box.

    Returns ``(y, status, gap, iterations)``.
    """
    n = y0.size
    m = con.n_groups + 2 * n
    t = t0
    y = y0.copy()
    iters = 0
    decrement = np.inf
    alpha_ls, beta_ls = 0.25, 0.5
    newton_tol = 1e-7

    def phi(yy):
        fc = con.values(yy)
        if np.any(fc >= 0) or np.any(yy >= uhi) or np.any(yy <= ulo):
            return np.inf
        return t * obj.values(yy).sum() - np.log(-fc).sum() - np.log(uhi - yy).sum() - np.log(yy - ulo).sum()

    while True:
        # centering
        while iters < max_iter:
            fo, wo, Go = obj.derivatives(y)
            dhi = 1.0 / (uhi - y)
            dlo = 1.0 / (y - ulo)
            grad = t * Go.sum(axis=0) + dhi - dlo
            scale_o = np.full(obj.n_groups, t)
            H = obj.hessian(wo, Go, scale_o, np.zeros(obj.n_groups))
            if con.n_groups:
                fc, wc, Gc = con.derivatives(y)
                inv = 1.0 / (-fc)
                grad += Gc.T @ inv
                H += con.hessian(wc, Gc, inv, inv**2)
            H[np.diag_indices(n)] += dhi**2 + dlo**2
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -grad
            slope = float(grad @ step)
            if slope >= 0:  # numerically indefinite; fall back to steepest descent
                step = -grad
                slope = -float(grad @ grad)
            decrement = -slope
            iters += 1
            if decrement / 2.0 <= newton_tol:
                break
            # stay strictly inside the box before evaluating anything else
            with np.errstate(divide="ignore", invalid="ignore"):
                room_hi = np.where(step > 0, (uhi - y) / step, np.inf)
                room_lo = np.where(step < 0, (ulo - y) / step, np.inf)
            s = min(1.0, 0.99 * float(min(room_hi.min(), room_lo.min())))
            phi0 = phi(y)
            for _ in range(40):
                val = phi(y + s * step)
                if val <= phi0 + alpha_ls * s * slope:
                    break
                s *= beta_ls
            else:
                break  # no progress at working precision: treat as centered
            y = y + s * step
            if phi0 - val <= 1e-12 * max(1.0, abs(phi0)):
                break  # stalled
            if stop is not None and stop(y):
                return y, "stopped", m / t, iters
        gap = m / t
        if gap <= tol:
            return y, "optimal", gap + max(decrement, 0.0) / 2.0, iters
        if iters >= max_iter:
            return y, "max_iter", gap + max(decrement, 0.0) / 2.0, iters
        t /= barrier_factor


def _interior_start(y, ulo, uhi):
    width = uhi - ulo
    margin = np.minimum(1e-3 * width, 1e-2)
    return np.clip(y, ulo + margin, uhi - margin)


def solve_gp(
    problem: GpProblem,
    tol: float = 1e-6,
    max_iter: int = 500,
    x0=None,
    barrier_factor: float = 0.5,
    initial_gap: float | None = None,
) -> GpResult:
    """Solve a geometric program.

    Parameters
    ----------
    problem : GpProblem
    tol : float
        Target bound on the duality gap ``m / t``.
    max_iter : int
        Cap on Newton steps (phase 1 and phase 2 counted separately).
    x0 : array_like, optional
        Starting point; moved strictly inside the box.  Phase 1 runs if it
        violates a constraint.
    barrier_factor : float
        The barrier weight ``1/t`` is multiplied by this after each centering.
    initial_gap : float, optional
        Start the barrier at ``t = m / initial_gap`` (``m`` barrier terms)
        instead of ``t = 1``.  Useful when a good ``x0`` is supplied.

    Returns
    -------
    GpResult
        ``status`` is ``"infeasible"`` when phase 1 proves no strictly
        feasible point exists, ``"max_iter"`` when the Newton budget ran out.
    """
    if not 0 < barrier_factor < 1:
        raise ValueError("barrier_factor must lie in (0, 1)")
    if initial_gap is not None and not initial_gap > 0:
        raise ValueError("initial_gap must be positive")
    lo_all, hi_all = np.log(problem.lower), np.log(problem.upper)
    free = hi_all > lo_all
    y_fixed = lo_all[~free]
    if x0 is None:
        y_start = 0.5 * (lo_all + hi_all)
    else:
        y_start = np.log(np.clip(np.asarray(x0, dtype=float), problem.lower, problem.upper))
    ulo, uhi = lo_all[free], hi_all[free]

    obj = _Stack(problem.objective, free, y_fixed)
    con = _Stack(problem.constraints, free, y_fixed)

    def assemble(yf):
        y = np.empty(free.size)
        y[free] = yf
        y[~free] = y_fixed
        return np.exp(y)

    if not free.any():
        x = assemble(np.zeros(0))
        ok = problem.max_constraint(x) <= 1.0
        return GpResult(x, problem.objective_value(x), "optimal" if ok else "infeasible", 0.0, 0)

    y = _interior_start(y_start[free], ulo, uhi)
    total_iters = 0
    fc = con.values(y)
    if con.n_groups and fc.max() >= 0:
        # phase 1: minimise s subject to f_i(y) <= s
        s0 = float(fc.max()) + 1.0
        con1 = con.with_extra_column(-np.ones(con.n_terms))
        e = np.zeros(y.size + 1)
        e[-1] = 1.0
        obj1 = _Stack(PosynomialSet([0.0], e[None, :], [1]), np.ones(y.size + 1, bool), np.zeros(0))
        ulo1 = np.append(ulo, -1.0)
        uhi1 = np.append(uhi, s0 + 1.0)
        y1, status, _, it = _barrier_solve(
            obj1, con1, ulo1, uhi1, np.append(y, s0), 1e-8, max_iter, barrier_factor,
            stop=lambda v: v[-1] < -1e-6,
        )
        total_iters += it
        if status != "stopped":
            x = assemble(y1[:-1])
            logger.debug("GP phase 1 ended at slack %.3g", y1[-1])
            return GpResult(x, problem.objective_value(x), "infeasible", float(y1[-1]), total_iters)
        y = y1[:-1]

    t0 = 1.0 if initial_gap is None else (con.n_groups + 2 * y.size) / initial_gap
    y, status, residual, it = _barrier_solve(obj, con, ulo, uhi, y, tol, max_iter, barrier_factor, t0=t0)
    total_iters += it
    x = assemble(y)
    return GpResult(x, problem.objective_value(x), status, float(residual), total_iters)
