"""Sweeps over user and cell counts, result files, and brute-force oracles."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .config import SolverConfig
from .hetnet import ChannelState, NetworkConfig, generate_scenario
from .noma import NomaLinks, solve_noma
from .scma import ScmaLinks, enumerate_codebooks, solve_scma

__all__ = [
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "OracleResult",
    "OracleTooLargeError",
    "scenario_config",
    "run_scenario",
    "run_sweep",
    "brute_force_oracle",
    "water_filling",
    "power_grid",
    "format_csv",
    "format_plotdata",
    "parse_csv",
    "emit",
    "CSV_HEADER",
]

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "axis",
    "axis_value",
    "seed",
    "noma_sumrate_nats",
    "scma_sumrate_nats",
    "noma_iters",
    "scma_iters",
    "wall_ms",
]

_AXES = {"users": "users", "user_count": "users", "cells": "cells", "cell_count": "cells"}


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep.

    ``axis`` is ``"users"`` (total user count, spread round-robin over the
    base stations of ``base``) or ``"cells"`` (number of small cells, each
    with the last cell's user count and budget).  ``timing`` records wall
    time per scenario; it is off by default so that identical specs give
    identical files.
    """

    axis: str
    values: tuple
    seeds: tuple = tuple(range(1, 21))
    base: NetworkConfig = field(default_factory=NetworkConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    timing: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {sorted(_AXES)}, got {self.axis!r}")
        object.__setattr__(self, "axis", _AXES[self.axis])
        values = tuple(int(v) for v in self.values)
        seeds = tuple(int(s) for s in self.seeds)
        if not values or list(values) != sorted(set(values)):
            raise ValueError("values must be non-empty, ascending and distinct")
        if not seeds:
            raise ValueError("need at least one seed")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "seeds", seeds)


@dataclass
class SweepRow:
    axis: str
    axis_value: int
    seed: int
    noma_sum_rate: float | None
    scma_sum_rate: float | None
    noma_iters: int | None
    scma_iters: int | None
    wall_ms: int | None = None
    error: str | None = field(default=None, compare=False)

    @property
    def failed(self) -> bool:
        return self.noma_sum_rate is None or self.scma_sum_rate is None


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.failed]


def scenario_config(spec: SweepSpec, value: int) -> NetworkConfig:
    if spec.axis == "users":
        return spec.base.with_users(value)
    return spec.base.with_small_cells(value)


def run_scenario(state: ChannelState, solver: SolverConfig | None = None):
    """Run both solvers on one channel state; returns ``(noma, scma)`` solutions."""
    solver = solver or SolverConfig()
    return solve_noma(state, solver), solve_scma(state, solver)


def _run_one(spec: SweepSpec, value: int, seed: int) -> SweepRow:
    start = time.perf_counter()
    try:
        state = generate_scenario(scenario_config(spec, value), seed=seed)
        noma, scma = run_scenario(state, spec.solver)
    except Exception as exc:  # recorded, the sweep goes on
        logger.warning("%s=%d seed=%d failed: %s", spec.axis, value, seed, exc)
        return SweepRow(spec.axis, value, seed, None, None, None, None, None, error=f"{type(exc).__name__}: {exc}")
    wall = int(round(1000 * (time.perf_counter() - start))) if spec.timing else None
    return SweepRow(spec.axis, value, seed, noma.sum_rate, scma.sum_rate, noma.iterations, scma.iterations, wall)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """One row per (axis value, seed), ordered by axis value then seed."""
    jobs = list(itertools.product(spec.values, spec.seeds))
    if spec.n_jobs == 1:
        rows = [_run_one(spec, v, s) for v, s in jobs]
    else:
        rows = Parallel(n_jobs=spec.n_jobs)(delayed(_run_one)(spec, v, s) for v, s in jobs)
    return SweepResult(rows=list(rows))


# ------------------------------------------------------------------ files


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(result: SweepResult, bits: bool = False) -> str:
    """CSV text; rates in nats, or bits with ``bits=True`` (columns renamed)."""
    scale = 1.0 / math.log(2.0) if bits else 1.0
    header = list(CSV_HEADER)
    if bits:
        header = [h.replace("_nats", "_bits") for h in header]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in result.rows:
        rates = [None if v is None else v * scale for v in (r.noma_sum_rate, r.scma_sum_rate)]
        writer.writerow(
            [_fmt(v) for v in (r.axis, r.axis_value, r.seed, *rates, r.noma_iters, r.scma_iters, r.wall_ms)]
        )
    return buf.getvalue()


def parse_csv(text: str) -> SweepResult:
    """Inverse of :func:`format_csv` (rates come back in the file's unit)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ValueError("empty CSV")
    expected = [CSV_HEADER, [h.replace("_nats", "_bits") for h in CSV_HEADER]]
    if header not in expected:
        raise ValueError(f"unexpected CSV header {header}")

    def num(cast, s):
        return None if s == "" else cast(s)

    rows = []
    for rec in reader:
        if len(rec) != len(CSV_HEADER):
            raise ValueError(f"row has {len(rec)} fields, expected {len(CSV_HEADER)}")
        rows.append(
            SweepRow(
                rec[0],
                int(rec[1]),
                int(rec[2]),
                num(float, rec[3]),
                num(float, rec[4]),
                num(int, rec[5]),
                num(int, rec[6]),
                num(int, rec[7]),
            )
        )
    return SweepResult(rows)


def format_plotdata(result: SweepResult, bits: bool = False) -> str:
    """Whitespace-separated mean and sample standard deviation per axis value.

    Failed rows are skipped; ``n`` is the number of seeds averaged.
    """
    unit = "bits" if bits else "nats"
    scale = 1.0 / math.log(2.0) if bits else 1.0
    axis = result.rows[0].axis if result.rows else ""
    lines = [f"# axis={axis} unit={unit}", "# axis_value noma_mean noma_std scma_mean scma_std n"]
    values = sorted({r.axis_value for r in result.rows})
    for v in values:
        ok = [r for r in result.rows if r.axis_value == v and not r.failed]
        noma = np.array([r.noma_sum_rate for r in ok]) * scale
        scma = np.array([r.scma_sum_rate for r in ok]) * scale
        stats = []
        for arr in (noma, scma):
            mean = float(arr.mean()) if arr.size else float("nan")
            std = float(arr.std(ddof=1)) if arr.size > 1 else float("nan")
            stats += [mean, std]
        lines.append(f"{v} " + " ".join(f"{x:.6f}" for x in stats) + f" {len(ok)}")
    return "\n".join(lines) + "\n"


def emit(result: SweepResult, path, fmt: str = "csv", bits: bool = False) -> Path:
    """Write ``result`` to ``path`` as ``"csv"`` or ``"plotdata"``."""
    if fmt == "csv":
        text = format_csv(result, bits)
    elif fmt == "plotdata":
        text = format_plotdata(result, bits)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    path.write_text(text)
    return path


# ---------------------------------------------------------------- oracles


class OracleTooLargeError(ValueError):
    """The instance exceeds what exhaustive search can cover."""


MAX_ASSIGNMENTS = 10_000
MAX_GRID_POINTS = 100
MAX_EVALUATIONS = 20_000_000


@dataclass
class OracleResult:
    sum_rate: float
    x: np.ndarray  # best binary link assignment
    p: np.ndarray  # best link powers
    assignments: int  # feasible assignments examined
    method: str


def power_grid(p_floor: float, p_max: float, points: int) -> np.ndarray:
    """``points`` geometrically spaced powers from ``p_floor`` to ``p_max``."""
    if not 1 <= points <= MAX_GRID_POINTS:
        raise OracleTooLargeError(f"grid of {points} points; at most {MAX_GRID_POINTS} allowed")
    if points == 1:
        return np.array([p_max])
    return np.geomspace(p_floor, p_max, points)


def water_filling(gains, budget: float) -> np.ndarray:
    """Maximise ``sum log(1 + g p)`` subject to ``sum p <= budget``, ``p >= 0``."""
    g = np.asarray(gains, dtype=float)
    p = np.zeros_like(g)
    pos = np.flatnonzero(g > 0)
    if pos.size == 0 or budget <= 0:
        return p
    inv = np.sort(1.0 / g[pos])
    # largest k with water level (budget + sum inv[:k]) / k above inv[k-1]
    csum = np.cumsum(inv)
    k = np.arange(1, inv.size + 1)
    level = (budget + csum) / k
    k_star = int(np.flatnonzero(level > inv)[-1]) + 1
    mu = (budget + csum[k_star - 1]) / k_star
    p[pos] = np.maximum(mu - 1.0 / g[pos], 0.0)
    return p


def _feasible_assignments(system, user_cap=None):
    """All binary link vectors within the resource caps (and user cap)."""
    L = system.n_links
    res = system.resources.astype(int)
    caps = system.caps
    out = []
    # depth-first with remaining capacity
    remaining = caps.astype(float).copy()
    per_user = {}
    chosen = np.zeros(L, dtype=bool)

    def rec(v):
        if len(out) > MAX_ASSIGNMENTS:
            return
        if v == L:
            out.append(chosen.copy())
            return
        rec(v + 1)
        r = np.flatnonzero(res[:, v])
        u = system.user[v]
        if np.all(remaining[r] >= 1) and (user_cap is None or per_user.get(u, 0) < user_cap):
            remaining[r] -= 1
            per_user[u] = per_user.get(u, 0) + 1
            chosen[v] = True
            rec(v + 1)
            chosen[v] = False
            per_user[u] -= 1
            remaining[r] += 1

    rec(0)
    if len(out) > MAX_ASSIGNMENTS:
        raise OracleTooLargeError(f"more than {MAX_ASSIGNMENTS} feasible assignments over {L} links")
    return out


def _pareto(power, rate, payload):
    """Points not dominated in (less power, more rate)."""
    order = np.lexsort((-rate, power))
    power, rate, payload = power[order], rate[order], payload[order]
    prev_best = np.maximum.accumulate(np.concatenate(([-np.inf], rate[:-1])))
    keep = rate > prev_best
    return power[keep], rate[keep], payload[keep]


def _noma_single_cell(state: ChannelState, L_T: int, grid: np.ndarray):
    """Exhaustive grid search for one BS: per-subcarrier Pareto fronts of
    (power, rate), combined under the budget."""
    links = NomaLinks(state, L_T)
    system = links.system
    N = state.num_subcarriers
    p_max = float(state.p_max[0])
    fronts = []
    assignments = 1
    for n in range(N):
        idx = np.flatnonzero(links.n == n)
        subsets = [()]
        for k in range(1, min(L_T, idx.size) + 1):
            subsets += list(itertools.combinations(idx, k))
        assignments *= len(subsets)
        if assignments > MAX_ASSIGNMENTS:
            raise OracleTooLargeError(f"more than {MAX_ASSIGNMENTS} subcarrier assignments")
        powers, rates, configs = [np.zeros(1)], [np.zeros(1)], [np.zeros((1, system.n_links))]
        for sub in subsets:
            if not sub:
                continue
            sub = np.asarray(sub)
            combos = grid.size ** sub.size
            if combos > MAX_EVALUATIONS:
                raise OracleTooLargeError(f"{combos} power combinations on subcarrier {n}")
            mesh = np.array(np.meshgrid(*([grid] * sub.size), indexing="ij")).reshape(sub.size, -1).T
            P = np.zeros((mesh.shape[0], system.n_links))
            P[:, sub] = mesh
            x = np.zeros(system.n_links)
            x[sub] = 1.0
            gamma = (x * system.signal * P) / ((x * P) @ system.coupling.T + system.noise)
            r = np.log1p(gamma).sum(axis=1)
            total = mesh.sum(axis=1)
            ok = total <= p_max * (1 + 1e-12)
            powers.append(total[ok])
            rates.append(r[ok])
            configs.append(P[ok])
        pw, rt, cf = _pareto(np.concatenate(powers), np.concatenate(rates), np.concatenate(configs))
        fronts.append((pw, rt, cf))

    # fold the fronts together, keeping only Pareto points within budget
    pw, rt, cf = fronts[0]
    for pw2, rt2, cf2 in fronts[1:-1]:
        if pw.size * pw2.size > MAX_EVALUATIONS:
            raise OracleTooLargeError(f"front merge of {pw.size * pw2.size} pairs")
        i, j = np.divmod(np.arange(pw.size * pw2.size), pw2.size)
        tot = pw[i] + pw2[j]
        ok = np.flatnonzero(tot <= p_max * (1 + 1e-12))
        keep_p, keep_r, keep_k = _pareto(tot[ok], rt[i[ok]] + rt2[j[ok]], ok)
        pw, rt, cf = keep_p, keep_r, cf[i[keep_k]] + cf2[j[keep_k]]
    if len(fronts) > 1:
        # last front: best partner within the remaining budget (fronts are sorted)
        pw2, rt2, cf2 = fronts[-1]
        j = np.searchsorted(pw2, p_max * (1 + 1e-12) - pw, side="right") - 1
        ok = j >= 0
        total = np.where(ok, rt + rt2[np.maximum(j, 0)], -np.inf)
        i = int(np.argmax(total))
        return float(total[i]), *_payload(cf[i] + cf2[j[i]]), assignments
    i = int(np.argmax(rt))
    return float(rt[i]), *_payload(cf[i]), assignments


def _payload(p):
    return (p > 0).astype(float), p


def _scma_single_cell(state: ChannelState, cfg: SolverConfig):
    """Without other cells the links do not interact: for each feasible
    codebook assignment the optimal powers are water-filling."""
    cbs = enumerate_codebooks(state.num_subcarriers, cfg.codebook_size)
    links = ScmaLinks(state, cbs, cfg.max_reuse)
    system = links.system
    snr = system.signal / system.noise
    best = (-np.inf, None, None)
    feasible = _feasible_assignments(system, cfg.max_codebooks_per_user)
    for x in feasible:
        p = np.zeros(system.n_links)
        p[x] = water_filling(snr[x], float(state.p_max[0]))
        rate = float(np.log1p(snr * p).sum())
        if rate > best[0]:
            best = (rate, x.astype(float), p)
    return best[0], best[1], best[2], len(feasible)


def _direct_search(system, grid_points: int, p_floor: float, user_cap=None):
    """Every feasible assignment times every grid power of its links."""
    feasible = _feasible_assignments(system, user_cap)
    total = sum(grid_points ** int(x.sum()) for x in feasible)
    if total > MAX_EVALUATIONS:
        raise OracleTooLargeError(f"{len(feasible)} assignments need {total} power evaluations")
    grids = {f: power_grid(p_floor, float(system.p_max[f]), grid_points) for f in range(system.n_bs)}
    best = (0.0, np.zeros(system.n_links), np.zeros(system.n_links))
    for x in feasible:
        act = np.flatnonzero(x)
        if act.size == 0:
            continue
        axes = [grids[int(system.bs[v])] for v in act]
        mesh = np.array(np.meshgrid(*axes, indexing="ij")).reshape(act.size, -1).T
        P = np.zeros((mesh.shape[0], system.n_links))
        P[:, act] = mesh
        used = np.stack([P[:, system.bs == f].sum(axis=1) for f in range(system.n_bs)], axis=1)
        ok = np.all(used <= system.p_max * (1 + 1e-12), axis=1)
        if not ok.any():
            continue
        P = P[ok]
        xf = x.astype(float)
        gamma = (xf * system.signal * P) / ((xf * P) @ system.coupling.T + system.noise)
        r = np.log1p(gamma).sum(axis=1)
        k = int(np.argmax(r))
        if r[k] > best[0]:
            best = (float(r[k]), xf, P[k].copy())
    return best[0], best[1], best[2], len(feasible)


def brute_force_oracle(
    state: ChannelState, scheme: str, grid_points: int = 100, cfg: SolverConfig | None = None
) -> OracleResult:
    """Best true sum-rate over all binary assignments and powers.

    Powers range over ``grid_points`` geometric levels from ``cfg.p_floor``
    to the BS budget, except for single-cell SCMA where the links do not
    interact and water-filling gives the exact optimum for each assignment
    (which dominates every grid point).  Raises
    :class:`OracleTooLargeError` when the search space is too big.
    """
    cfg = cfg or SolverConfig()
    if scheme not in ("noma", "scma"):
        raise ValueError("scheme must be 'noma' or 'scma'")
    if state.num_bs == 1 and scheme == "scma":
        rate, x, p, count = _scma_single_cell(state, cfg)
        return OracleResult(rate, x, p, count, "water-filling")
    if state.num_bs == 1:
        grid = power_grid(cfg.p_floor, float(state.p_max[0]), grid_points)
        rate, x, p, count = _noma_single_cell(state, cfg.max_users_per_subcarrier, grid)
        return OracleResult(rate, x, p, count, "grid")
    if scheme == "noma":
        system = NomaLinks(state, cfg.max_users_per_subcarrier).system
        user_cap = None
    else:
        cbs = enumerate_codebooks(state.num_subcarriers, cfg.codebook_size)
        system = ScmaLinks(state, cbs, cfg.max_reuse, cfg.literal_scma_interference).system
        user_cap = cfg.max_codebooks_per_user
    rate, x, p, count = _direct_search(system, grid_points, cfg.p_floor, user_cap)
    return OracleResult(rate, x, p, count, "grid")
