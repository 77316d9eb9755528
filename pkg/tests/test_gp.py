import numpy as np
import pytest
from scipy.optimize import minimize

from nomascma.gp import GpProblem, Posynomial, PosynomialSet, solve_gp


def mono(c, *exps):
    return Posynomial.monomial(c, exps)


def test_active_lower_bound():
    # minimize x s.t. 1/x <= 1
    prob = GpProblem([1e-3], [1e3], mono(1.0, 1.0), [mono(1.0, -1.0)])
    res = solve_gp(prob)
    assert res.converged
    assert res.x[0] == pytest.approx(1.0, rel=1e-5)


def test_sum_with_product_constraint():
    # minimize x + y s.t. 1/(x y) <= 1
    obj = Posynomial([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    prob = GpProblem([1e-3, 1e-3], [1e3, 1e3], obj, [mono(1.0, -1.0, -1.0)])
    res = solve_gp(prob)
    np.testing.assert_allclose(res.x, [1.0, 1.0], rtol=1e-4)
    assert res.objective == pytest.approx(2.0, rel=1e-6)


def test_square_root_objective():
    # minimize 2 sqrt(x) s.t. 4/x <= 1
    prob = GpProblem([1e-3], [1e3], mono(2.0, 0.5), [mono(4.0, -1.0)])
    res = solve_gp(prob)
    assert res.x[0] == pytest.approx(4.0, rel=1e-5)
    assert res.objective == pytest.approx(4.0, rel=1e-6)


def test_infeasible_detected():
    # x >= 2 and x <= 1
    prob = GpProblem([1e-3], [1e3], mono(1.0, 1.0), [mono(2.0, -1.0), mono(1.0, 1.0)])
    res = solve_gp(prob)
    assert res.status == "infeasible"
    assert not res.converged


def test_phase_one_from_infeasible_start():
    prob = GpProblem([1e-3], [1e3], mono(1.0, 1.0), [mono(5.0, -1.0)])
    res = solve_gp(prob, x0=[0.01])
    assert res.x[0] == pytest.approx(5.0, rel=1e-5)


def test_fixed_variable_box():
    obj = Posynomial([1.0, 1.0], [[1.0, 0.0], [0.0, -1.0]])
    prob = GpProblem([0.5, 1e-2], [0.5, 1e2], obj, [])
    res = solve_gp(prob)
    assert res.x[0] == 0.5
    assert res.x[1] == pytest.approx(1e2, rel=1e-4)


def test_factored_objective_is_product():
    f1 = Posynomial([1.0, 1.0], [[1.0, 0.0], [0.0, 0.0]])  # x + 1
    f2 = mono(1.0, -1.0, 0.0)  # 1/x
    prob = GpProblem([1e-2, 1.0], [1e2, 1.0], [f1, f2], [])
    res = solve_gp(prob)
    # (x + 1)/x decreases towards 1 at the upper bound
    assert res.x[0] == pytest.approx(1e2, rel=1e-4)
    assert prob.objective_value(res.x) == pytest.approx(1.01, rel=1e-6)


def test_posynomial_set_matches_list():
    a = Posynomial([1.0, 2.0], [[1.0, -1.0], [0.5, 0.0]])
    b = mono(3.0, -1.0, 2.0)
    s = PosynomialSet.from_list([a, b], 2)
    x = np.array([1.7, 0.4])
    np.testing.assert_allclose(np.exp(s.log_values(x)), [a(x), b(x)], rtol=1e-12)


def test_condense_is_lower_bound_exact_at_anchor():
    p = Posynomial([1.0, 2.0, 0.5], [[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]])
    x0 = np.array([0.8, 1.3])
    m = p.condense(x0)
    assert m(x0) == pytest.approx(p(x0), rel=1e-12)
    rng = np.random.default_rng(0)
    for x in rng.uniform(0.1, 5.0, size=(200, 2)):
        assert m(x) <= p(x) * (1 + 1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(lower=[], upper=[], objective=[]),
        dict(lower=[0.0], upper=[1.0], objective=mono(1.0, 1.0)),
        dict(lower=[2.0], upper=[1.0], objective=mono(1.0, 1.0)),
        dict(lower=[1.0], upper=[np.inf], objective=mono(1.0, 1.0)),
        dict(lower=[1.0, 1.0], upper=[2.0, 2.0], objective=mono(1.0, 1.0)),
    ],
)
def test_problem_validation(kwargs):
    with pytest.raises(ValueError):
        GpProblem(**kwargs)


def test_posynomial_rejects_nonpositive_coefficients():
    with pytest.raises(ValueError):
        Posynomial([1.0, 0.0], [[1.0], [2.0]])


def _random_gp(rng, n, n_con, terms, feasible=False):
    def posy(k):
        return Posynomial(rng.uniform(0.2, 2.0, k), rng.uniform(-1.5, 1.5, (k, n)))

    obj = posy(terms)
    cons = [posy(terms) for _ in range(n_con)]
    if feasible:
        # rescale so a random interior point sits at half of every limit
        x_star = np.exp(rng.uniform(-2, 2, n))
        cons = [Posynomial(exponents=c.exponents, log_coef=c.log_coef - c.log_value(x_star) + np.log(0.5)) for c in cons]
    return GpProblem(np.full(n, 1e-2), np.full(n, 1e2), obj, cons)


def _slsqp(prob, rng, starts=8):
    """Independent oracle: SLSQP in log space from several starts."""
    n = prob.n_vars
    lo, hi = np.log(prob.lower), np.log(prob.upper)
    cons = [{"type": "ineq", "fun": lambda y, c=c: -c.log_value(np.exp(y))} for c in _plain(prob.constraints)]
    best = None
    for _ in range(starts):
        y0 = rng.uniform(lo, hi)
        r = minimize(
            lambda y: prob.objective.log_values(np.exp(y)).sum(),
            y0,
            method="SLSQP",
            bounds=list(zip(lo, hi)),
            constraints=cons,
            options={"ftol": 1e-12, "maxiter": 500},
        )
        x = np.exp(r.x)
        if prob.max_constraint(x) <= 1 + 1e-7 and (best is None or prob.objective_value(x) < best):
            best = prob.objective_value(x)
    return best


def _plain(pset):
    out = []
    for s, k in zip(pset.starts, pset.sizes):
        out.append(Posynomial(exponents=pset.exponents[s : s + k], log_coef=pset.log_coef[s : s + k]))
    return out


@pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
@pytest.mark.parametrize("seed", range(12))
def test_matches_independent_solver(seed):
    rng = np.random.default_rng(seed)
    prob = _random_gp(rng, n=int(rng.integers(1, 5)), n_con=int(rng.integers(0, 4)), terms=int(rng.integers(1, 4)))
    res = solve_gp(prob)
    ref = _slsqp(prob, rng)
    if res.status == "infeasible":
        assert ref is None
        return
    assert prob.max_constraint(res.x) <= 1 + 1e-6
    assert ref is not None
    assert res.objective <= ref * (1 + 1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_beats_random_feasible_points(seed):
    rng = np.random.default_rng(100 + seed)
    prob = _random_gp(rng, n=3, n_con=2, terms=2, feasible=True)
    res = solve_gp(prob)
    x = np.exp(rng.uniform(np.log(prob.lower), np.log(prob.upper), size=(20_000, 3)))
    feas = [p for p in x if prob.max_constraint(p) <= 1.0][:1000]
    assert feas, "no random feasible point found"
    assert prob.max_constraint(res.x) <= 1 + 1e-6
    assert all(res.objective <= prob.objective_value(p) * (1 + 1e-6) for p in feas)
