import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nomascma.config import SolverConfig
from nomascma.estimators import NomaAllocator, ScmaAllocator
from nomascma.hetnet import NetworkConfig, generate_scenario
from nomascma.noma import solve_noma
from nomascma.scma import solve_scma

CFG = NetworkConfig(num_subcarriers=4)


@pytest.fixture(scope="module")
def state():
    return generate_scenario(CFG, seed=2)


def test_noma_fit_matches_functional_api(state):
    est = NomaAllocator().fit(state)
    sol = solve_noma(state, SolverConfig())
    assert est.sum_rate_ == sol.sum_rate
    np.testing.assert_array_equal(est.assignment_.rho, sol.assignment.rho)
    assert est.score(state) == pytest.approx(est.sum_rate_, rel=1e-12)
    assert est.n_iter_ == len(est.history_)
    assert est.stop_reason_ in ("tolerance", "stalled", "max_iter")


def test_scma_fit_matches_functional_api(state):
    est = ScmaAllocator(max_reuse=3).fit(state)
    sol = solve_scma(state, SolverConfig(max_reuse=3))
    assert est.sum_rate_ == sol.sum_rate
    assert est.codebooks_.num_codebooks == 6
    assert est.score(state) == pytest.approx(est.sum_rate_, rel=1e-12)


def test_parameters_override_config(state):
    base = SolverConfig(max_users_per_subcarrier=3, outer_iters=20)
    est = NomaAllocator(max_users_per_subcarrier=1, outer_iters=2, config=base).fit(state)
    assert est.n_iter_ <= 2
    assert np.all(est.assignment_.rho.sum(axis=1) <= 1)


def test_get_params_and_clone():
    est = ScmaAllocator(max_reuse=2, codebook_size=3)
    params = est.get_params()
    assert params["max_reuse"] == 2 and params["codebook_size"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    twin.set_params(max_reuse=4)
    assert est.max_reuse == 2


def test_score_requires_fit(state):
    with pytest.raises(NotFittedError):
        NomaAllocator().score(state)


def test_score_rejects_other_shapes(state):
    est = NomaAllocator(outer_iters=1).fit(state)
    other = generate_scenario(NetworkConfig(num_subcarriers=2), seed=2)
    with pytest.raises(ValueError):
        est.score(other)


def test_fit_rejects_non_state():
    with pytest.raises(TypeError):
        NomaAllocator().fit(np.ones((2, 3)))
