import numpy as np
import pytest

from horizon_calc.bprocess import Decomposition, from_path
from horizon_calc.calculus import (
    DerivativeMismatchError,
    SmoothFunction,
    ibp_residual,
    identity_suite,
    ito_residual,
)
from horizon_calc.grid_paths import SamplePath, ScenarioBatch, make_grid, sample_brownian
from horizon_calc.integration import NotInnerError, brownian_bprocess
from horizon_calc.interval_sets import IntervalTypeSet, make_interval_set


def test_derivative_check_rejects_wrong_gradient():
    with pytest.raises(DerivativeMismatchError):
        SmoothFunction(lambda x: x[..., 0] ** 2, lambda x: x, lambda x: 2 * np.ones(np.shape(x) + (1,)))


def test_builtin_functions_pass_derivative_check():
    SmoothFunction.linear([1.0, -2.0], 3.0)
    SmoothFunction.quadratic([[1.0, 0.5], [0.5, 2.0]])
    SmoothFunction.exp()
    SmoothFunction.product()


def split_path(rng, grid, dom, P):
    N = grid.n_steps
    is_jump = np.concatenate([np.zeros((P, 1), bool), rng.random((P, N)) < 0.3], axis=1)
    size = np.concatenate([np.zeros((P, 1)), rng.normal(size=(P, N))], axis=1)
    cont = np.where(is_jump, 0.0, size * 0.3)
    disc = np.where(is_jump, size, 0.0)
    x0 = rng.normal(size=P)
    path = SamplePath(grid, x0[:, None] + np.cumsum(cont + disc, axis=1))
    return from_path(path, dom, Decomposition(x0, cont, disc, 0.0, is_jump), inner=True)


def test_ito_is_exact_for_quadratic_on_split_paths():
    rng = np.random.default_rng(0)
    g = make_grid(1.0, 16)
    dom = make_interval_set(g, rng.integers(1, 17, size=50), rng.random(50) < 0.5)
    X = split_path(rng, g, dom, 50)
    Y = split_path(rng, g, dom, 50)
    assert ito_residual(SmoothFunction.quadratic([[1.0]]), X).relative_sup <= 1e-12
    assert ito_residual(SmoothFunction.product(), [X, Y]).relative_sup <= 1e-12
    assert ito_residual(SmoothFunction.linear([2.0, -1.0]), [X, Y]).relative_sup <= 1e-12


def test_ito_terms_are_reported():
    g = make_grid(1.0, 64)
    B = brownian_bprocess(sample_brownian(g, ScenarioBatch(5, 0)), IntervalTypeSet.full(g, 5))
    rep = ito_residual(SmoothFunction.exp(), B)
    assert set(rep.terms) >= {"F(Z)", "first_order", "jump_correction", "second_order", "residual"}
    # the continuous path has no labelled jumps
    assert not rep.terms["jump_correction"].any()
    assert rep.sup < 0.05


def test_ito_needs_inner_and_matching_arity():
    g = make_grid(1.0, 4)
    X = from_path(SamplePath(g, np.zeros((1, 5))), IntervalTypeSet.full(g, 1), Decomposition(0.0, np.zeros((1, 5)), 0.0, 0.0))
    with pytest.raises(NotInnerError):
        ito_residual(SmoothFunction.exp(), X)
    with pytest.raises(ValueError):
        ito_residual(SmoothFunction.product(), [X])


def test_ibp_on_arbitrary_paths():
    rng = np.random.default_rng(5)
    g = make_grid(1.0, 16)
    dom = make_interval_set(g, rng.integers(1, 17, size=30), np.ones(30, bool))
    X = from_path(SamplePath(g, np.cumsum(rng.normal(size=(30, 17)), axis=1)), dom)
    Y = from_path(SamplePath(g, np.cumsum(rng.normal(size=(30, 17)), axis=1)), dom)
    assert ibp_residual(X, Y).relative_sup <= 1e-12


@pytest.mark.parametrize("seed", [1, 2])
def test_identity_suite_other_seeds(seed):
    rep = identity_suite(seed=seed, n_paths=60, n_sets=4)
    assert rep.passed, rep.failures()


def test_identity_suite_with_every_scenario_exiting_early():
    rep = identity_suite(seed=0, n_paths=50, n_sets=3, force_kappa=1)
    assert rep.passed, rep.failures()


def test_identity_suite_is_deterministic():
    a = identity_suite(seed=4, n_paths=30, n_sets=2).worst()
    b = identity_suite(seed=4, n_paths=30, n_sets=2).worst()
    assert a == b
    assert len(a) >= 25
