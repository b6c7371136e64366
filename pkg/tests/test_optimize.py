import math

import numpy as np
import pytest

from conftest import example2_specs
from oracles import EX2_STARTS
from reducible_sde.fitting import fit_sde
from reducible_sde.hierarchy import SdeModel
from reducible_sde.optimize import (BoundTransform, FitProblem, InfeasibleStartError,
                                    fit_direct_nll, fit_least_squares, information_criteria)


def test_linear_least_squares():
    res = fit_least_squares(FitProblem(lambda th: np.array([th[0] - 1, th[1] + 2]), [0.0, 0.0]))
    np.testing.assert_allclose(res.theta, [1.0, -2.0], atol=1e-10)
    assert res.rss < 1e-20
    assert res.converged


def test_rosenbrock_with_bounds():
    def r(th):
        return np.array([10 * (th[1] - th[0] ** 2), 1 - th[0]])

    res = fit_least_squares(FitProblem(r, [-1.2, 1.0], lower=[-2, -2], upper=[2, 2]))
    np.testing.assert_allclose(res.theta, [1.0, 1.0], atol=1e-8)


def test_solution_on_bound_is_flagged():
    res = fit_least_squares(FitProblem(lambda th: np.array([th[0] - 3.0, th[1]]), [0.5, 0.2],
                                       lower=[0.0, -1.0], upper=[1.0, 1.0]))
    assert res.theta[0] == pytest.approx(1.0, abs=1e-6)
    assert res.bound_flags() == {"theta0": True, "theta1": False}


def test_one_sided_bound():
    res = fit_least_squares(FitProblem(lambda th: np.array([th[0] + 1.0]), [2.0], lower=[0.0]))
    assert res.theta[0] == pytest.approx(0.0, abs=1e-6)
    assert res.at_bound[0]


def test_bound_transform_round_trip():
    bt = BoundTransform(np.array([0.0, -np.inf, 1.0, -np.inf]), np.array([1.0, 5.0, np.inf, np.inf]))
    theta = np.array([0.3, 4.0, 7.0, -2.0])
    np.testing.assert_allclose(bt.to_external(bt.to_internal(theta)), theta, rtol=1e-12)


def test_infeasible_start():
    with pytest.raises(InfeasibleStartError):
        fit_least_squares(FitProblem(lambda th: np.array([math.log(th[0])]), [-1.0]))


def test_iteration_cap_reports_nonconvergence():
    def r(th):
        return np.array([10 * (th[1] - th[0] ** 2), 1 - th[0]])

    res = fit_least_squares(FitProblem(r, [-1.2, 1.0], max_iter=2))
    assert not res.converged
    assert res.iterations <= 2


def test_monotone_descent(tree301):
    model = SdeModel.build(tree301, example2_specs(), "richards_additive")
    res, _ = fit_sde(model)
    hist = np.array(res.history)
    assert hist.size > 2
    assert np.all(np.diff(hist) <= 0)


def test_quadratic_nll():
    res = fit_direct_nll(lambda th: 0.5 * ((th[0] - 2) ** 2 + 4 * (th[1] + 1) ** 2) + 3, [0.0, 0.0])
    np.testing.assert_allclose(res.theta, [2.0, -1.0], atol=1e-6)
    assert res.log_likelihood == pytest.approx(-3.0, abs=1e-10)


@pytest.mark.parametrize("loglik,df,n,aic,bic", [
    (-88.39581, 17, 84, 210.7916, 252.1155),
    (-85.15201, 17, 84, 204.3040, 245.6279),
    (0.0, 1, 1, 2.0, 0.0),
])
def test_information_criteria(loglik, df, n, aic, bic):
    a, b = information_criteria(loglik, df, n)
    assert a == pytest.approx(aic, abs=1e-4)
    assert b == pytest.approx(bic, abs=1e-4)


def test_example2_bound_and_start_robustness(tree301, ex2_additive):
    two_stage, _ = ex2_additive
    assert two_stage.bound_flags()["eta"]
    s = EX2_STARTS[1]
    model = SdeModel.build(tree301, example2_specs(**s), "richards_additive")
    direct, _ = fit_sde(model)
    for k in ("a", "b", "c", "eta"):
        assert direct.named[k] == pytest.approx(two_stage.named[k], abs=1e-3)


def test_two_stage_records_warmup(ex2_additive):
    res, _ = ex2_additive
    (stage,) = res.extra["stages"]
    assert stage["eta"] == 0.5


def test_df_counts_sigma(ex2_additive):
    res, _ = ex2_additive
    assert res.df == 5
    assert res.aic == pytest.approx(2 * 5 - 2 * res.log_likelihood)
    assert res.bic == pytest.approx(5 * math.log(6) - 2 * res.log_likelihood)
