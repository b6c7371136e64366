import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oracles import EX1_THETA
from reducible_sde import BoxCoxRegression, ReducibleSDE
from reducible_sde.simulate import TrajectorySpec, simulate_trajectory


@pytest.fixture(scope="module")
def simulated():
    spec = TrajectorySpec(1.0, -0.3, np.arange(1.0, 21.0), sigma_p=0.1, seed=4)
    return simulate_trajectory(spec, 5).arrays()


def test_boxcox_regression_estimator(gag):
    t, x = gag
    model = BoxCoxRegression().fit(t.reshape(-1, 1), x)
    got = (model.intercept_, model.coef_, model.lambda_x_, model.lambda_y_)
    np.testing.assert_allclose(got, EX1_THETA, atol=1e-3)
    pred = model.predict(t.reshape(-1, 1))
    assert pred.shape == x.shape and np.all(pred > 0)
    assert 0.0 < model.score(t.reshape(-1, 1), x) < 1.0


def test_boxcox_regression_params_and_clone():
    est = BoxCoxRegression(tol=1e-8, max_iter=50)
    assert est.get_params() == {"start": (2.9, -0.11, 1.0, 0.0), "tol": 1e-8, "max_iter": 50}
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    with pytest.raises(NotFittedError):
        est.predict([[1.0]])


def test_reducible_sde_fit_predict(simulated):
    t, x, g = simulated
    est = ReducibleSDE().fit(t, x, groups=g)
    assert est.converged_
    assert est.params_["beta1"] == pytest.approx(-0.3, abs=0.05)
    assert est.sigma_m_ == 0.0
    pred = est.predict(t, groups=g)
    assert pred.shape == x.shape
    assert est.score(t, x, groups=g) > 0.9
    assert est.loglik(est.result_.theta) == pytest.approx(est.log_likelihood_)
    assert est.loglik({"beta0": est.params_["beta0"], "beta1": est.params_["beta1"]}) == \
        pytest.approx(est.log_likelihood_)


def test_reducible_sde_params_and_clone():
    est = ReducibleSDE(drift="richards_additive", parameters={"a": 70, "b": 0.1, "c": 0.5},
                       strategy="two-stage")
    params = est.get_params()
    assert params["drift"] == "richards_additive" and params["strategy"] == "two-stage"
    c = clone(est)
    assert c.get_params()["parameters"] == est.parameters
    with pytest.raises(NotFittedError):
        est.predict([1.0])


def test_reducible_sde_needs_groups_for_several_units(simulated):
    t, x, g = simulated
    est = ReducibleSDE().fit(t, x, groups=g)
    with pytest.raises(ValueError, match="groups"):
        est.predict(t)
    with pytest.raises(ValueError, match="not seen"):
        est.predict([1.0], groups=["nope"])


def test_reducible_sde_rejects_bad_input():
    with pytest.raises(ValueError):
        ReducibleSDE().fit([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        ReducibleSDE().fit([1.0, np.nan], [1.0, 2.0])
