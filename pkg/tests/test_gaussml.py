import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import example2_specs
from oracles import (EX1_N, EX1_SIGMA, EX1_THETA, EX2_MAP_BETA22, EX2_MAP_SIGMA,
                     dense_logdet_solve)
from reducible_sde.fitting import fit_sde
from reducible_sde.gaussml import (
    NotPositiveDefiniteError, PriorSupportError, TridiagonalCovariance, UVector,
    beta_prior, diagonal_jacobian_geomean, log_likelihood_at_optimum, logdet_and_solve,
    map_weighted_residuals, sigma2_hat, u_from_residuals, uniform_prior,
)
from reducible_sde.hierarchy import SdeModel
from reducible_sde.regression import boxcox_residuals


def random_tridiagonal(rng, n):
    """Random SPD tridiagonal matrix: B B' with B lower bidiagonal."""
    B = np.diag(rng.uniform(0.5, 2.0, n)) + np.diag(rng.normal(size=n - 1), -1)
    C = B @ B.T
    csub = np.concatenate(([0.0], np.diag(C, -1)))
    return TridiagonalCovariance(np.diag(C).copy(), csub)


def test_identity_covariance():
    z = np.array([0.3, -1.2, 2.0])
    logdet, v = logdet_and_solve(np.ones(3), np.zeros(3), z)
    assert logdet == 0.0
    np.testing.assert_array_equal(v, z)


def test_diagonal_covariance():
    logdet, v = logdet_and_solve([4.0, 9.0], [0.0, 0.0], [2.0, 3.0])
    assert logdet == pytest.approx(math.log(6.0))
    np.testing.assert_allclose(v, [1.0, 1.0])


def test_fixed_tridiagonal_matches_dense():
    cov = TridiagonalCovariance([2.0, 2.0, 2.0], [0.0, -1.0, -1.0])
    z = np.array([0.7, -0.2, 1.9])
    logdet, v = logdet_and_solve(cov.cdiag, cov.csub, z)
    ref_logdet, ref_v = dense_logdet_solve(cov.dense(), z)
    assert abs(logdet - ref_logdet) < 1e-12
    np.testing.assert_allclose(v, ref_v, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_random_tridiagonal_matches_dense(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    cov = random_tridiagonal(rng, n)
    z = rng.normal(size=n)
    logdet, v = logdet_and_solve(cov.cdiag, cov.csub, z)
    ref_logdet, ref_v = dense_logdet_solve(cov.dense(), z)
    assert abs(logdet - ref_logdet) < 1e-10
    assert np.max(np.abs(v - ref_v)) < 1e-10


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        logdet_and_solve([1.0, 1.0], [0.0, 2.0], [1.0, 1.0])
    with pytest.raises(NotPositiveDefiniteError):
        logdet_and_solve([1.0, -1.0], [0.0, 0.0], [1.0, 1.0])


def test_u_identity_covariance():
    eps = np.array([1.0, -2.0, 0.5])
    u = u_from_residuals(eps, 0.0, TridiagonalCovariance(np.ones(3), np.zeros(3)))
    np.testing.assert_array_equal(u.u, eps)


def test_u_scaling_with_doubled_covariance():
    rng = np.random.default_rng(7)
    n = 6
    cov = random_tridiagonal(rng, n)
    eps = rng.normal(size=n)
    u1 = u_from_residuals(eps, 0.4, cov)
    u2 = u_from_residuals(eps, 0.4, TridiagonalCovariance(2 * cov.cdiag, 2 * cov.csub))
    # dense oracle: L2 = sqrt(2) L1, so v2 = v1 / sqrt(2) and log|L2| = log|L1| + n/2 log 2
    ld, v = dense_logdet_solve(2 * cov.dense(), eps)
    log_j = 0.4 - ld
    np.testing.assert_allclose(u2.u, v / math.exp(log_j / n), rtol=1e-12)
    assert u2.log_jacobian == pytest.approx(u1.log_jacobian - n / 2 * math.log(2))
    np.testing.assert_allclose(u2.u, u1.u, rtol=1e-12)  # the two effects cancel in u


def test_example1_sum_of_squares(gag):
    t, x = gag
    u = boxcox_residuals(EX1_THETA, t, x)
    assert u.size == EX1_N
    assert float(u @ u) == pytest.approx(3214, abs=1.0)


def test_geomean_trivial_cases():
    assert diagonal_jacobian_geomean([2.0, 5.0, 9.0], 1.0) == 1.0
    assert diagonal_jacobian_geomean([1.0, 1.0, 1.0], 7.0) == 1.0
    with pytest.raises(ValueError):
        diagonal_jacobian_geomean([1.0, 0.0], 0.5)


def test_geomean_gag_sigma(gag):
    t, x = gag
    jr = diagonal_jacobian_geomean(x, EX1_THETA[3])
    gm = math.exp(np.mean(np.log(x)))
    assert jr == pytest.approx(gm ** (EX1_THETA[3] - 1))
    u = boxcox_residuals(EX1_THETA, t, x)
    sigma = jr * math.sqrt(u @ u / x.size)
    assert sigma == pytest.approx(EX1_SIGMA, abs=5e-4)


def test_sigma2_hat():
    s2, s = sigma2_hat(UVector(np.ones(4), 0.0))
    assert (s2, s) == (1.0, 1.0)
    s2p, _ = sigma2_hat(UVector(np.ones(4), 0.0), n_params=2)
    assert s2p == 2.0


def test_log_likelihood_formula():
    u = UVector(np.array([0.5, -1.0, 2.0]), 0.0)
    want = -1.5 * (math.log(u.rss / 3) + math.log(2 * math.pi) + 1)
    assert log_likelihood_at_optimum(u) == pytest.approx(want)
    assert log_likelihood_at_optimum(UVector(np.zeros(3), 0.0)) == math.inf


def test_map_weighting():
    eps = np.array([1.0, 2.0])
    prior = uniform_prior(math.log(4.0))
    np.testing.assert_allclose(map_weighted_residuals(eps, prior, {}), eps / 2.0)
    with pytest.raises(PriorSupportError):
        map_weighted_residuals(eps, beta_prior("eta", 2, 2), {"eta": 1.0})


def test_uniform_prior_leaves_fit_unchanged(tree301):
    model = SdeModel.build(tree301, example2_specs(eta=0.5), "richards_additive")
    ml, _ = fit_sde(model)
    flat, _ = fit_sde(model, prior=uniform_prior(1.7))
    np.testing.assert_allclose(flat.theta, ml.theta, rtol=1e-6)
    u_ml = model.residuals(ml.theta)
    u_map = map_weighted_residuals(u_ml, uniform_prior(1.7), {})
    ratio = u_map / u_ml
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-14)


def test_beta_prior_map_matches_penalized_likelihood(tree301):
    model = SdeModel.build(tree301, example2_specs(eta=0.5), "richards_additive")
    res, _ = fit_sde(model, prior=beta_prior("eta", 2, 2))
    assert 0 < res.named["eta"] < 1
    for k, v in EX2_MAP_BETA22.items():
        assert res.named[k] == pytest.approx(v, rel=1e-3)
    assert res.sigma == pytest.approx(EX2_MAP_SIGMA, rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_independent_error_rss_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    eps = rng.normal(size=8)
    cov = TridiagonalCovariance(rng.uniform(0.5, 2, 8), np.zeros(8))
    perm = rng.permutation(8)
    a = u_from_residuals(eps, 0.3, cov)
    b = u_from_residuals(eps[perm], 0.3, TridiagonalCovariance(cov.cdiag[perm], np.zeros(8)))
    assert b.rss == pytest.approx(a.rss, rel=1e-13)
