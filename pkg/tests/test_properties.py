"""Randomised property checks over the likelihood pipeline."""

import numpy as np
from hypothesis import given, settings, strategies as st

from oracles import dense_logdet_solve, numerical_jacobian
from reducible_sde.gaussml import logdet_and_solve
from reducible_sde.multivar import matrix_exponential
from reducible_sde.sde import SdeParams, conditional_residuals, covariance_entries, uvector

seeds = st.integers(0, 2**31 - 1)
fast = settings(max_examples=40, deadline=None)


def _series(rng, n):
    t = np.cumsum(rng.uniform(0.2, 2.0, n))
    return t, rng.normal(size=n)


@fast
@given(seeds, st.integers(1, 5), st.floats(-1.0, 1.0))
def test_unit_jacobian(seed, n, beta1):
    rng = np.random.default_rng(seed)
    t, y = _series(rng, n)
    p = SdeParams(rng.normal(), beta1)
    J = numerical_jacobian(lambda v: conditional_residuals(v, t, p, 0.1).z, y)
    assert abs(abs(np.linalg.det(J)) - 1.0) < 1e-8


@fast
@given(seeds, st.integers(1, 8), st.floats(0.0, 1.0), st.floats(0.0, 2.0), st.floats(-1.0, 1.0))
def test_model_covariance_matches_dense(seed, n, eta, eta0, beta1):
    rng = np.random.default_rng(seed)
    t, z = _series(rng, n)
    cov = covariance_entries(np.diff(np.concatenate(([0.0], t))), SdeParams(0.0, beta1, eta, eta0))
    ld, v = logdet_and_solve(cov.cdiag, cov.csub, z)
    ld_ref, v_ref = dense_logdet_solve(cov.dense(), z)
    assert abs(ld - ld_ref) < 1e-10 * max(1.0, abs(ld_ref))
    assert np.max(np.abs(v - v_ref)) < 1e-10 * max(1.0, np.max(np.abs(v_ref)))


@fast
@given(seeds, st.floats(0.0, 1.0), st.floats(1e-9, 1e-7))
def test_beta1_continuity(seed, eta, eps):
    rng = np.random.default_rng(seed)
    t, _ = _series(rng, 5)
    x = rng.normal(size=5)
    base = uvector(x, t, SdeParams(0.5, 0.0, eta=eta, eta0=0.3), "identity").u
    for b1 in (eps, -eps):
        u = uvector(x, t, SdeParams(0.5, b1, eta=eta, eta0=0.3), "identity").u
        assert np.max(np.abs(u - base)) < 1e-5


@fast
@given(seeds, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_observation_order_does_not_matter(seed, eta, eta0):
    rng = np.random.default_rng(seed)
    t, x = _series(rng, 6)
    perm = rng.permutation(6)
    p = SdeParams(0.4, -0.2, eta=eta, eta0=eta0)
    a = uvector(x, t, p, "identity", final=True)
    b = uvector(x[perm], t[perm], p, "identity", final=True)
    assert a == b


@fast
@given(seeds, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_sigma_split(seed, eta, eta0):
    rng = np.random.default_rng(seed)
    t, x = _series(rng, 4)
    fs = uvector(x, t, SdeParams(0.4, -0.2, eta=eta, eta0=eta0), "identity", final=True)
    assert abs(fs.sigma_p**2 + fs.sigma_m**2 - fs.sigma2) <= 1e-14 * fs.sigma2


@fast
@given(seeds, st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_expm_semigroup(seed, s, t):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3))
    A = M - (np.max(np.linalg.eigvals(M).real) + 0.2) * np.eye(3)
    lhs = matrix_exponential(A * (s + t))
    rhs = matrix_exponential(A * s) @ matrix_exponential(A * t)
    assert np.max(np.abs(lhs - rhs)) < 1e-10
