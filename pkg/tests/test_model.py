"""Core types, the logistic link, and both objective forms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcmm import ModelParams, ProblemData, complete_loglik, laplace_loglik, logistic
from vcmm.model import (
    LOG_2PI,
    Formulation,
    bernoulli_loglik,
    capacitance_logdet,
    make_state,
)
from vcmm.oracle import newton_u

from conftest import random_instance


# ---------------------------------------------------------------------------
# logistic


def test_logistic_at_zero():
    assert logistic(np.array([0.0]))[0] == 0.5


def test_logistic_saturates_without_overflow():
    p = logistic(np.array([800.0]))
    assert p[0] == 1.0 - 1e-10


def test_logistic_ln3():
    assert logistic(np.array([np.log(3.0)]))[0] == pytest.approx(0.75, abs=1e-15)


def test_logistic_rejects_nonfinite():
    with pytest.raises(ValueError):
        logistic(np.array([np.nan]))
    with pytest.raises(ValueError):
        logistic(np.array([np.inf]))


@given(st.floats(min_value=-100, max_value=100))
def test_logistic_symmetry_and_range(eta):
    p = logistic(np.array([eta]))[0]
    q = logistic(np.array([-eta]))[0]
    assert 0.0 < p < 1.0
    assert p + q == pytest.approx(1.0, abs=1e-12)


@given(
    st.floats(min_value=-50, max_value=50),
    st.floats(min_value=1e-6, max_value=50),
)
def test_logistic_monotone(eta, gap):
    lo, hi = logistic(np.array([eta]))[0], logistic(np.array([eta + gap]))[0]
    assert hi >= lo


# ---------------------------------------------------------------------------
# data-model validation


def test_problem_data_rejects_bad_y():
    with pytest.raises(ValueError):
        ProblemData(y=np.array([0.0, 2.0]), X=np.eye(2), Zblocks=(np.eye(2),))


def test_problem_data_rejects_row_mismatch():
    with pytest.raises(ValueError):
        ProblemData(y=np.zeros(3), X=np.eye(3), Zblocks=(np.ones((2, 1)),))


def test_model_params_rejects_negative_variance():
    with pytest.raises(ValueError):
        ModelParams(beta=np.zeros(1), sigma2=np.array([-0.1]))


def test_problem_data_dimensions():
    rng = np.random.default_rng(0)
    data, _ = random_instance(rng, n=12, block_sizes=(2, 4))
    assert (data.n, data.p, data.m, data.q) == (12, 2, 2, 6)
    assert data.block_sizes == (2, 4)
    assert data.Z.shape == (12, 6)
    u = np.arange(6.0)
    parts = data.split_u(u)
    assert [len(v) for v in parts] == [2, 4]
    assert np.array_equal(np.concatenate(parts), u)


# ---------------------------------------------------------------------------
# complete log-likelihood


def test_complete_loglik_f2_all_ones():
    # two observations, eta = 0: each Bernoulli term is -ln 2
    data = ProblemData(y=np.ones(2), X=np.zeros((2, 1)), Zblocks=(np.ones((2, 1)),))
    params = ModelParams(beta=np.zeros(1), sigma2=np.array([1.0]))
    val = complete_loglik(Formulation.F2, np.zeros(1), params, data)
    assert val == pytest.approx(-2 * np.log(2.0) - LOG_2PI, abs=1e-14)


def test_complete_loglik_f1_unit_variance():
    data = ProblemData(
        y=np.array([1.0, 0.0]), X=np.zeros((2, 1)), Zblocks=(np.ones((2, 3)),)
    )
    params = ModelParams(beta=np.zeros(1), sigma2=np.array([1.0]))
    val = complete_loglik(Formulation.F1, np.zeros(3), params, data)
    assert val == pytest.approx(-2 * np.log(2.0) - LOG_2PI, abs=1e-14)


def test_complete_loglik_f1_rejects_zero_variance():
    data = ProblemData(y=np.ones(2), X=np.zeros((2, 1)), Zblocks=(np.ones((2, 1)),))
    params = ModelParams(beta=np.zeros(1), sigma2=np.array([0.0]))
    with pytest.raises(ValueError):
        complete_loglik(Formulation.F1, np.zeros(1), params, data)


def _scalar_complete_loglik(form, u, beta, sigma2, data):
    """Independent term-by-term evaluation with scalar loops."""
    sizes = data.block_sizes
    sigma = [np.sqrt(s) for s in sigma2]
    total = 0.0
    for j in range(data.n):
        eta = sum(data.X[j, k] * beta[k] for k in range(data.p))
        pos = 0
        for i, qi in enumerate(sizes):
            for k in range(qi):
                coef = 1.0 if form is Formulation.F1 else sigma[i]
                eta += coef * data.Z[j, pos] * u[pos]
                pos += 1
        total += data.y[j] * eta - np.log1p(np.exp(eta))
    pos = 0
    for i, qi in enumerate(sizes):
        for k in range(qi):
            if form is Formulation.F1:
                total -= 0.5 * u[pos] ** 2 / sigma2[i]
            else:
                total -= 0.5 * u[pos] ** 2
            pos += 1
        if form is Formulation.F1:
            total -= 0.5 * qi * np.log(sigma2[i])
    return total - 0.5 * data.n * np.log(2 * np.pi)


@pytest.mark.parametrize("form", [Formulation.F1, Formulation.F2])
def test_complete_loglik_matches_scalar_evaluation(form):
    rng = np.random.default_rng(5)
    data, sigma2 = random_instance(rng, n=9, block_sizes=(2, 2))
    beta = rng.standard_normal(data.p)
    u = rng.standard_normal(data.q)
    params = ModelParams(beta=beta, sigma2=sigma2)
    got = complete_loglik(form, u, params, data)
    want = _scalar_complete_loglik(form, u, beta, sigma2, data)
    assert got == pytest.approx(want, rel=1e-12)


def test_complete_loglik_f2_concave_in_u():
    rng = np.random.default_rng(7)
    data, sigma2 = random_instance(rng, n=15, block_sizes=(2, 3))
    params = ModelParams(beta=rng.standard_normal(2), sigma2=sigma2)
    d = params.expand_sigma(data.block_sizes)
    ZD = data.Z * d[None, :]
    for _ in range(5):
        u = rng.standard_normal(data.q)
        eta = data.X @ params.beta + ZD @ u
        p = logistic(eta)
        H = -(ZD.T @ ((p * (1 - p))[:, None] * ZD) + np.eye(data.q))
        assert np.max(np.linalg.eigvalsh(H)) < 0


# ---------------------------------------------------------------------------
# Laplace objective


def test_laplace_all_zero_sigma_reduces_to_logistic():
    rng = np.random.default_rng(2)
    data, _ = random_instance(rng, n=10, block_sizes=(2,))
    params = ModelParams(beta=rng.standard_normal(2), sigma2=np.zeros(1))
    state = make_state(Formulation.F2, np.zeros(data.q), params, data)
    got = laplace_loglik(Formulation.F2, state, params, data)
    want = bernoulli_loglik(data.y, data.X @ params.beta) - 0.5 * data.n * LOG_2PI
    assert got == pytest.approx(want, abs=1e-12)


def test_laplace_matches_unstable_determinant_form():
    # tiny instance: compare against ln det(Z^T W Z + sigma^{-2} I) directly
    rng = np.random.default_rng(3)
    data, sigma2 = random_instance(rng, n=4, block_sizes=(1,))
    params = ModelParams(beta=rng.standard_normal(2), sigma2=sigma2)
    u = newton_u(Formulation.F1, params, data)
    state = make_state(Formulation.F1, u, params, data)
    got = laplace_loglik(Formulation.F1, state, params, data)

    ZtWZ = data.Z.T @ (state.w[:, None] * data.Z)
    inner = ZtWZ + np.diag(1.0 / np.repeat(sigma2, data.block_sizes))
    logdet = np.linalg.slogdet(inner)[1] + np.sum(
        np.repeat(np.log(sigma2), data.block_sizes)
    )
    want = (
        bernoulli_loglik(data.y, state.eta)
        - 0.5 * float(u @ (u / np.repeat(sigma2, data.block_sizes)))
        - 0.5 * logdet
        - 0.5 * data.n * LOG_2PI
    )
    assert got == pytest.approx(want, rel=1e-10)


def test_laplace_f1_equals_f2_at_matched_params():
    rng = np.random.default_rng(4)
    data, sigma2 = random_instance(rng, n=18, block_sizes=(2, 3))
    params = ModelParams(beta=rng.standard_normal(2), sigma2=sigma2)
    u2 = newton_u(Formulation.F2, params, data, tol=1e-12)
    u1 = params.expand_sigma(data.block_sizes) * u2
    v1 = laplace_loglik(Formulation.F1, make_state(Formulation.F1, u1, params, data),
                        params, data)
    v2 = laplace_loglik(Formulation.F2, make_state(Formulation.F2, u2, params, data),
                        params, data)
    assert v1 == pytest.approx(v2, rel=1e-10)


# ---------------------------------------------------------------------------
# determinant identities


def _identity_errors(rng, n, block_sizes):
    q = sum(block_sizes)
    w = rng.uniform(1e-3, 0.25, size=n)
    Zblocks = tuple(rng.standard_normal((n, qi)) for qi in block_sizes)
    sigma2 = rng.uniform(0.05, 3.0, size=len(block_sizes))
    sigma = np.sqrt(sigma2)
    data = ProblemData(y=np.zeros(n), X=np.zeros((n, 1)), Zblocks=Zblocks)

    Z = data.Z
    s2_expand = np.repeat(sigma2, block_sizes)
    lhs = np.linalg.slogdet(Z.T @ (w[:, None] * Z) + np.diag(1.0 / s2_expand))[1]
    A = np.diag(1.0 / w) + sum(
        s2 * Zi @ Zi.T for s2, Zi in zip(sigma2, Zblocks)
    )
    mid = (
        np.linalg.slogdet(A)[1]
        - float(np.dot(block_sizes, np.log(sigma2)))
        + float(np.sum(np.log(w)))
    )
    stable = capacitance_logdet(w, sigma, data) - float(
        np.dot(block_sizes, np.log(sigma2))
    )
    err1 = abs(lhs - mid) / (1.0 + abs(lhs))
    err2 = abs(mid - stable) / (1.0 + abs(mid))
    return err1, err2


def test_determinant_lemma_identities():
    rng = np.random.default_rng(12)
    for _ in range(30):
        m = int(rng.integers(1, 4))
        block_sizes = tuple(int(v) for v in rng.integers(1, 4, size=m))
        n = int(rng.integers(sum(block_sizes), 31))
        e1, e2 = _identity_errors(rng, n, block_sizes)
        assert e1 <= 1e-8
        assert e2 <= 1e-8


def test_capacitance_logdet_nxn_fallback_agrees():
    # q > n exercises the n x n twin; compare with dense q x q value
    rng = np.random.default_rng(13)
    n, block_sizes = 5, (4, 4)
    Zblocks = tuple(rng.standard_normal((n, qi)) for qi in block_sizes)
    data = ProblemData(y=np.zeros(n), X=np.zeros((n, 1)), Zblocks=Zblocks)
    w = rng.uniform(0.01, 0.25, size=n)
    sigma = rng.uniform(0.1, 2.0, size=2)
    Zs = np.hstack([s * Z for s, Z in zip(sigma, Zblocks)])
    dense = np.linalg.slogdet(np.eye(8) + Zs.T @ (w[:, None] * Zs))[1]
    assert capacitance_logdet(w, sigma, data) == pytest.approx(dense, rel=1e-10)
