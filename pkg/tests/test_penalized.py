"""Lasso-penalized sigma updates, paths, and AIC/BIC selection."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vcmm import (
    FitConfig,
    GeneticDesign,
    ModelParams,
    compute_path,
    default_lambda_grid,
    fit,
    fit_penalized,
    lambda_max,
    replicate_seed,
    simulate_genetic,
    soft_threshold,
    solve_u,
    update_sigma_f2,
)
from vcmm.model import Formulation
from vcmm.oracle import irls_logistic
from vcmm.penalized import update_sigma_lasso
from vcmm.solver import _traces

from conftest import random_instance

CFG = FitConfig(outer_tol=1e-6)


# ---------------------------------------------------------------------------
# soft threshold


@pytest.mark.parametrize("z,gamma,want", [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0),
                                          (0.5, 1.0, 0.0)])
def test_soft_threshold_examples(z, gamma, want):
    assert soft_threshold(z, gamma) == want


def test_soft_threshold_rejects_negative_gamma():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.5)


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_soft_threshold_shrinks(z, gamma):
    out = soft_threshold(z, gamma)
    assert abs(out) <= abs(z) + 1e-12
    if gamma == 0:
        assert out == z


@given(st.floats(-100, 100), st.floats(0, 100), st.floats(-100, 100))
def test_soft_threshold_is_proximal_map(z, gamma, x):
    s = soft_threshold(z, gamma)
    obj = lambda t: 0.5 * (t - z) ** 2 + gamma * abs(t)  # noqa: E731
    assert obj(s) <= obj(x) + 1e-12


# ---------------------------------------------------------------------------
# lasso sigma step


def _state_for(params, data):
    state, _ = solve_u(Formulation.F2, params, data,
                       cfg=FitConfig(inner_tol=1e-9, max_inner_iters=2000))
    return state


def test_lasso_step_at_zero_lambda_equals_f2_step():
    rng = np.random.default_rng(0)
    data, sigma2 = random_instance(rng, n=25, block_sizes=(2, 3))
    params = ModelParams(beta=0.4 * rng.standard_normal(2), sigma2=sigma2)
    state = _state_for(params, data)
    assert np.allclose(
        update_sigma_lasso(params, state, data, 0.0),
        update_sigma_f2(params, state, data),
    )


def test_lasso_step_large_lambda_zeroes_everything():
    rng = np.random.default_rng(1)
    data, sigma2 = random_instance(rng, n=25, block_sizes=(2, 2))
    params = ModelParams(beta=0.4 * rng.standard_normal(2), sigma2=sigma2)
    state = _state_for(params, data)
    assert np.all(update_sigma_lasso(params, state, data, 1e9) == 0.0)


def test_lasso_step_minimizes_per_coordinate_quadratic():
    # grid-search oracle over sigma_i >= 0 for the penalized quadratic
    # (1/2)(t_i + S/4) s^2 - numerator_i s + lambda s
    rng = np.random.default_rng(2)
    data, sigma2 = random_instance(rng, n=30, block_sizes=(2, 2))
    params = ModelParams(beta=0.4 * rng.standard_normal(2), sigma2=sigma2)
    state = _state_for(params, data)
    traces = _traces(state.w, params.sigma, data)
    from vcmm.solver import _f2_sigma_ingredients

    num, den = _f2_sigma_ingredients(params, state, data, traces)
    lam = 0.5 * np.max(np.abs(num))
    got = update_sigma_lasso(params, state, data, lam, traces=traces)
    grid = np.linspace(0.0, 5.0, 200001)
    for i in range(data.m):
        vals = 0.5 * den[i] * grid**2 - num[i] * grid + lam * grid
        best = grid[np.argmin(vals)]
        assert abs(got[i] - best) <= 5e-5


def test_lasso_step_rejects_negative_lambda():
    rng = np.random.default_rng(3)
    data, sigma2 = random_instance(rng, n=10, block_sizes=(2,))
    params = ModelParams(beta=np.zeros(2), sigma2=sigma2)
    state = _state_for(params, data)
    with pytest.raises(ValueError):
        update_sigma_lasso(params, state, data, -1.0)


# ---------------------------------------------------------------------------
# penalized fits


def test_fit_penalized_zero_lambda_matches_unpenalized():
    rng = np.random.default_rng(4)
    data, _ = random_instance(rng, n=80, block_sizes=(3, 2))
    pen = fit_penalized(data, 0.0, CFG)
    base = fit(Formulation.F2, data, CFG)
    rel = abs(pen.loglik_la - base.loglik_la) / (1 + abs(base.loglik_la))
    assert rel <= 1e-6


def test_fit_penalized_huge_lambda_gives_logistic_mle():
    rng = np.random.default_rng(5)
    data, _ = random_instance(rng, n=120, block_sizes=(2, 2))
    result = fit_penalized(data, 1e6, FitConfig(outer_tol=1e-10))
    assert np.all(result.params.sigma2 == 0.0)
    want = irls_logistic(data.y, data.X)
    assert np.max(np.abs(result.params.beta - want)) <= 1e-4


def test_fit_penalized_moderate_lambda_selects_true_support():
    hits = 0
    for i in range(20):
        design = GeneticDesign(n=200, m=3, sigma2=(5.0, 0.0, 0.0),
                               seed=replicate_seed(99, i))
        data, _ = simulate_genetic(design)
        lam = 0.03 * lambda_max(data, CFG)
        s2 = fit_penalized(data, lam, CFG).params.sigma2
        hits += bool(s2[0] > 0 and s2[1] == 0 and s2[2] == 0)
    assert hits >= 16  # >= 80% of 20 replicates


def test_fit_penalized_trace_is_penalized_objective():
    rng = np.random.default_rng(6)
    data, _ = random_instance(rng, n=60, block_sizes=(2, 2))
    result = fit_penalized(data, 0.5, CFG)
    # final trace entry equals L_LA - lambda * sum sigma at the iterate
    want = result.loglik_la - 0.5 * float(np.sum(np.sqrt(result.params.sigma2)))
    assert result.objective_trace[-1] == pytest.approx(want, rel=1e-9)


# ---------------------------------------------------------------------------
# paths


def test_lambda_max_zeroes_all_components_first_step():
    rng = np.random.default_rng(7)
    data, _ = random_instance(rng, n=60, block_sizes=(2, 3))
    lmax = lambda_max(data, CFG)
    at = fit_penalized(data, lmax * (1 + 1e-12), CFG)
    assert np.all(at.params.sigma2 == 0.0)
    # the threshold is not vacuously large: a clearly smaller lambda selects
    below = fit_penalized(data, 0.01 * lmax, CFG)
    assert np.any(below.params.sigma2 > 0.0)


def test_default_grid_shape():
    rng = np.random.default_rng(8)
    data, _ = random_instance(rng, n=40, block_sizes=(2,))
    grid = default_lambda_grid(data, CFG, n_lambdas=10, min_ratio=1e-2)
    assert grid.size == 10
    assert grid[0] == pytest.approx(lambda_max(data, CFG))
    assert grid[-1] == pytest.approx(1e-2 * grid[0], rel=1e-12)
    assert np.all(np.diff(grid) < 0)


def test_compute_path_single_lambda():
    rng = np.random.default_rng(9)
    data, _ = random_instance(rng, n=50, block_sizes=(2, 2))
    path = compute_path(data, [0.7], CFG)
    direct = fit_penalized(data, 0.7, CFG)
    assert len(path.fits) == 1
    assert path.fits[0].loglik_la == direct.loglik_la
    assert path.selected_aic == path.selected_bic == 0


def test_compute_path_empty_model_criteria():
    rng = np.random.default_rng(10)
    data, _ = random_instance(rng, n=50, block_sizes=(2,))
    path = compute_path(data, [1e6], CFG)
    assert path.df[0] == 0
    assert path.aic[0] == pytest.approx(-2 * path.loglik_la[0])
    assert path.bic[0] == pytest.approx(-2 * path.loglik_la[0])


def test_compute_path_criteria_recompute_exactly():
    rng = np.random.default_rng(11)
    data, _ = random_instance(rng, n=60, block_sizes=(2, 2))
    path = compute_path(data, default_lambda_grid(data, CFG, n_lambdas=8), CFG)
    assert np.array_equal(path.aic, -2 * path.loglik_la + 2 * path.df)
    assert np.array_equal(path.bic,
                          -2 * path.loglik_la + np.log(data.n) * path.df)
    assert np.array_equal(
        path.df, [int(np.sum(r.params.sigma2 > 0)) for r in path.fits]
    )


def test_compute_path_zero_endpoint_matches_unpenalized():
    rng = np.random.default_rng(12)
    data, _ = random_instance(rng, n=70, block_sizes=(2, 2))
    grid = np.append(default_lambda_grid(data, CFG, n_lambdas=6), 0.0)
    path = compute_path(data, grid, CFG)
    base = fit(Formulation.F2, data, CFG)
    rel = abs(path.loglik_la[-1] - base.loglik_la) / (1 + abs(base.loglik_la))
    assert rel <= 1e-6


def test_compute_path_df_mostly_monotone():
    # soft property: MM paths are not provably nested; log, do not fail hard
    rng = np.random.default_rng(13)
    monotone = 0
    total = 8
    for _ in range(total):
        data, _ = random_instance(rng, n=80, block_sizes=(2, 2, 2))
        grid = default_lambda_grid(data, CFG, n_lambdas=12)
        path = compute_path(data, grid, CFG)
        monotone += bool(np.all(np.diff(path.df) >= 0))
    assert monotone >= int(0.9 * total)


def test_compute_path_rejects_bad_grids():
    rng = np.random.default_rng(14)
    data, _ = random_instance(rng, n=30, block_sizes=(2,))
    with pytest.raises(ValueError):
        compute_path(data, [], CFG)
    with pytest.raises(ValueError):
        compute_path(data, [0.1, 0.5], CFG)
    with pytest.raises(ValueError):
        compute_path(data, [0.5, -0.1], CFG)
