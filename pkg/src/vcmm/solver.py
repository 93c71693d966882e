"""MM outer loops for the two parameterizations (MMLA1 / MMLA2).

Each outer iteration follows the PIRLS-style cycle: solve the inner
mode u*, refresh probabilities, take one fixed-effect MM step, refresh
probabilities and weights, take one variance-component MM step.  The
variance step restricted to fixed (u*, W) is a true MM step and its
before/after restricted objectives are recorded as diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import linalg
from .model import (
    FitConfig,
    Formulation,
    LaplaceState,
    ModelParams,
    ProblemData,
    bernoulli_loglik,
    capacitance_logdet,
    complete_loglik,
    laplace_loglik,
    logistic,
)

ASCENT_SLACK = 1e-8


class InnerConvergenceError(RuntimeError):
    """Inner u-solve hit its iteration cap; carries the best iterate."""

    def __init__(self, state: LaplaceState, iters: int, grad_norm: float):
        super().__init__(
            f"inner solve hit cap after {iters} iterations, grad norm {grad_norm:.3e}"
        )
        self.state = state
        self.iters = iters


@dataclass
class FitDiagnostics:
    """Per-fit exception log; empty lists/zeros mean a clean run."""

    sigma_step_before: list = field(default_factory=list)
    sigma_step_after: list = field(default_factory=list)
    inner_cap_hits: int = 0
    trace_violations: int = 0
    frozen_blocks: tuple = ()


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    state: LaplaceState
    objective_trace: np.ndarray
    converged: bool
    outer_iters: int
    inner_iters_total: int
    formulation: Formulation
    loglik_la: float
    lam: Optional[float] = None
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)


def u_preconditioner(
    form: Formulation, params: ModelParams, data: ProblemData
) -> np.ndarray:
    """The fixed curvature bound for the inner quadratic surrogate."""
    if form is Formulation.F1:
        s2 = np.repeat(params.sigma2, data.block_sizes)
        if np.any(s2 <= 0):
            raise ValueError("F1 inner solve requires sigma_i^2 > 0")
        B = 0.25 * (data.Z.T @ data.Z)
        B[np.diag_indices_from(B)] += 1.0 / s2
    else:
        d = params.expand_sigma(data.block_sizes)
        ZD = data.Z * d[None, :]
        B = 0.25 * (ZD.T @ ZD)
        B[np.diag_indices_from(B)] += 1.0
    return B


def _u_gradient(form, u, p, params, data):
    if form is Formulation.F1:
        s2 = np.repeat(params.sigma2, data.block_sizes)
        return data.Z.T @ (data.y - p) - u / s2
    d = params.expand_sigma(data.block_sizes)
    return d * (data.Z.T @ (data.y - p)) - u


def solve_u(
    form: Formulation,
    params: ModelParams,
    data: ProblemData,
    u0: Optional[np.ndarray] = None,
    cfg: FitConfig = FitConfig(),
) -> tuple[LaplaceState, int]:
    """Inner MM maximization of h(u | beta, sigma).

    The quadratic-bound preconditioner is factorized once and reused;
    iterates stop when the gradient max-norm drops below inner_tol.
    Returns (state, iterations).
    """
    u = np.zeros(data.q) if u0 is None else np.asarray(u0, dtype=float).copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite starting point for inner solve")
    B = u_preconditioner(form, params, data)
    chol = scipy.linalg.cho_factor(B, lower=True)
    eps = cfg.weight_clamp_eps
    d = params.expand_sigma(data.block_sizes)
    Xb = data.X @ params.beta
    for it in range(cfg.max_inner_iters + 1):
        eta = Xb + (data.Z @ u if form is Formulation.F1 else data.Z @ (d * u))
        p = logistic(eta, eps)
        grad = _u_gradient(form, u, p, params, data)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= cfg.inner_tol:
            return LaplaceState(u=u, eta=eta, p=p, w=p * (1.0 - p)), it
        if it == cfg.max_inner_iters:
            state = LaplaceState(u=u, eta=eta, p=p, w=p * (1.0 - p))
            raise InnerConvergenceError(state, it, gnorm)
        u = u + scipy.linalg.cho_solve(chol, grad)


def update_beta(
    params: ModelParams,
    state: LaplaceState,
    data: ProblemData,
    chol_xtx=None,
) -> np.ndarray:
    """One MM step for the fixed effects: beta + (0.25 X^T X)^{-1} X^T (y - p)."""
    if chol_xtx is None:
        chol_xtx = scipy.linalg.cho_factor(0.25 * (data.X.T @ data.X), lower=True)
    return params.beta + scipy.linalg.cho_solve(chol_xtx, data.X.T @ (data.y - state.p))


def _traces(w, sigma, data):
    factor = linalg.build_capacitance(w, sigma, data.Zblocks)
    return linalg.block_traces(factor, data.Zblocks)


def update_sigma2_f1(
    params: ModelParams,
    state: LaplaceState,
    data: ProblemData,
    traces: Optional[np.ndarray] = None,
    floor: float = 1e-10,
) -> np.ndarray:
    """Explicit F1 MM update: sigma_i^2 <- sqrt(||u_i||^2 / t_i)."""
    if traces is None:
        traces = _traces(state.w, params.sigma, data)
    if np.any(traces <= 0):
        raise ValueError("degenerate block: zero trace (Z_i = 0?)")
    norms2 = np.array([np.dot(ui, ui) for ui in data.split_u(state.u)])
    return np.maximum(np.sqrt(norms2 / traces), floor)


def _f2_sigma_ingredients(params, state, data, traces):
    """Shared numerator/denominator pieces of the F2 and lasso sigma steps."""
    Zu = [Z @ ui for Z, ui in zip(data.Zblocks, data.split_u(state.u))]
    S = float(sum(np.dot(v, v) for v in Zu))
    resid = data.y - state.p
    num = np.array([float(np.dot(resid, v)) for v in Zu]) + 0.25 * S * params.sigma
    den = traces + 0.25 * S
    if np.any(den <= 0):
        raise ValueError("degenerate block: zero trace (Z_i = 0?)")
    return num, den


def update_sigma_f2(
    params: ModelParams,
    state: LaplaceState,
    data: ProblemData,
    traces: Optional[np.ndarray] = None,
) -> np.ndarray:
    """F2 sigma step from the three-layer minorization, projected to >= 0."""
    if traces is None:
        traces = _traces(state.w, params.sigma, data)
    num, den = _f2_sigma_ingredients(params, state, data, traces)
    return np.maximum(0.0, num / den)


# --- restricted sigma objectives and surrogates (diagnostics and tests) ---


def f1_sigma_objective(sigma2, u, w, data: ProblemData) -> float:
    """sigma-dependent part of the F1 objective at fixed (u*, W)."""
    sigma2 = np.asarray(sigma2, dtype=float)
    pen = sum(
        np.dot(ui, ui) / s2 for ui, s2 in zip(data.split_u(u), sigma2)
    )
    return -0.5 * pen - 0.5 * capacitance_logdet(w, np.sqrt(sigma2), data)


def f1_sigma_surrogate(sigma2, sigma2_t, u, w, data: ProblemData) -> float:
    """Supporting-hyperplane minorant of f1_sigma_objective at sigma2_t."""
    sigma2 = np.asarray(sigma2, dtype=float)
    sigma2_t = np.asarray(sigma2_t, dtype=float)
    traces = _traces(w, np.sqrt(sigma2_t), data)
    pen = sum(np.dot(ui, ui) / s2 for ui, s2 in zip(data.split_u(u), sigma2))
    base = -0.5 * capacitance_logdet(w, np.sqrt(sigma2_t), data)
    return -0.5 * pen + base - 0.5 * float(np.dot(sigma2 - sigma2_t, traces))


def f2_sigma_objective(sigma, u, w, beta, data: ProblemData) -> float:
    """sigma-dependent part of the F2 objective at fixed (u*, W, beta)."""
    sigma = np.asarray(sigma, dtype=float)
    eta = data.X @ beta + data.Z @ (np.repeat(sigma, data.block_sizes) * u)
    return bernoulli_loglik(data.y, eta) - 0.5 * capacitance_logdet(w, sigma, data)


def f2_sigma_surrogate(sigma, sigma_t, u, w, beta, data: ProblemData) -> float:
    """Three-layer (quadratic + Cauchy + log-det) minorant at sigma_t."""
    sigma = np.asarray(sigma, dtype=float)
    sigma_t = np.asarray(sigma_t, dtype=float)
    eta_t = data.X @ beta + data.Z @ (np.repeat(sigma_t, data.block_sizes) * u)
    p_t = logistic(eta_t)
    Zu = [Z @ ui for Z, ui in zip(data.Zblocks, data.split_u(u))]
    S = float(sum(np.dot(v, v) for v in Zu))
    traces = _traces(w, sigma_t, data)
    lin = float(
        np.dot(sigma - sigma_t, [np.dot(data.y - p_t, v) for v in Zu])
    )
    quad = -0.125 * S * float(np.sum((sigma - sigma_t) ** 2))
    logdet = -0.5 * capacitance_logdet(w, sigma_t, data) - 0.5 * float(
        np.dot(sigma**2 - sigma_t**2, traces)
    )
    return bernoulli_loglik(data.y, eta_t) + lin + quad + logdet


def u_surrogate(
    form: Formulation,
    u: np.ndarray,
    u_t: np.ndarray,
    params: ModelParams,
    data: ProblemData,
) -> float:
    """Quadratic-bound minorant of the joint log-density h at u_t."""
    h_t = complete_loglik(form, u_t, params, data)
    eta_t = (
        data.X @ params.beta
        + (
            data.Z @ u_t
            if form is Formulation.F1
            else data.Z @ (params.expand_sigma(data.block_sizes) * u_t)
        )
    )
    p_t = logistic(eta_t)
    grad = _u_gradient(form, np.asarray(u_t, float), p_t, params, data)
    B = u_preconditioner(form, params, data)
    d = np.asarray(u, float) - np.asarray(u_t, float)
    return h_t + float(np.dot(grad, d)) - 0.5 * float(d @ B @ d)


# --- the outer loop ---


def _check_full_rank(X):
    _, R, _ = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[-1] <= max(X.shape) * np.finfo(float).eps * diag[0]:
        raise ValueError("rank-deficient fixed-effect design X")


def _fit_loop(
    form: Formulation,
    data: ProblemData,
    cfg: FitConfig,
    lam: Optional[float] = None,
) -> FitResult:
    if lam is not None and form is not Formulation.F2:
        raise ValueError("penalized fitting uses formulation 2")
    _check_full_rank(data.X)
    chol_xtx = scipy.linalg.cho_factor(0.25 * (data.X.T @ data.X), lower=True)

    beta = (
        np.zeros(data.p)
        if cfg.init_beta is None
        else np.asarray(cfg.init_beta, dtype=float).copy()
    )
    sigma2 = (
        np.ones(data.m)
        if cfg.init_sigma2 is None
        else np.asarray(cfg.init_sigma2, dtype=float).copy()
    )
    if form is Formulation.F1:
        sigma2 = np.maximum(sigma2, cfg.sigma_floor)

    diag = FitDiagnostics()
    floor_streak = np.zeros(data.m, dtype=int)
    u = np.zeros(data.q)
    trace: list[float] = []
    converged = False
    loglik = np.nan
    params = ModelParams(beta=beta, sigma2=sigma2)
    state = None
    inner_total = 0
    outer = 0

    for t in range(cfg.max_outer_iters):
        outer = t + 1
        params = ModelParams(beta=beta, sigma2=sigma2)
        try:
            state, it = solve_u(form, params, data, u0=u, cfg=cfg)
        except InnerConvergenceError as err:
            state, it = err.state, err.iters
            diag.inner_cap_hits += 1
        inner_total += it
        loglik = laplace_loglik(form, state, params, data)
        obj = loglik if lam is None else loglik - lam * float(np.sum(params.sigma))
        if trace:
            prev = trace[-1]
            if obj < prev - ASCENT_SLACK * (1.0 + abs(prev)):
                diag.trace_violations += 1
        trace.append(obj)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= cfg.outer_tol * (
            1.0 + abs(trace[-2])
        ):
            converged = True
            break

        # fixed-effect step at the current offset, then refresh p and W
        offset = state.eta - data.X @ beta
        beta_new = beta + scipy.linalg.cho_solve(
            chol_xtx, data.X.T @ (data.y - state.p)
        )
        eta2 = data.X @ beta_new + offset
        p2 = logistic(eta2, cfg.weight_clamp_eps)
        w2 = p2 * (1.0 - p2)
        refreshed = LaplaceState(u=state.u, eta=eta2, p=p2, w=w2)
        traces = _traces(w2, params.sigma, data)

        # variance-component step with its restricted-ascent diagnostic
        if form is Formulation.F1:
            before = f1_sigma_objective(sigma2, state.u, w2, data)
            sigma2_new = update_sigma2_f1(
                params, refreshed, data, traces=traces, floor=cfg.sigma_floor
            )
            at_floor = sigma2_new <= cfg.sigma_floor
            floor_streak = np.where(at_floor, floor_streak + 1, 0)
            after = f1_sigma_objective(sigma2_new, state.u, w2, data)
        else:
            before = f2_sigma_objective(params.sigma, state.u, w2, beta_new, data)
            if lam is None:
                sigma_new = update_sigma_f2(params, refreshed, data, traces=traces)
            else:
                from .penalized import update_sigma_lasso

                sigma_new = update_sigma_lasso(
                    params, refreshed, data, lam, traces=traces
                )
            after = f2_sigma_objective(sigma_new, state.u, w2, beta_new, data)
            if lam is not None:
                before -= lam * float(np.sum(params.sigma))
                after -= lam * float(np.sum(sigma_new))
            sigma2_new = sigma_new**2
        diag.sigma_step_before.append(before)
        diag.sigma_step_after.append(after)

        beta = beta_new
        sigma2 = sigma2_new
        u = state.u

    reported_sigma2 = params.sigma2.copy()
    if form is Formulation.F1:
        frozen = np.flatnonzero(floor_streak >= cfg.freeze_after)
        diag.frozen_blocks = tuple(int(i) for i in frozen)
        reported_sigma2[frozen] = 0.0

    return FitResult(
        params=ModelParams(beta=params.beta, sigma2=reported_sigma2),
        state=state,
        objective_trace=np.asarray(trace),
        converged=converged,
        outer_iters=outer,
        inner_iters_total=inner_total,
        formulation=form,
        loglik_la=float(loglik),
        lam=lam,
        diagnostics=diag,
    )


def fit(
    form: Formulation,
    data: ProblemData,
    cfg: FitConfig = FitConfig(),
) -> FitResult:
    """Maximize the Laplace-approximated log-likelihood (MMLA1 or MMLA2)."""
    return _fit_loop(form, data, cfg, lam=None)
