"""Independent reference implementations used only by tests.

Everything here recomputes objectives densely from the raw data so it
can cross-check the production solver without sharing its code paths:
Newton inner maximizer, IRLS logistic MLE, adaptive Gauss-Hermite and
importance-sampling marginal likelihoods, and finite differences.

All log-likelihood values follow the same constant convention as the
production objective: the reported value is the true marginal
log-likelihood minus (n/2) ln 2pi.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .model import Formulation, ModelParams, ProblemData

_LOG_2PI = float(np.log(2.0 * np.pi))


class OracleError(RuntimeError):
    pass


def _h_grad_hess(form, u, params, data):
    """Value, gradient, Hessian of the joint log-density h in u (dense)."""
    beta, sigma2 = params.beta, params.sigma2
    d = params.expand_sigma(data.block_sizes)
    if form is Formulation.F1:
        eta = data.X @ beta + data.Z @ u
    else:
        eta = data.X @ beta + data.Z @ (d * u)
    p = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
    w = p * (1.0 - p)
    ll = float(np.dot(data.y, eta) - np.sum(np.logaddexp(0.0, eta)))
    if form is Formulation.F1:
        s2 = np.repeat(sigma2, data.block_sizes)
        val = ll - 0.5 * float(np.sum(u * u / s2))
        grad = data.Z.T @ (data.y - p) - u / s2
        hess = -(data.Z.T @ (w[:, None] * data.Z) + np.diag(1.0 / s2))
    else:
        val = ll - 0.5 * float(np.dot(u, u))
        ZD = data.Z * d[None, :]
        grad = ZD.T @ (data.y - p) - u
        hess = -(ZD.T @ (w[:, None] * ZD) + np.eye(data.q))
    return val, grad, hess


def newton_u(
    form: Formulation,
    params: ModelParams,
    data: ProblemData,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Full Newton with backtracking on the strictly concave h."""
    if form is Formulation.F1 and np.any(params.sigma2 <= 0):
        raise ValueError("F1 requires sigma_i^2 > 0")
    u = np.zeros(data.q)
    val, grad, hess = _h_grad_hess(form, u, params, data)
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= tol:
            return u
        step = np.linalg.solve(-hess, grad)
        t = 1.0
        while True:
            u_new = u + t * step
            val_new, grad_new, hess_new = _h_grad_hess(form, u_new, params, data)
            if val_new >= val - 1e-12:
                break
            t *= 0.5
            if t < 1e-12:
                raise OracleError("Newton line search failed")
        u, val, grad, hess = u_new, val_new, grad_new, hess_new
    if np.max(np.abs(grad)) <= tol:
        return u
    raise OracleError("Newton inner maximizer did not converge")


def irls_logistic(
    y: np.ndarray,
    X: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Logistic MLE via iteratively reweighted least squares."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = X @ beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        grad = X.T @ (y - p)
        if np.max(np.abs(grad)) <= tol:
            # the gradient also underflows under perfect separation, where
            # the MLE does not exist; margins this large mean divergence
            if np.all(np.where(y == 1.0, eta, -eta) > 20.0):
                raise OracleError("separation detected: no finite MLE")
            return beta
        w = np.maximum(p * (1.0 - p), 1e-12)
        H = X.T @ (w[:, None] * X)
        beta = beta + np.linalg.solve(H, grad)
        if np.linalg.norm(beta) > 1e4:
            raise OracleError("separation detected: diverging coefficients")
    raise OracleError("IRLS did not converge")


def fd_gradient(
    f: Callable[[np.ndarray], float],
    theta: np.ndarray,
    h: float | None = None,
) -> np.ndarray:
    """Central finite differences of a scalar function."""
    theta = np.asarray(theta, dtype=float).ravel()
    out = np.empty_like(theta)
    for k in range(theta.size):
        hk = h if h is not None else 1e-6 * (1.0 + abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += hk
        tm[k] -= hk
        out[k] = (f(tp) - f(tm)) / (2.0 * hk)
    return out


def _active_exponent(params: ModelParams, data: ProblemData):
    """Exponent of the true marginal integrand over the active (sigma>0)
    random effects in the F2 parameterization, including the N(0, I)
    normalizer.  Returns (fun, grad_hess, q_active, offset_ll)."""
    sigma = params.sigma
    active = [i for i, s in enumerate(sigma) if s > 0]
    cols = np.hstack([sigma[i] * data.Zblocks[i] for i in active]) if active else None
    qa = 0 if cols is None else cols.shape[1]
    Xb = data.X @ params.beta
    y = data.y

    def exponent(v):
        eta = Xb if qa == 0 else Xb + cols @ v
        ll = float(np.dot(y, eta) - np.sum(np.logaddexp(0.0, eta)))
        return ll - 0.5 * float(np.dot(v, v)) - 0.5 * qa * _LOG_2PI

    def grad_hess(v):
        eta = Xb if qa == 0 else Xb + cols @ v
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        w = p * (1.0 - p)
        g = cols.T @ (y - p) - v
        H = -(cols.T @ (w[:, None] * cols) + np.eye(qa))
        return g, H

    return exponent, grad_hess, qa


def _exponent_mode(exponent, grad_hess, qa, max_iter=200):
    v = np.zeros(qa)
    val = exponent(v)
    for _ in range(max_iter):
        g, H = grad_hess(v)
        if np.max(np.abs(g)) <= 1e-11:
            break
        step = np.linalg.solve(-H, g)
        t = 1.0
        while exponent(v + t * step) < val - 1e-12:
            t *= 0.5
            if t < 1e-12:
                raise OracleError("mode search line search failed")
        v = v + t * step
        val = exponent(v)
    else:
        raise OracleError("mode search did not converge")
    if not np.all(np.isfinite(v)):
        raise OracleError("degenerate proposal: non-finite mode")
    _, H = grad_hess(v)
    return v, H


def quadrature_loglik(
    data: ProblemData,
    params: ModelParams,
    nodes: int = 30,
    check_tol: float = 1e-6,
) -> float:
    """Adaptive tensor-product Gauss-Hermite marginal log-likelihood.

    Only feasible for q <= 3 active random-effect coordinates.  The
    grid is doubled once as a built-in convergence check.
    """
    if nodes < 20:
        raise ValueError("need at least 20 nodes per dimension")
    exponent, grad_hess, qa = _active_exponent(params, data)
    if qa > 3:
        raise ValueError(f"quadrature supports q <= 3, got q = {qa}")
    if qa == 0:
        return exponent(np.zeros(0)) - 0.5 * data.n * _LOG_2PI

    mode, H = _exponent_mode(exponent, grad_hess, qa)
    C = np.linalg.cholesky(np.linalg.inv(-H))

    def evaluate(k):
        z1, w1 = np.polynomial.hermite.hermgauss(k)
        grids = np.meshgrid(*([z1] * qa), indexing="ij")
        zs = np.stack([g.ravel() for g in grids], axis=1)  # (k^qa, qa)
        wgrids = np.meshgrid(*([np.log(w1)] * qa), indexing="ij")
        logw = np.sum(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        terms = np.empty(zs.shape[0])
        for idx in range(zs.shape[0]):
            v = mode + np.sqrt(2.0) * (C @ zs[idx])
            terms[idx] = logw[idx] + exponent(v) + float(np.dot(zs[idx], zs[idx]))
        return float(
            logsumexp(terms)
            + 0.5 * qa * np.log(2.0)
            + np.sum(np.log(np.diag(C)))
        )

    coarse = evaluate(nodes)
    fine = evaluate(2 * nodes)
    if abs(fine - coarse) > check_tol * (1.0 + abs(fine)):
        raise OracleError(
            f"quadrature not converged: {coarse} vs {fine} at {nodes} nodes"
        )
    return fine - 0.5 * data.n * _LOG_2PI


def mc_loglik(
    data: ProblemData,
    params: ModelParams,
    nsamples: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Importance-sampling marginal log-likelihood with a Laplace proposal.

    Returns (estimate, Monte Carlo standard error on the log scale).
    """
    exponent, grad_hess, qa = _active_exponent(params, data)
    if qa == 0:
        return exponent(np.zeros(0)) - 0.5 * data.n * _LOG_2PI, 0.0
    mode, H = _exponent_mode(exponent, grad_hess, qa)
    cov = np.linalg.inv(-H)
    L = np.linalg.cholesky(cov)
    logdet_cov = float(2.0 * np.sum(np.log(np.diag(L))))
    rng = np.random.default_rng(seed)
    zs = rng.standard_normal((nsamples, qa))
    logs = np.empty(nsamples)
    for s in range(nsamples):
        v = mode + L @ zs[s]
        logq = -0.5 * float(np.dot(zs[s], zs[s])) - 0.5 * qa * _LOG_2PI - 0.5 * logdet_cov
        logs[s] = exponent(v) - logq
    mx = np.max(logs)
    wts = np.exp(logs - mx)
    est = mx + np.log(np.mean(wts))
    stderr = float(np.std(wts, ddof=1) / (np.mean(wts) * np.sqrt(nsamples)))
    return float(est) - 0.5 * data.n * _LOG_2PI, stderr
