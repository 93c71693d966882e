"""Core model types and objectives for the logistic linear mixed model.

Two parameterizations of the same model are supported:

* F1: eta = X beta + Z1 u1 + ... + Zm um with u_i ~ N(0, sigma_i^2 I).
* F2: eta = X beta + sigma_1 Z1 u1 + ... + sigma_m Zm um with u_i ~ N(0, I).

The Laplace-approximated log-likelihood is evaluated in a stable form
that never inverts the weight matrix W; all log-determinants go through
the q x q capacitance matrix I + Z(sigma)^T W Z(sigma) (or its n x n
twin when q > n).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from . import linalg

LOG_2PI = float(np.log(2.0 * np.pi))


class Formulation(Enum):
    """Which parameterization the solver works in."""

    F1 = "mmla1"
    F2 = "mmla2"


@dataclass(frozen=True)
class ProblemData:
    """Response, fixed-effect design, and block random-effect designs.

    Attributes
    ----------
    y : (n,) array of 0/1 responses.
    X : (n, p) fixed-effect design (include an intercept column yourself).
    Zblocks : tuple of (n, q_i) random-effect design matrices.
    """

    y: np.ndarray
    X: np.ndarray
    Zblocks: tuple

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Zb = tuple(np.atleast_2d(np.asarray(Z, dtype=float)) for Z in self.Zblocks)
        if y.size == 0:
            raise ValueError("empty response vector")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y must contain only 0/1 entries")
        n = y.shape[0]
        if X.shape[0] != n:
            raise ValueError(f"X has {X.shape[0]} rows, expected {n}")
        if len(Zb) < 1:
            raise ValueError("need at least one random-effect block")
        for i, Z in enumerate(Zb):
            if Z.shape[0] != n:
                raise ValueError(f"Zblocks[{i}] has {Z.shape[0]} rows, expected {n}")
            if Z.shape[1] < 1:
                raise ValueError(f"Zblocks[{i}] has no columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Zblocks", Zb)
        object.__setattr__(self, "_Z", np.hstack(Zb))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return len(self.Zblocks)

    @property
    def block_sizes(self) -> tuple:
        return tuple(Z.shape[1] for Z in self.Zblocks)

    @property
    def q(self) -> int:
        return sum(self.block_sizes)

    @property
    def Z(self) -> np.ndarray:
        """Concatenated (n, q) random-effect design."""
        return self._Z

    def block_slices(self):
        """Slices into the concatenated u vector, one per block."""
        out = []
        start = 0
        for qi in self.block_sizes:
            out.append(slice(start, start + qi))
            start += qi
        return out

    def split_u(self, u: np.ndarray):
        return [u[s] for s in self.block_slices()]


@dataclass(frozen=True)
class ModelParams:
    """Fixed effects and variance components."""

    beta: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        sigma2 = np.asarray(self.sigma2, dtype=float).ravel()
        if np.any(sigma2 < 0):
            raise ValueError("variance components must be nonnegative")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)

    def expand_sigma(self, block_sizes: Sequence[int]) -> np.ndarray:
        """Per-coordinate sigma, i.e. the diagonal of D = blkdiag(sigma_i I)."""
        return np.repeat(self.sigma, block_sizes)


@dataclass(frozen=True)
class LaplaceState:
    """Inner maximizer u* with its linear predictor, probabilities, weights."""

    u: np.ndarray
    eta: np.ndarray
    p: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the MM fitting loops."""

    max_outer_iters: int = 500
    max_inner_iters: int = 200
    outer_tol: float = 1e-8
    inner_tol: float = 1e-6
    init_beta: Optional[np.ndarray] = None  # None -> zeros
    init_sigma2: Optional[np.ndarray] = None  # None -> ones
    weight_clamp_eps: float = 1e-10
    seed: int = 0
    # F1 only: sigma_i^2 sits in denominators so exact zero is unrepresentable
    sigma_floor: float = 1e-10
    freeze_after: int = 5

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.outer_tol <= 0 or self.inner_tol <= 0 or self.weight_clamp_eps <= 0:
            raise ValueError("tolerances must be positive")


def logistic(eta: np.ndarray, clamp_eps: float = 1e-10) -> np.ndarray:
    """Overflow-safe logistic CDF, clamped away from {0, 1}."""
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("non-finite entries in linear predictor")
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return np.clip(out, clamp_eps, 1.0 - clamp_eps)


def bernoulli_loglik(y: np.ndarray, eta: np.ndarray) -> float:
    """sum_j { y_j eta_j - ln(1 + exp(eta_j)) }, overflow-safe."""
    return float(np.dot(y, eta) - np.sum(np.logaddexp(0.0, eta)))


def make_state(
    form: Formulation,
    u: np.ndarray,
    params: ModelParams,
    data: ProblemData,
    clamp_eps: float = 1e-10,
) -> LaplaceState:
    """Assemble eta, p, w consistent with u under the given formulation."""
    u = np.asarray(u, dtype=float).ravel()
    if form is Formulation.F1:
        eta = data.X @ params.beta + data.Z @ u
    else:
        eta = data.X @ params.beta + data.Z @ (params.expand_sigma(data.block_sizes) * u)
    p = logistic(eta, clamp_eps)
    return LaplaceState(u=u, eta=eta, p=p, w=p * (1.0 - p))


def complete_loglik(
    form: Formulation,
    u: np.ndarray,
    params: ModelParams,
    data: ProblemData,
) -> float:
    """Joint log-density h(u | beta, sigma), including the -(n/2) ln 2pi term."""
    u = np.asarray(u, dtype=float).ravel()
    state = make_state(form, u, params, data)
    ll = bernoulli_loglik(data.y, state.eta)
    if form is Formulation.F1:
        if np.any(params.sigma2 == 0.0):
            raise ValueError("F1 complete log-likelihood undefined at sigma_i^2 = 0")
        pen = 0.0
        for ui, qi, s2 in zip(data.split_u(u), data.block_sizes, params.sigma2):
            pen += qi * np.log(s2) + np.dot(ui, ui) / s2
        pen *= 0.5
    else:
        pen = 0.5 * np.dot(u, u)
    return ll - pen - 0.5 * data.n * LOG_2PI


def capacitance_logdet(
    w: np.ndarray,
    sigma: np.ndarray,
    data: ProblemData,
) -> float:
    """ln det(I_q + Z(sigma)^T W Z(sigma)), via whichever dimension is smaller."""
    if data.q <= data.n:
        factor = linalg.build_capacitance(w, sigma, data.Zblocks)
        return factor.logdet
    # n x n twin: ln det(I_n + sqrt(W) Zs Zs^T sqrt(W))
    sw = np.sqrt(w)
    Zs = np.hstack([s * Z for s, Z in zip(sigma, data.Zblocks)])
    B = sw[:, None] * (Zs @ Zs.T) * sw[None, :]
    B[np.diag_indices_from(B)] += 1.0
    L = np.linalg.cholesky(B)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def laplace_loglik(
    form: Formulation,
    state: LaplaceState,
    params: ModelParams,
    data: ProblemData,
) -> float:
    """Laplace-approximated log-likelihood at the inner maximizer u*.

    Evaluated as bernoulli(eta*) - penalty(u*) - (1/2) ln det(I_q +
    Z(sigma)^T W* Z(sigma)) - (n/2) ln 2pi; the same value for both
    formulations at matched parameters.
    """
    ll = bernoulli_loglik(data.y, state.eta)
    if form is Formulation.F1:
        pen = 0.0
        for ui, s2 in zip(data.split_u(state.u), params.sigma2):
            if s2 == 0.0:
                raise ValueError("F1 Laplace objective undefined at sigma_i^2 = 0")
            pen += np.dot(ui, ui) / s2
        pen *= 0.5
    else:
        pen = 0.5 * np.dot(state.u, state.u)
    logdet = capacitance_logdet(state.w, params.sigma, data)
    return ll - pen - 0.5 * logdet - 0.5 * data.n * LOG_2PI
