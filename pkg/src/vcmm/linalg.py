"""Capacitance-based kernels shared by both MM loops.

All inverses of A = W^{-1} + sum_i sigma_i^2 Z_i Z_i^T are applied via
the Cholesky factor of the q x q capacitance matrix
M = I_q + Z(sigma)^T W Z(sigma), so W^{-1} is never formed (weights may
underflow when fitted probabilities saturate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

TRACE_PANEL = 64


@dataclass(frozen=True)
class CapacitanceFactor:
    """Cholesky factor of M = I_q + Z(sigma)^T diag(w) Z(sigma)."""

    chol: np.ndarray  # lower triangular
    Zsigma: np.ndarray  # (n, q) scaled design (sigma_1 Z_1, ..., sigma_m Z_m)
    w: np.ndarray

    @property
    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))


def build_capacitance(
    w: np.ndarray,
    sigma: np.ndarray,
    Zblocks: Sequence[np.ndarray],
) -> CapacitanceFactor:
    """Factor I_q + Z(sigma)^T diag(w) Z(sigma); O(n q^2 + q^3)."""
    w = np.asarray(w, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()
    if np.any(w <= 0) or np.any(w > 0.25 + 1e-12):
        raise ValueError("weights must lie in (0, 0.25]")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    if len(sigma) != len(Zblocks):
        raise ValueError("sigma length must match number of blocks")
    Zs = np.hstack([s * np.asarray(Z, dtype=float) for s, Z in zip(sigma, Zblocks)])
    M = Zs.T @ (w[:, None] * Zs)
    M[np.diag_indices_from(M)] += 1.0
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:  # I + PSD: only NaN/Inf input gets here
        raise FloatingPointError("capacitance Cholesky breakdown") from exc
    if not np.all(np.isfinite(np.diag(L))):
        raise FloatingPointError("capacitance Cholesky breakdown (non-finite input)")
    return CapacitanceFactor(chol=L, Zsigma=Zs, w=w)


def apply_A_inverse(factor: CapacitanceFactor, V: np.ndarray) -> np.ndarray:
    """A^{-1} V for A = W^{-1} + sum_i sigma_i^2 Z_i Z_i^T.

    Computed as W V - W Zs M^{-1} Zs^T W V without forming W^{-1}.
    Accepts a vector or an (n, k) matrix.
    """
    V = np.asarray(V, dtype=float)
    vec = V.ndim == 1
    if vec:
        V = V[:, None]
    if V.shape[0] != factor.w.shape[0]:
        raise ValueError(f"V has {V.shape[0]} rows, expected {factor.w.shape[0]}")
    WV = factor.w[:, None] * V
    T = cho_solve((factor.chol, True), factor.Zsigma.T @ WV)
    out = WV - factor.w[:, None] * (factor.Zsigma @ T)
    return out[:, 0] if vec else out


def block_traces(
    factor: CapacitanceFactor,
    Zblocks: Sequence[np.ndarray],
    panel: int = TRACE_PANEL,
) -> np.ndarray:
    """t_i = tr(Z_i^T A^{-1} Z_i), computed column-panel-wise."""
    out = np.empty(len(Zblocks))
    for i, Z in enumerate(Zblocks):
        Z = np.asarray(Z, dtype=float)
        acc = 0.0
        for j in range(0, Z.shape[1], panel):
            V = Z[:, j : j + panel]
            acc += float(np.sum(V * apply_A_inverse(factor, V)))
        out[i] = acc
    return out
