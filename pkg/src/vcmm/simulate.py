"""Synthetic data generators for the two simulation designs.

The crossed two-way ANOVA design has three variance components (two
main factors plus their interaction) with 0/1 incidence blocks.  The
genetic design mimics region-based association studies: per-region
genotype blocks scaled by s_i^{-1/2} so all variance components live on
the same scale.  Genotypes are synthetic Binomial(2, maf) draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import ModelParams, ProblemData, logistic

GOLDEN_SPLIT = 0x9E3779B97F4A7C15


def replicate_seed(seed: int, index: int) -> int:
    """Derived per-replicate seed: seed XOR (index * golden-ratio constant)."""
    return (int(seed) ^ ((int(index) * GOLDEN_SPLIT) & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class AnovaDesign:
    """Two-way crossed random-effects ANOVA with interaction."""

    a: int = 5
    b: int = 5
    c: int = 2
    beta: tuple = (0.6, 1.0, -1.0)
    sigma2: tuple = (0.5, 0.9, 0.3)
    seed: int = 0

    def __post_init__(self):
        if self.a < 1 or self.b < 1 or self.c < 1:
            raise ValueError("level counts and replicates must be >= 1")
        if len(self.beta) != 3 or len(self.sigma2) != 3:
            raise ValueError("ANOVA design uses 3 covariates and 3 components")
        if any(s < 0 for s in self.sigma2):
            raise ValueError("variance components must be nonnegative")

    @property
    def n(self) -> int:
        return self.a * self.b * self.c


@dataclass(frozen=True)
class GeneticDesign:
    """Region-based genetic design with sparse variance components."""

    n: int = 399
    m: int = 5
    sigma2: tuple = (5.0, 7.5, 10.0, 0.0, 0.0)
    beta: tuple = (0.1, -1.0, 0.8, -0.3, -1.2, 1.5)
    block_sizes: Optional[tuple] = None  # None -> drawn Uniform{10..25}
    weight_mode: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("invalid dimensions")
        if len(self.sigma2) != self.m:
            raise ValueError("sigma2 length must equal m")
        if any(s < 0 for s in self.sigma2):
            raise ValueError("variance components must be nonnegative")
        if self.block_sizes is not None and len(self.block_sizes) != self.m:
            raise ValueError("block_sizes length must equal m")


@dataclass(frozen=True)
class SelectionMetrics:
    """Support-recovery averages over replicates."""

    true_positive: float
    false_positive: float
    exact: float
    over: float


def genetic_setting_sigma2(setting: int, m: int) -> tuple:
    """The four sparse variance-component patterns of the selection study."""
    if setting == 1:
        head = (5.0, 7.5, 10.0)
    elif setting == 2:
        head = (10.0, 15.0, 20.0)
    elif setting == 3:
        head = (5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    elif setting == 4:
        head = (10.0, 12.0, 14.0, 16.0, 18.0, 20.0)
    else:
        raise ValueError(f"unknown setting {setting}")
    if m < len(head):
        raise ValueError(f"setting {setting} needs m >= {len(head)}")
    return head + (0.0,) * (m - len(head))


def simulate_anova(design: AnovaDesign) -> tuple[ProblemData, ModelParams]:
    """Draw one crossed-ANOVA dataset; deterministic given the seed."""
    rng = np.random.default_rng(design.seed)
    a, b, c = design.a, design.b, design.c
    n = design.n
    X = rng.standard_normal((n, 3))

    # row order: i (factor 1) outer, then j (factor 2), then k (replicate)
    ii = np.repeat(np.arange(a), b * c)
    jj = np.tile(np.repeat(np.arange(b), c), a)
    Z1 = np.zeros((n, a))
    Z1[np.arange(n), ii] = 1.0
    Z2 = np.zeros((n, b))
    Z2[np.arange(n), jj] = 1.0
    Z3 = np.zeros((n, a * b))
    Z3[np.arange(n), ii * b + jj] = 1.0

    s = np.sqrt(np.asarray(design.sigma2, dtype=float))
    alpha = s[0] * rng.standard_normal(a)
    gamma = s[1] * rng.standard_normal(b)
    inter = s[2] * rng.standard_normal(a * b)
    eta = X @ np.asarray(design.beta, dtype=float) + Z1 @ alpha + Z2 @ gamma + Z3 @ inter
    y = (rng.random(n) < logistic(eta)).astype(float)

    data = ProblemData(y=y, X=X, Zblocks=(Z1, Z2, Z3))
    truth = ModelParams(beta=np.asarray(design.beta, float), sigma2=np.asarray(design.sigma2, float))
    return data, truth


def simulate_genetic(design: GeneticDesign) -> tuple[ProblemData, ModelParams]:
    """Draw one genetic dataset with synthetic genotype blocks."""
    rng = np.random.default_rng(design.seed)
    n, m = design.n, design.m
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 5))])

    if design.block_sizes is None:
        sizes = rng.integers(10, 26, size=m)
    else:
        sizes = np.asarray(design.block_sizes, dtype=int)
    Zblocks = []
    for s_i in sizes:
        maf = rng.uniform(0.05, 0.5, size=s_i)
        G = rng.binomial(2, maf[None, :], size=(n, s_i)).astype(float)
        Zblocks.append(G / np.sqrt(s_i) if design.weight_mode else G)

    sigma = np.sqrt(np.asarray(design.sigma2, dtype=float))
    eta = X @ np.asarray(design.beta, dtype=float)
    for Z, s_i, sig in zip(Zblocks, sizes, sigma):
        eta = eta + Z @ (sig * rng.standard_normal(s_i))
    y = (rng.random(n) < logistic(eta)).astype(float)

    data = ProblemData(y=y, X=X, Zblocks=tuple(Zblocks))
    truth = ModelParams(beta=np.asarray(design.beta, float), sigma2=np.asarray(design.sigma2, float))
    return data, truth


def selection_metrics(
    truth_support: set,
    fitted_supports: Sequence[set],
) -> SelectionMetrics:
    """TP/FP averages and Exact/Over frequencies over replicate supports."""
    truth = set(truth_support)
    fitted = [set(s) for s in fitted_supports]
    if not fitted:
        raise ValueError("no replicate supports given")
    tp = float(np.mean([len(s & truth) for s in fitted]))
    fp = float(np.mean([len(s - truth) for s in fitted]))
    exact = float(np.mean([s == truth for s in fitted]))
    over = float(np.mean([s > truth for s in fitted]))
    return SelectionMetrics(true_positive=tp, false_positive=fp, exact=exact, over=over)
