"""Shared helpers: random problem instances of various shapes."""

import numpy as np

from vcmm import AnovaDesign, GeneticDesign, ProblemData, simulate_anova, simulate_genetic
from vcmm.model import logistic


def random_instance(rng, n=20, block_sizes=(2, 3), p=2, beta_scale=0.5,
                    sigma2=None):
    """Small dense instance with Gaussian designs; returns (data, sigma2)."""
    m = len(block_sizes)
    if sigma2 is None:
        sigma2 = rng.uniform(0.2, 1.5, size=m)
    X = rng.standard_normal((n, p))
    Zblocks = tuple(rng.standard_normal((n, q)) for q in block_sizes)
    beta = beta_scale * rng.standard_normal(p)
    eta = X @ beta
    for Z, s2 in zip(Zblocks, sigma2):
        eta = eta + Z @ (np.sqrt(s2) * rng.standard_normal(Z.shape[1]))
    y = (rng.random(n) < logistic(eta)).astype(float)
    return ProblemData(y=y, X=X, Zblocks=Zblocks), np.asarray(sigma2, float)


def paper_style_instance(rng):
    """One instance drawn from the two simulation-study families."""
    if rng.random() < 0.5:
        a, b = rng.integers(2, 6, size=2)
        c = int(rng.integers(2, 21))
        design = AnovaDesign(a=int(a), b=int(b), c=c,
                             seed=int(rng.integers(2**31)))
        data, _ = simulate_anova(design)
    else:
        m = int(rng.integers(1, 6))
        n = int(rng.integers(80, 501))
        sigma2 = tuple(rng.uniform(0.0, 4.0, size=m))
        design = GeneticDesign(n=n, m=m, sigma2=sigma2,
                               beta=tuple(0.5 * rng.standard_normal(6)),
                               seed=int(rng.integers(2**31)))
        data, _ = simulate_genetic(design)
    return data
