#!/usr/bin/env python3
"""Replicate study on the crossed-ANOVA design.

Fits both MM algorithms over a grid of per-cell replicate counts and
prints a summary table (means and Monte Carlo SDs of the estimates,
plus mean runtime per fit).

Example:
    python3 scripts/run_anova_table.py --reps 50 --cells 2 8 50
"""

import argparse
import time

import numpy as np

from vcmm import AnovaDesign, FitConfig, Formulation, fit, replicate_seed, simulate_anova


def run_cell(c: int, method: str, reps: int, seed: int, cfg: FitConfig):
    betas, sig2s, times = [], [], []
    for i in range(reps):
        design = AnovaDesign(c=c, seed=replicate_seed(seed, i))
        data, _ = simulate_anova(design)
        t0 = time.perf_counter()
        result = fit(Formulation(method), data, cfg)
        times.append(time.perf_counter() - t0)
        betas.append(result.params.beta)
        sig2s.append(result.params.sigma2)
    betas, sig2s = np.asarray(betas), np.asarray(sig2s)
    return {
        "method": method,
        "c": c,
        "runtime_mean": float(np.mean(times)),
        "beta_mean": betas.mean(axis=0),
        "beta_sd": betas.std(axis=0, ddof=1) if reps > 1 else np.zeros(3),
        "sigma2_mean": sig2s.mean(axis=0),
        "sigma2_sd": sig2s.std(axis=0, ddof=1) if reps > 1 else np.zeros(3),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--cells", type=int, nargs="+", default=[2, 8, 50])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--outer-tol", type=float, default=1e-6)
    args = ap.parse_args()

    cfg = FitConfig(outer_tol=args.outer_tol)
    fmt = lambda v: " ".join(f"{x:7.3f}" for x in v)  # noqa: E731
    print(f"{'method':7s} {'c':>4s} {'sec/fit':>8s}  "
          f"{'beta mean (sd)':>40s}  {'sigma2 mean (sd)':>40s}")
    for c in args.cells:
        for method in ("mmla1", "mmla2"):
            row = run_cell(c, method, args.reps, args.seed, cfg)
            print(
                f"{method:7s} {c:4d} {row['runtime_mean']:8.3f}  "
                f"{fmt(row['beta_mean'])} ({fmt(row['beta_sd'])})  "
                f"{fmt(row['sigma2_mean'])} ({fmt(row['sigma2_sd'])})"
            )


if __name__ == "__main__":
    main()
