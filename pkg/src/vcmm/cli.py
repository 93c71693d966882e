"""Command-line interface: fit, path, simulate, replicate.

Exit codes: 0 success, 1 input error, 2 the algorithm did not converge
(fit/path; the result file is still written) or some replicate failed
(replicate).  ``--threads`` controls replicate parallelism only and
falls back to the ``VCMM_THREADS`` environment variable; 1 guarantees
bit-reproducible output.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as vio
from .model import FitConfig, Formulation
from .penalized import (
    DEFAULT_LAMBDA_MIN_RATIO,
    DEFAULT_N_LAMBDAS,
    compute_path,
    default_lambda_grid,
)
from .simulate import (
    AnovaDesign,
    GeneticDesign,
    genetic_setting_sigma2,
    replicate_seed,
    selection_metrics,
    simulate_anova,
    simulate_genetic,
)
from .solver import fit

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def _resolve_threads(value):
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("VCMM_THREADS")
    return max(1, int(env)) if env else 1


def _add_data_args(p):
    p.add_argument("--y", required=True, help="response CSV (one column, no header)")
    p.add_argument("--x", required=True, help="fixed-effects CSV (header row)")
    p.add_argument("--z", required=True, help="random-effects CSV (header row)")
    p.add_argument("--blocks", required=True, help="blocks.json column ranges over Z")


def _add_fit_config_args(p):
    p.add_argument("--max-outer-iters", type=int, default=FitConfig.max_outer_iters)
    p.add_argument("--outer-tol", type=float, default=FitConfig.outer_tol)


def _fit_config(args) -> FitConfig:
    return FitConfig(max_outer_iters=args.max_outer_iters, outer_tol=args.outer_tol)


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    data, names = vio.load_problem(args.y, args.x, args.z, args.blocks)
    form = Formulation(args.formulation)
    result = fit(form, data, _fit_config(args))
    vio.dump_json(
        args.out,
        {
            "schema": vio.SCHEMA_VERSION,
            "formulation": form.value,
            "converged": result.converged,
            "outer_iters": result.outer_iters,
            "inner_iters_total": result.inner_iters_total,
            "loglik_la": result.loglik_la,
            "block_names": names,
            "beta": result.params.beta,
            "sigma2": result.params.sigma2,
            "objective_trace": result.objective_trace,
        },
    )
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# path


def _read_lambda_file(path) -> np.ndarray:
    values = vio.read_vector_csv(path)
    if np.any(values < 0):
        raise vio.InputError(f"{path}: lambda values must be nonnegative")
    if np.any(values[:-1] <= values[1:]):
        raise vio.InputError(f"{path}: lambda grid must be strictly decreasing")
    return values


def cmd_path(args) -> int:
    data, names = vio.load_problem(args.y, args.x, args.z, args.blocks)
    cfg = _fit_config(args)
    if args.lambdas == "auto":
        lambdas = default_lambda_grid(
            data, cfg, n_lambdas=args.n_lambdas, min_ratio=args.min_ratio
        )
    else:
        lambdas = _read_lambda_file(args.lambdas)

    path = compute_path(data, lambdas, cfg)
    prefix = args.out_prefix
    m = data.m

    header = ["lambda", "df", "loglik_la", "aic", "bic"] + [
        f"sigma2_{i + 1}" for i in range(m)
    ]
    table = np.column_stack(
        [path.lambdas, path.df, path.loglik_la, path.aic, path.bic]
        + [np.array([r.params.sigma2[i] for r in path.fits]) for i in range(m)]
    )
    vio.write_matrix_csv(f"{prefix}_path.csv", header, table)

    # long format for plotting: one row per (lambda, block)
    with open(f"{prefix}_sigma2_long.csv", "w") as fh:
        fh.write("lambda,block,sigma2\n")
        for lam, res in zip(path.lambdas, path.fits):
            for name, s2 in zip(names, res.params.sigma2):
                fh.write(f"{vio.format_float(lam)},{name},{vio.format_float(s2)}\n")

    criteria = ["aic", "bic"] if args.criterion == "both" else [args.criterion]
    selected = {}
    for crit in criteria:
        idx = path.selected_aic if crit == "aic" else path.selected_bic
        res = path.fits[idx]
        selected[crit] = {
            "index": idx,
            "lambda": float(path.lambdas[idx]),
            "df": int(path.df[idx]),
            "loglik_la": res.loglik_la,
            "beta": res.params.beta,
            "sigma2": res.params.sigma2,
            "selected_blocks": [
                names[i] for i in range(m) if res.params.sigma2[i] > 0
            ],
        }
    vio.dump_json(
        f"{prefix}_selected.json",
        {
            "schema": vio.SCHEMA_VERSION,
            "criterion": args.criterion,
            "df_nonincreasing": bool(np.all(np.diff(path.df) >= 0)),
            "selected": selected,
        },
    )
    return EXIT_OK if all(r.converged for r in path.fits) else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# simulate


def _make_design(args):
    if args.design == "anova":
        return AnovaDesign(a=args.a, b=args.b, c=args.c, seed=args.seed)
    sigma2 = genetic_setting_sigma2(args.setting, args.m)
    return GeneticDesign(n=args.n, m=args.m, sigma2=sigma2, seed=args.seed)


def _simulate(design):
    if isinstance(design, AnovaDesign):
        return simulate_anova(design)
    return simulate_genetic(design)


def _block_layout(design, data):
    if isinstance(design, AnovaDesign):
        names = ["factor1", "factor2", "interaction"]
    else:
        names = [f"region_{i + 1}" for i in range(data.m)]
    bounds = np.concatenate([[0], np.cumsum(data.block_sizes)])
    return [(names[i], int(bounds[i]), int(bounds[i + 1])) for i in range(data.m)]


def cmd_simulate(args) -> int:
    design = _make_design(args)
    data, truth = _simulate(design)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    vio.write_vector_csv(out / "y.csv", data.y)
    vio.write_matrix_csv(out / "X.csv", [f"x{j + 1}" for j in range(data.p)], data.X)
    blocks = _block_layout(design, data)
    vio.write_matrix_csv(
        out / "Z.csv",
        [f"{name}_{k + 1}" for name, s, e in blocks for k in range(e - s)],
        data.Z,
    )
    vio.write_blocks(out / "blocks.json", blocks)
    vio.dump_json(
        out / "truth.json",
        {
            "schema": vio.SCHEMA_VERSION,
            "design": args.design,
            "seed": args.seed,
            "beta": truth.beta,
            "sigma2": truth.sigma2,
            "block_names": [name for name, _, _ in blocks],
        },
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# replicate


def _run_replicate(design, method: str, index: int, cfg: FitConfig) -> dict:
    """One simulation replicate; picklable for process-pool dispatch."""
    seed = replicate_seed(design.seed, index)
    rep_design = dataclasses.replace(design, seed=seed)
    data, truth = _simulate(rep_design)
    start = time.perf_counter()
    if method in ("mmla1", "mmla2"):
        result = fit(Formulation(method), data, cfg)
        params, converged, df = result.params, result.converged, None
    else:
        grid = default_lambda_grid(data, cfg)
        path = compute_path(data, grid, cfg)
        idx = path.selected_aic if method == "path-aic" else path.selected_bic
        result = path.fits[idx]
        params = result.params
        converged = all(r.converged for r in path.fits)
        df = int(path.df[idx])
    runtime = time.perf_counter() - start
    return {
        "index": index,
        "seed": seed,
        "status": "ok",
        "converged": converged,
        "runtime": runtime,
        "beta": params.beta,
        "sigma2": params.sigma2,
        "df": df,
        "truth_sigma2": truth.sigma2,
    }


def _replicate_rows(design, method, reps, cfg, threads):
    rows = []
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_run_replicate, design, method, i, cfg): i
                for i in range(reps)
            }
            done = {}
            for fut in concurrent.futures.as_completed(futures):
                i = futures[fut]
                try:
                    done[i] = fut.result()
                except Exception as err:  # noqa: BLE001 - recorded, not fatal
                    done[i] = {"index": i, "status": f"failed: {err}"}
            rows = [done[i] for i in range(reps)]
    else:
        for i in range(reps):
            try:
                rows.append(_run_replicate(design, method, i, cfg))
            except Exception as err:  # noqa: BLE001 - recorded, not fatal
                rows.append({"index": i, "status": f"failed: {err}"})
    return rows


def cmd_replicate(args) -> int:
    design = _make_design(args)
    cfg = _fit_config(args)
    threads = _resolve_threads(args.threads)
    rows = _replicate_rows(design, args.method, args.reps, cfg, threads)
    ok = [r for r in rows if r["status"] == "ok"]
    if not ok:
        raise vio.InputError("all replicates failed")
    p = ok[0]["beta"].size
    m = ok[0]["sigma2"].size
    prefix = args.out_prefix

    with open(f"{prefix}_replicates.csv", "w") as fh:
        cols = (
            ["index", "seed", "status", "converged", "runtime"]
            + [f"beta_{j + 1}" for j in range(p)]
            + [f"sigma2_{i + 1}" for i in range(m)]
        )
        fh.write(",".join(cols) + "\n")
        for r in rows:
            if r["status"] != "ok":
                fh.write(f"{r['index']},,\"{r['status']}\"" + "," * (3 + p + m) + "\n")
                continue
            vals = [str(r["index"]), str(r["seed"]), "ok", str(int(r["converged"]))]
            vals.append(vio.format_float(r["runtime"]))
            vals += [vio.format_float(v) for v in r["beta"]]
            vals += [vio.format_float(v) for v in r["sigma2"]]
            fh.write(",".join(vals) + "\n")

    def mean_sd(key, j):
        vals = np.array([r[key][j] for r in ok])
        sd = float(np.std(vals, ddof=1)) if len(ok) > 1 else 0.0
        return float(np.mean(vals)), sd

    summary = {
        "method": args.method,
        "replicates": len(rows),
        "failed": len(rows) - len(ok),
        "runtime_mean": float(np.mean([r["runtime"] for r in ok])),
    }
    for j in range(p):
        summary[f"beta_{j + 1}_mean"], summary[f"beta_{j + 1}_sd"] = mean_sd("beta", j)
    for i in range(m):
        summary[f"sigma2_{i + 1}_mean"], summary[f"sigma2_{i + 1}_sd"] = mean_sd(
            "sigma2", i
        )
    if args.method.startswith("path-"):
        truth_support = {
            i for i, s2 in enumerate(ok[0]["truth_sigma2"]) if s2 > 0
        }
        supports = [
            {i for i, s2 in enumerate(r["sigma2"]) if s2 > 0} for r in ok
        ]
        metrics = selection_metrics(truth_support, supports)
        summary["tp"] = metrics.true_positive
        summary["fp"] = metrics.false_positive
        summary["exact"] = metrics.exact
        summary["over"] = metrics.over

    with open(f"{prefix}_summary.csv", "w") as fh:
        fh.write(",".join(summary.keys()) + "\n")
        fh.write(
            ",".join(
                vio.format_float(v) if isinstance(v, float) else str(v)
                for v in summary.values()
            )
            + "\n"
        )
    return EXIT_OK if len(ok) == len(rows) else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcmm",
        description=(
            "Variance component estimation and selection for the logistic "
            "linear mixed model via MM algorithms."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model by MMLA1 or MMLA2")
    _add_data_args(p)
    p.add_argument("--formulation", choices=["mmla1", "mmla2"], required=True)
    p.add_argument("--out", required=True, help="output JSON path")
    _add_fit_config_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="lasso path over lambda with AIC/BIC selection")
    _add_data_args(p)
    p.add_argument("--lambdas", default="auto", help="'auto' or a CSV of lambdas")
    p.add_argument("--criterion", choices=["aic", "bic", "both"], default="bic")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--n-lambdas", type=int, default=DEFAULT_N_LAMBDAS)
    p.add_argument("--min-ratio", type=float, default=DEFAULT_LAMBDA_MIN_RATIO)
    _add_fit_config_args(p)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("simulate", help="write one synthetic dataset")
    p.add_argument("--design", choices=["anova", "genetic"], required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--a", type=int, default=5)
    p.add_argument("--b", type=int, default=5)
    p.add_argument("--c", type=int, default=2)
    p.add_argument("--n", type=int, default=399)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--setting", type=int, default=1, choices=[1, 2, 3, 4])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate", help="Monte Carlo study over replicates")
    p.add_argument("--design", choices=["anova", "genetic"], required=True)
    p.add_argument(
        "--method", choices=["mmla1", "mmla2", "path-aic", "path-bic"], required=True
    )
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--a", type=int, default=5)
    p.add_argument("--b", type=int, default=5)
    p.add_argument("--c", type=int, default=2)
    p.add_argument("--n", type=int, default=399)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--setting", type=int, default=1, choices=[1, 2, 3, 4])
    _add_fit_config_args(p)
    p.set_defaults(func=cmd_replicate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (vio.InputError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
