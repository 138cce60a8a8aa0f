"""Benchmark command line: gmr-bench, spsd-bench, svd-bench, synth, sketch-info.

Every run writes a fixed-header results CSV plus per-metric plot-data CSVs
and a PNG figure (pass --no-plot to skip the figure). Runs are reproducible
from any CSV row alone: the full parameter tuple and seed are recorded.

Exit codes: 0 success, 2 config error, 3 IO error, 4 algorithmic failure
after retries. The SKETCHLA_SEED environment variable overrides the seeds
list with a single global seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bench_io, gmr, spsd, svd_stream
from .bench_io import ResultRow
from .errors import ConfigError, ParseError, RankCollapse, SketchlaError
from .matrix import MatrixHandle, best_rank_k, fro_norm, tail_norm
from .rng import derive_seed, substream
from .sketch import FAMILIES, SketchSpec, apply_cost, describe, realize
from .sketch import suggested_embedding_rows, suggested_product_rows

SEED_ENV = "SKETCHLA_SEED"
MAX_RANK_RETRIES = 3
SPARSE_ESTIMATE_NNZ = 10_000_000


def _parse_int_list(text: str, name: str):
    """Comma-separated ints; 'a-b' expands to the inclusive range."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo_str, hi_str = part.split("-", 1)
            try:
                lo, hi = int(lo_str), int(hi_str)
            except ValueError:
                raise ConfigError(f"bad {name} range {part!r}") from None
            if hi < lo:
                raise ConfigError(f"{name} range {part!r} is decreasing")
            out.extend(range(lo, hi + 1))
        else:
            try:
                out.append(int(part))
            except ValueError:
                raise ConfigError(f"bad {name} value {part!r}") from None
    if not out:
        raise ConfigError(f"{name} list is empty")
    return out


def _parse_sweep(text: str):
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad sweep {text!r}") from None
    if not vals:
        raise ConfigError("sweep list is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("sweep values must be strictly increasing")
    return vals


def _resolve_seeds(args) -> list:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return [int(env)]
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return _parse_int_list(args.seeds, "seeds")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_or_synth(args, default_kind: str = "none"):
    """Returns (handle, dataset name). Synth params apply when no --dataset."""
    if args.dataset:
        handle, record, _ = bench_io.load_dataset(args.dataset)
        return handle, record.name
    decay = args.decay if args.decay else default_kind
    handle = bench_io.synth_lowrank_noise(
        args.m, args.n, args.k, args.noise, decay=decay, seed=args.data_seed
    )
    return handle, f"synth-{args.m}x{args.n}-k{args.k}-{decay}"


def _emit(rows, out: Path, experiment: str, metrics, x_field: str, args,
          y_label: str, logx: bool = False, logy: bool = False):
    """Write results.csv, per-metric plot data, figure, optional JSON summary."""
    bench_io.write_results(rows, out / "results.csv")
    series = []
    summary = {"experiment": experiment, "x_field": x_field, "metrics": {}}
    for metric in metrics:
        sub = [r for r in rows if r.metric == metric]
        agg = bench_io.emit_plotdata(sub, x_field, "value", out / f"plotdata_{metric}.csv")
        series.append((metric, agg))
        summary["metrics"][metric] = [list(t) for t in agg]
    if not args.no_plot:
        from . import report

        report.render_quartile_figure(
            series, x_field, y_label, experiment, out / f"{experiment}.png",
            logx=logx, logy=logy,
        )
    if args.json_summary:
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"{experiment}: wrote {len(rows)} rows to {out / 'results.csv'}")


def _with_rank_retries(fn, seed):
    """Run fn(attempt_seed); on RankCollapse retry with fresh derived seeds."""
    attempt_seed = seed
    for attempt in range(MAX_RANK_RETRIES + 1):
        try:
            return fn(attempt_seed)
        except RankCollapse:
            if attempt == MAX_RANK_RETRIES:
                raise
            attempt_seed = derive_seed(seed, "retry", attempt + 1)
    raise AssertionError("unreachable")


def cmd_gmr_bench(args) -> int:
    a_handle, ds_name = _load_or_synth(args)
    m, n = a_handle.shape
    c, r = args.c, args.r
    if not (1 <= c <= n and 1 <= r <= m):
        raise ConfigError(f"need 1 <= c <= {n} and 1 <= r <= {m}, got c={c} r={r}")
    sweep = _parse_sweep(args.sweep)
    seeds = _resolve_seeds(args)
    family = args.sketch
    if family == "auto":
        family = "countsketch" if a_handle.is_sparse else "gaussian"
    use_estimate = a_handle.is_sparse and a_handle.nnz > args.nnz_threshold

    rows = []
    for seed in seeds:
        pg = substream(derive_seed(seed, "problem"), "factors")
        g_c = pg.normal(size=(n, c))
        g_r = pg.normal(size=(r, m))
        cmat = MatrixHandle(a_handle.data @ g_c)
        rmat = MatrixHandle(g_r @ a_handle.data)
        problem = gmr.GmrProblem(a_handle, cmat, rmat)
        exact = gmr.solve_exact(problem, compute_residual=not use_estimate)
        res_exact = (
            bench_io.estimate_fro_residual(
                a_handle, cmat, exact.core, rmat, seed=derive_seed(seed, "est")
            )
            if use_estimate
            else exact.residual_fro
        )
        for a_val in sweep:
            s_c = max(c + 1, math.ceil(a_val * c))
            s_r = max(r + 1, math.ceil(a_val * r))

            def run(attempt_seed, s_c=s_c, s_r=s_r):
                spec_c = SketchSpec(family, min(s_c, m), m, derive_seed(attempt_seed, "sc"))
                spec_r = SketchSpec(family, min(s_r, n), n, derive_seed(attempt_seed, "sr"))
                return gmr.solve_fast(
                    problem, spec_c, spec_r, compute_residual=not use_estimate
                )

            t0 = time.perf_counter()
            fast = _with_rank_retries(run, seed)
            wall_ms = (time.perf_counter() - t0) * 1e3
            res_fast = (
                bench_io.estimate_fro_residual(
                    a_handle, cmat, fast.core, rmat, seed=derive_seed(seed, "est")
                )
                if use_estimate
                else fast.residual_fro
            )
            ratio = res_fast / res_exact - 1.0 if res_exact > 0 else 0.0
            rows.append(ResultRow(
                experiment="gmr", dataset=ds_name, m=m, n=n, c=c, r=r,
                s_c=min(s_c, m), s_r=min(s_r, n), a=a_val, k=args.k, seed=seed,
                metric="error_ratio", value=ratio, wall_ms=wall_ms,
            ))
    _emit(rows, _out_dir(args), "gmr", ["error_ratio"], "a", args,
          "residual / optimal - 1", logy=True)
    return 0


def _spsd_points(args):
    if args.dataset:
        handle, record, _ = bench_io.load_dataset(args.dataset)
        pts = handle.dense()
        return pts, record.name
    rng = substream(args.data_seed, "points")
    pts = rng.normal(size=(args.dim, args.n))
    return pts, f"cloud-{args.dim}x{args.n}"


def cmd_spsd_bench(args) -> int:
    points, ds_name = _spsd_points(args)
    n = points.shape[1]
    c = args.c if args.c else 2 * args.k
    if not 1 <= c <= n:
        raise ConfigError(f"need 1 <= c <= {n}, got c={c}")
    sweep = _parse_sweep(args.sweep)
    seeds = _resolve_seeds(args)
    if args.sigma:
        sigma = args.sigma
    else:
        sigma, _ = spsd.tune_rbf_sigma(points, k=args.k, seed=args.data_seed)
    k_dense = spsd.rbf_kernel_dense(points, sigma)

    rows = []
    methods = ("nystrom", "fast", "faster", "optimal")
    for seed in seeds:
        for a_val in sweep:
            s = min(n, max(c, math.ceil(a_val * c)))
            for method in methods:
                oracle = spsd.KernelOracle(points, sigma)

                def run(attempt_seed, s=s, method=method, oracle=oracle):
                    if method == "nystrom":
                        return spsd.nystrom(oracle, c, attempt_seed)
                    if method == "fast":
                        return spsd.fast_spsd_baseline(oracle, c, s, attempt_seed)
                    if method == "faster":
                        return spsd.approximate(oracle, c, s, attempt_seed)
                    return spsd.optimal_core(oracle, c, attempt_seed)

                t0 = time.perf_counter()
                approx = _with_rank_retries(run, seed)
                wall_ms = (time.perf_counter() - t0) * 1e3
                ratio = spsd.error_ratio(k_dense, approx)
                rows.append(ResultRow(
                    experiment="spsd", dataset=ds_name, m=n, n=n, c=c, r=c,
                    s_c=s, s_r=s, a=a_val, k=args.k, epsilon=None, sigma=sigma,
                    seed=seed, metric=f"error_ratio_{method}", value=ratio,
                    wall_ms=wall_ms,
                ))
                rows.append(ResultRow(
                    experiment="spsd", dataset=ds_name, m=n, n=n, c=c, r=c,
                    s_c=s, s_r=s, a=a_val, k=args.k, epsilon=None, sigma=sigma,
                    seed=seed, metric=f"queries_{method}",
                    value=float(approx.queries_used), wall_ms=wall_ms,
                ))
    _emit(rows, _out_dir(args), "spsd",
          [f"error_ratio_{m}" for m in methods], "a", args,
          "||K - C X C^T||_F / ||K||_F", logy=True)
    return 0


def cmd_svd_bench(args) -> int:
    a_handle, ds_name = _load_or_synth(args, default_kind="poly")
    m, n = a_handle.shape
    k = args.k
    if not 1 <= k <= min(m, n):
        raise ConfigError(f"need 1 <= k <= {min(m, n)}, got k={k}")
    budgets = [float(b) for b in _parse_sweep(args.sweep)]
    seeds = _resolve_seeds(args)
    a_dense = a_handle.dense()
    tail = tail_norm(a_handle, k)
    a_fro = fro_norm(a_handle)
    denom = tail if tail > 1e-12 * a_fro else None

    rows = []
    for seed in seeds:
        for b in budgets:
            c = max(k, int(round(b * k / 2)))
            c = min(c, m, n)
            r = c
            s_rows = min(min(m, n), max(c, math.ceil(3 * c * math.sqrt(c / k))))
            c0 = min(n, 4 * c)
            r0 = min(m, 4 * c)
            eps = min(0.99, k / c) if c > k else 0.5
            # same total budget, but the baseline needs its row sketch taller
            # than its column sketch, so it gets a 1:2 split instead of 1:1
            total = c + r
            c_p = min(n, max(k, total // 3))
            r_p = min(m, max(c_p, total - c_p))

            def run_fast(attempt_seed, c=c, r=r, s_rows=s_rows, c0=c0, r0=r0, eps=eps):
                cfg = svd_stream.StreamSvdConfig(
                    m=m, n=n, k=k, epsilon=eps, c0=max(c0, c), r0=max(r0, r),
                    c=c, r=r, s_c=s_rows, s_r=s_rows,
                    block_size=args.block_size, seed=attempt_seed,
                )
                return svd_stream.fast_sp_svd(a_handle, cfg)

            def run_practical(attempt_seed, c_p=c_p, r_p=r_p):
                return svd_stream.practical_sp_svd(
                    a_handle, c_p, r_p, attempt_seed, block_size=args.block_size
                )

            for method, run, cc, rr in (
                ("fast", run_fast, c, r), ("practical", run_practical, c_p, r_p)
            ):
                t0 = time.perf_counter()
                factors = _with_rank_retries(run, seed)
                wall_ms = (time.perf_counter() - t0) * 1e3
                # factors keep their full rank (> k); the ratio may go below 0
                approx = (factors.u * factors.sigma) @ factors.v.T
                resid = float(np.linalg.norm(a_dense - approx))
                value = resid / denom - 1.0 if denom else resid / a_fro
                rows.append(ResultRow(
                    experiment="svd", dataset=ds_name, m=m, n=n, c=cc, r=rr,
                    s_c=s_rows, s_r=s_rows, a=b, k=k, epsilon=eps, seed=seed,
                    metric=f"error_ratio_{method}", value=value, wall_ms=wall_ms,
                ))
    _emit(rows, _out_dir(args), "svd",
          ["error_ratio_fast", "error_ratio_practical"], "a", args,
          "residual / ||A - A_k||_F - 1", logy=True)
    return 0


def cmd_synth(args) -> int:
    handle = bench_io.synth_lowrank_noise(
        args.m, args.n, args.k, args.noise, decay=args.decay, seed=args.data_seed
    )
    out = Path(args.out)
    if out.suffix.lower() not in (".mtx", ".mm"):
        out = out / f"synth-{args.m}x{args.n}-k{args.k}.mtx"
        out.parent.mkdir(parents=True, exist_ok=True)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    bench_io.write_matrix_market(handle, out)
    rec = bench_io.dataset_record(out.stem, handle, str(out))
    print(f"synth: {rec.rows}x{rec.cols} {rec.kind} density={rec.density:.4f} -> {out}")
    return 0


def cmd_sketch_info(args) -> int:
    spec = SketchSpec(args.sketch, args.rows, args.dim, args.data_seed, p=args.p)
    op = realize(spec)
    info = describe(op)
    info["apply_cost_dense_cols"] = apply_cost(op, np.zeros((args.dim, max(1, args.cols))))
    if args.k:
        info["suggested_embedding_rows"] = suggested_embedding_rows(
            args.sketch, args.k, args.eta, args.delta, source_dim=args.dim
        )
    if args.epsilon:
        info["suggested_product_rows"] = suggested_product_rows(
            args.sketch, args.epsilon, args.delta, dims=(args.dim, args.cols)
        )
    print(json.dumps(info, indent=2, sort_keys=True, default=str))
    return 0


def _add_common(p, c_default=20, r_default=20, sweep_default="2,4,6,8,10,12"):
    p.add_argument("--dataset", default=None, help="libsvm or Matrix Market path")
    p.add_argument("--m", type=int, default=200, help="synthetic rows")
    p.add_argument("--n", type=int, default=150, help="synthetic cols")
    p.add_argument("--k", type=int, default=10, help="target / latent rank")
    p.add_argument("--noise", type=float, default=0.01, help="synthetic noise level")
    p.add_argument("--decay", default=None, choices=(None, "none", "poly"),
                   help="synthetic spectrum decay")
    p.add_argument("--c", type=int, default=c_default, help="column-factor width")
    p.add_argument("--r", type=int, default=r_default, help="row-factor height")
    p.add_argument("--sweep", default=sweep_default,
                   help="comma list of sweep values, strictly increasing")
    p.add_argument("--seeds", default="0-9", help="comma list of seeds, 'a-b' ranges ok")
    p.add_argument("--data-seed", type=int, default=0, help="synthetic data seed")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--json-summary", action="store_true", help="also write summary.json")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sketchla",
        description="sketched linear algebra benchmarks (regression, kernels, streaming SVD)",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gmr-bench", help="fast vs exact matrix regression sweep")
    _add_common(g)
    g.add_argument("--sketch", default="auto",
                   choices=("auto",) + FAMILIES, help="sketch family")
    g.add_argument("--nnz-threshold", type=int, default=SPARSE_ESTIMATE_NNZ,
                   help="switch to sketched residual estimates above this nnz")
    g.set_defaults(func=cmd_gmr_bench)

    s = sub.add_parser("spsd-bench", help="kernel approximation method comparison")
    _add_common(s, c_default=0, sweep_default="2,4,6,8,10")
    s.add_argument("--dim", type=int, default=10, help="synthetic point dimension")
    s.add_argument("--sigma", type=float, default=0.0,
                   help="RBF bandwidth (0 = auto-tune)")
    s.set_defaults(func=cmd_spsd_bench, k=15)

    v = sub.add_parser("svd-bench", help="streaming SVD budget sweep")
    _add_common(v, sweep_default="4,6,8,12")
    v.add_argument("--block-size", type=int, default=97, help="streaming block width")
    v.set_defaults(func=cmd_svd_bench, m=500, n=400)

    y = sub.add_parser("synth", help="write a synthetic dataset as Matrix Market")
    y.add_argument("--m", type=int, default=200)
    y.add_argument("--n", type=int, default=150)
    y.add_argument("--k", type=int, default=10)
    y.add_argument("--noise", type=float, default=0.01)
    y.add_argument("--decay", default="none", choices=("none", "poly"))
    y.add_argument("--data-seed", type=int, default=0)
    y.add_argument("--out", default="results", help="output file or directory")
    y.set_defaults(func=cmd_synth)

    i = sub.add_parser("sketch-info", help="describe a sketch operator and sizes")
    i.add_argument("--sketch", default="gaussian", choices=FAMILIES)
    i.add_argument("--rows", type=int, default=64)
    i.add_argument("--dim", type=int, default=256)
    i.add_argument("--cols", type=int, default=64)
    i.add_argument("--p", type=int, default=2)
    i.add_argument("--k", type=int, default=0)
    i.add_argument("--epsilon", type=float, default=0.0)
    i.add_argument("--eta", type=float, default=0.5)
    i.add_argument("--delta", type=float, default=0.05)
    i.add_argument("--data-seed", type=int, default=0)
    i.set_defaults(func=cmd_sketch_info)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ParseError, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3
    except SketchlaError as e:
        print(f"failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
