"""Command-line interface.

Subcommands: estimate, experiment, sweep-beta-gap, outlier-study,
oracle-check, plot.  Exit codes: 0 success, 1 runtime failure (sampler /
model / oracle), 2 usage error (bad flags, unknown ids, malformed config).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, replace
from datetime import datetime, timezone

from . import __version__
from . import experiments, oracle, svgplot
from .estimators import chain_se, empirical_loss, lambda_imai, lambda_tn, wbic
from .models import ModelError, get_model, get_true, sample_true
from .oracle import OracleError
from .sampler import McmcConfig, SamplerError, run_mcmc


class UsageError(Exception):
    """Bad invocation: wrong ids, malformed values, impossible requests."""


# ---------------------------------------------------------------------------
# Shared argument plumbing


def _add_mcmc_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, default=4000, help="MCMC iterations per chain")
    p.add_argument("--burn-in", type=int, default=2000, dest="burn_in", help="burn-in iterations")
    p.add_argument("--thin", type=int, default=1, help="keep every thin-th draw")
    p.add_argument("--chains", type=int, default=2, help="independent chains")
    p.add_argument("--target-accept", type=float, default=0.3, dest="target_accept")
    p.add_argument("--init-scale", type=float, default=1.0, dest="init_scale")


def _mcmc_from_args(args) -> McmcConfig:
    cfg = McmcConfig(
        iters=args.iters,
        burn_in=args.burn_in,
        thin=args.thin,
        chains=args.chains,
        seed=args.seed,
        target_accept=args.target_accept,
        init_scale=args.init_scale,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _resolve_out(args) -> str:
    out = args.out or os.environ.get("LCEST_OUTPUT_DIR") or "lcest-out"
    os.makedirs(out, exist_ok=True)
    return out


def _parse_pairs(text: str):
    pairs = []
    try:
        for chunk in text.split(";"):
            a, b = chunk.split(",")
            pairs.append((float(a), float(b)))
    except ValueError:
        raise UsageError(f"bad --pairs value {text!r}; want 'B1,B2;B1,B2;...'") from None
    for b1, b2 in pairs:
        if b1 <= 0 or b2 <= 0 or b1 == b2:
            raise UsageError(f"bad beta0 pair ({b1:g}, {b2:g})")
    return tuple(pairs)


def _parse_floats(text: str, flag: str):
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise UsageError(f"bad {flag} value {text!r}; want comma-separated numbers") from None


def _require_n(n: int) -> None:
    if n < 2:
        raise UsageError("--n must be >= 2 (the temperature scale divides by log n)")


def _get_model_or_usage(model_id: str):
    try:
        return get_model(model_id)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _get_true_or_usage(true_id: str):
    try:
        return get_true(true_id)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_json(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _write_manifest(outdir: str, command: str, config: dict, files, timings: dict) -> None:
    entries = {}
    for name in sorted(files):
        path = os.path.join(outdir, name)
        blob = open(path, "rb").read()
        entries[name] = {"bytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest()}
    manifest = {
        "tool_version": __version__,
        "command": command,
        "config": config,
        "outputs": entries,
        "timings_seconds": timings,
        "written_at": datetime.now(timezone.utc).isoformat(),
    }
    experiments.write_json(manifest, os.path.join(outdir, "manifest.json"))


# ---------------------------------------------------------------------------
# estimate


def _cmd_estimate(args) -> int:
    _require_n(args.n)
    model = _get_model_or_usage(args.model)
    _get_true_or_usage(args.true)
    pairs = _parse_pairs(args.pairs)
    if args.oracle:
        if model.dim > 2:
            raise UsageError(
                f"--oracle supports models with dim <= 2; {args.model} has dim {model.dim}"
            )
        dist = get_true(args.true)
        data = sample_true(dist, args.n, args.seed)
        est = oracle.quad_lambda_estimates(model, data, beta0_pairs=pairs)
        _print_json(
            {
                "method": "quadrature",
                "model": args.model,
                "true": args.true,
                "n": args.n,
                "seed": args.seed,
                "wbic_by_beta0": {f"{b:g}": v for b, v in sorted(est.wbic_by_beta0.items())},
                "lambda_w": {
                    f"{a:g},{b:g}": v for (a, b), v in sorted(est.lambda_w.items())
                },
                "lambda_i": est.lambda_i,
                "n_times_tn": est.n_times_tn,
                "lambda_t": est.lambda_t,
            }
        )
        return 0
    mcmc = _mcmc_from_args(args)
    rec = experiments.run_estimate(
        model_id=args.model,
        true_id=args.true,
        n=args.n,
        replicate=0,
        base_seed=args.seed,
        beta0_pairs=pairs,
        mcmc=mcmc,
    )
    out = {"method": "mcmc"}
    out.update(rec.to_json_dict())
    _print_json(out)
    return 0


# ---------------------------------------------------------------------------
# experiment


def _cmd_experiment(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    try:
        cfg = experiments.ExperimentConfig.from_json_dict(raw)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    outdir = _resolve_out(args)
    t0 = time.monotonic()
    records, failures = experiments.run_replicates(cfg)
    t_run = time.monotonic() - t0
    if not records:
        raise SamplerError("every replicate failed; nothing to summarize")
    summary = experiments.summarize(cfg, records, failures)
    files = ["summary.json", "records.jsonl", "table1.csv", "table2.csv", "table3.csv"]
    experiments.write_json(summary, os.path.join(outdir, "summary.json"))
    experiments.write_records_jsonl(records, os.path.join(outdir, "records.jsonl"))
    n_main = max(cfg.sizes)
    experiments.write_table1(summary, n_main, os.path.join(outdir, "table1.csv"))
    experiments.write_table2(summary, n_main, os.path.join(outdir, "table2.csv"))
    experiments.write_table3(summary, n_main, os.path.join(outdir, "table3.csv"))
    if len(cfg.sizes) > 1:
        experiments.write_consistency_curve(summary, os.path.join(outdir, "curve_consistency.csv"))
        files.append("curve_consistency.csv")
    _write_manifest(
        outdir,
        "experiment",
        cfg.to_json_dict(),
        files,
        {"replicates": round(t_run, 3)},
    )
    done = len(records)
    print(f"completed {done}/{cfg.replicates * len(cfg.sizes)} replicates "
          f"({len(failures)} failed); outputs in {outdir}")
    for label, s in sorted(summary["by_n"][str(n_main)]["estimators"].items()):
        bias = f" bias {s['bias']:+.4f}" if "bias" in s else ""
        print(f"  {label:18s} mean {s['mean']:.4f}{bias} var {s['variance']:.5f}")
    return 0


# ---------------------------------------------------------------------------
# sweep-beta-gap


def _cmd_sweep(args) -> int:
    _require_n(args.n)
    _get_model_or_usage(args.model)
    _get_true_or_usage(args.true)
    gaps = _parse_floats(args.gaps, "--gaps")
    if not gaps or any(g <= 0 for g in gaps):
        raise UsageError("--gaps wants positive comma-separated numbers")
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    mcmc = _mcmc_from_args(args)
    outdir = _resolve_out(args)
    t0 = time.monotonic()
    result = experiments.beta_gap_sweep(
        model_id=args.model,
        true_id=args.true,
        n=args.n,
        replicates=args.replicates,
        gaps=gaps,
        seed=args.seed,
        mcmc=mcmc,
        jobs=args.jobs,
    )
    t_run = time.monotonic() - t0
    header = ["gap", "beta0_hi", "mean", "variance"]
    if result["rows"] and "bias" in result["rows"][0]:
        header.append("bias")
    experiments.write_json(result, os.path.join(outdir, "summary.json"))
    experiments.write_curve_csv(os.path.join(outdir, "curve_beta_gap.csv"), header, result["rows"])
    _write_manifest(
        outdir,
        "sweep-beta-gap",
        {"model": args.model, "true": args.true, "n": args.n,
         "replicates": args.replicates, "gaps": gaps, "seed": args.seed,
         "mcmc": asdict(mcmc), "jobs": args.jobs},
        ["summary.json", "curve_beta_gap.csv"],
        {"replicates": round(t_run, 3)},
    )
    for row in result["rows"]:
        bias = f" bias {row['bias']:+.4f}" if "bias" in row else ""
        print(f"gap {row['gap']:g}: mean {row['mean']:.4f}{bias} var {row['variance']:.5f}")
    print(f"outputs in {outdir}")
    return 0


# ---------------------------------------------------------------------------
# outlier-study


def _cmd_outlier(args) -> int:
    _require_n(args.n)
    _get_model_or_usage(args.model)
    _get_true_or_usage(args.true)
    deltas = _parse_floats(args.deltas, "--deltas")
    if any(d < 0 for d in deltas):
        raise UsageError("--deltas must be non-negative")
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    mcmc = _mcmc_from_args(args)
    outdir = _resolve_out(args)
    t0 = time.monotonic()
    result = experiments.outlier_study(
        model_id=args.model,
        true_id=args.true,
        n=args.n,
        deltas=deltas,
        count=args.count,
        seed=args.seed,
        mcmc=mcmc,
    )
    t_run = time.monotonic() - t0
    experiments.write_json(result, os.path.join(outdir, "summary.json"))
    experiments.write_curve_csv(
        os.path.join(outdir, "curve_outlier.csv"),
        ["delta", "lambda_i", "lambda_t", "dev_i", "dev_t"],
        result["rows"],
    )
    _write_manifest(
        outdir,
        "outlier-study",
        {"model": args.model, "true": args.true, "n": args.n, "deltas": deltas,
         "count": args.count, "seed": args.seed, "mcmc": asdict(mcmc)},
        ["summary.json", "curve_outlier.csv"],
        {"study": round(t_run, 3)},
    )
    fit = result["fit_dev_i"]
    print(f"injected {args.count} copies; quadratic/linear residual ratio "
          f"{fit['ss_ratio']:.4f}")
    print(f"outputs in {outdir}")
    return 0


# ---------------------------------------------------------------------------
# oracle-check


def _cmd_oracle_check(args) -> int:
    _require_n(args.n)
    mcmc = _mcmc_from_args(args)
    checks = []
    logn = math.log(args.n)
    dist = get_true("normal:0,1")
    data = sample_true(dist, args.n, args.seed)

    for model_id in ("example1", "conjugate-normal"):
        model = get_model(model_id)
        est = oracle.quad_lambda_estimates(model, data, beta0_pairs=((1.0, 5.0),))
        dr_w = run_mcmc(model, data, 1.0 / logn, replace(mcmc, seed=experiments.mcmc_seed(args.seed, 0, 0)))
        dr_unit = run_mcmc(model, data, 1.0, replace(mcmc, seed=experiments.mcmc_seed(args.seed, 0, 1)))
        tn = empirical_loss(dr_unit)
        pairs = [
            ("wbic(beta0=1)", wbic(dr_w), est.wbic_by_beta0[1.0], chain_se(dr_w, wbic)),
            ("lambda_i", lambda_imai(dr_w), est.lambda_i, chain_se(dr_w, lambda_imai)),
            (
                "lambda_t",
                lambda_tn(dr_w, tn),
                est.lambda_t,
                chain_se(dr_w, wbic) / logn,
            ),
        ]
        for name, got, want, se in pairs:
            checks.append(
                {
                    "model": model_id,
                    "check": name,
                    "mcmc": got,
                    "oracle": want,
                    "mc_se": se,
                    "pass": bool(abs(got - want) <= 3.0 * se),
                }
            )

    ok = all(c["pass"] for c in checks)
    _print_json({"n": args.n, "seed": args.seed, "checks": checks, "pass": ok})
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# plot


def _cmd_plot(args) -> int:
    try:
        with open(args.csv) as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except FileNotFoundError:
        raise UsageError(f"CSV not found: {args.csv}") from None
    if len(rows) < 2 or not rows[0]:
        raise UsageError(f"CSV {args.csv} has no data rows")
    header, data_rows = rows[0], rows[1:]

    def col_values(name):
        idx = header.index(name)
        vals = []
        for row in data_rows:
            cell = row[idx] if idx < len(row) else ""
            if cell == "":
                return None
            try:
                vals.append(float(cell))
            except ValueError:
                return None
        return vals

    x_col = args.x or header[0]
    if x_col not in header:
        raise UsageError(f"no column {x_col!r} in {args.csv}")
    xs = col_values(x_col)
    if xs is None:
        raise UsageError(f"column {x_col!r} is not fully numeric")
    if args.y:
        y_cols = [c for c in args.y.split(",") if c]
        for c in y_cols:
            if c not in header:
                raise UsageError(f"no column {c!r} in {args.csv}")
    else:
        y_cols = [c for c in header if c != x_col and col_values(c) is not None]
    if not y_cols:
        raise UsageError("no numeric y columns to plot")
    series = []
    for c in y_cols:
        ys = col_values(c)
        if ys is None:
            raise UsageError(f"column {c!r} is not fully numeric")
        series.append((c, xs, ys))
    svg = svgplot.render_line_plot(
        series,
        title=args.title or "",
        xlabel=args.xlabel or x_col,
        ylabel=args.ylabel or "",
        hline=args.hline,
        hline_label=args.hline_label or ("" if args.hline is None else f"{args.hline:g}"),
    )
    with open(args.svg, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.svg}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcest",
        description="Learning-coefficient estimation from tempered posteriors",
    )
    parser.add_argument("--version", action="version", version=f"lcest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="all estimators for one dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--true", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", default="1,1.5;1,3;1,5", help="beta0 pairs 'B1,B2;B1,B2'")
    p.add_argument("--oracle", action="store_true", help="quadrature instead of MCMC (dim <= 2)")
    _add_mcmc_args(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("experiment", help="replicated study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (overrides config)")
    p.add_argument("--out", default=None, help="output directory (default $LCEST_OUTPUT_DIR or ./lcest-out)")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sweep-beta-gap", help="two-temperature estimator vs gap size")
    p.add_argument("--model", required=True)
    p.add_argument("--true", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--gaps", default="0.05,0.15,0.5,2,20,150",
                   help="raw inverse-temperature gaps beta_2 - beta_1, comma-separated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    _add_mcmc_args(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("outlier-study", help="estimator sensitivity to injected outlier draws")
    p.add_argument("--model", required=True)
    p.add_argument("--true", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--deltas", default="0,5,10,20,40,80")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_mcmc_args(p)
    p.set_defaults(func=_cmd_outlier)

    p = sub.add_parser("oracle-check", help="MCMC route vs quadrature route on 1-d models")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    _add_mcmc_args(p)
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("plot", help="render a curve CSV to a deterministic SVG")
    p.add_argument("csv")
    p.add_argument("svg")
    p.add_argument("--x", default=None)
    p.add_argument("--y", default=None, help="comma-separated y columns")
    p.add_argument("--hline", type=float, default=None)
    p.add_argument("--hline-label", default=None, dest="hline_label")
    p.add_argument("--title", default=None)
    p.add_argument("--xlabel", default=None)
    p.add_argument("--ylabel", default=None)
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, SamplerError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
