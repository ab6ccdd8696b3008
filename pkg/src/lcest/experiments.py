"""Replicated estimation experiments: seeded datasets, a worker pool, and
deterministic summary tables.

Replicate r draws its dataset with seed = base_seed + r; every MCMC run inside
a replicate gets its own seed derived through SeedSequence([base_seed, r,
run_index]).  Results are keyed and ordered by replicate index, so the output
bytes do not depend on the worker count.  Replicate statistics use population
variance (ddof=0), which makes MSE = bias^2 + variance an exact identity.

Wall-clock timings never enter summary/table/records files; they go only into
manifest.json, the one output documented as non-reproducible.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .estimators import (
    EstimateRecord,
    empirical_loss,
    inject_outliers,
    lambda_imai,
    lambda_tn,
    lambda_wbic,
    pair_label,
    wbic,
)
from .models import get_model, get_true, sample_true
from .sampler import McmcConfig, run_mcmc

DEFAULT_PAIRS: Tuple[Tuple[float, float], ...] = ((1.0, 1.5), (1.0, 3.0), (1.0, 5.0))


@dataclass
class ExperimentConfig:
    """Declarative description of one replicated experiment."""

    model: str
    true: str
    sizes: Tuple[int, ...]
    replicates: int
    seed: int = 0
    beta0_pairs: Tuple[Tuple[float, float], ...] = DEFAULT_PAIRS
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    jobs: int = 1

    def validate(self) -> None:
        get_model(self.model)
        get_true(self.true)
        if not self.sizes:
            raise ValueError("sizes must name at least one sample size")
        if any(n < 2 for n in self.sizes):
            raise ValueError("sample sizes must be >= 2 (log n must be positive)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.beta0_pairs:
            raise ValueError("need at least one beta0 pair")
        for b1, b2 in self.beta0_pairs:
            if b1 <= 0 or b2 <= 0 or b1 == b2:
                raise ValueError(f"bad beta0 pair ({b1:g}, {b2:g})")
        self.mcmc.validate()

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "true": self.true,
            "sizes": list(self.sizes),
            "replicates": self.replicates,
            "seed": self.seed,
            "beta0_pairs": [list(p) for p in self.beta0_pairs],
            "mcmc": asdict(self.mcmc),
            "jobs": self.jobs,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"model", "true", "sizes", "replicates", "seed", "beta0_pairs", "mcmc", "jobs"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        for key in ("model", "true", "sizes", "replicates"):
            if key not in d:
                raise ValueError(f"config is missing required key {key!r}")
        mcmc = McmcConfig(**d.get("mcmc", {}))
        pairs = tuple(tuple(float(x) for x in p) for p in d.get("beta0_pairs", DEFAULT_PAIRS))
        cfg = cls(
            model=d["model"],
            true=d["true"],
            sizes=tuple(int(n) for n in d["sizes"]),
            replicates=int(d["replicates"]),
            seed=int(d.get("seed", 0)),
            beta0_pairs=pairs,
            mcmc=mcmc,
            jobs=int(d.get("jobs", 1)),
        )
        cfg.validate()
        return cfg


def mcmc_seed(base_seed: int, replicate: int, run_index: int) -> int:
    """Deterministic per-run seed; distinct across (replicate, run) pairs."""
    ss = np.random.SeedSequence([base_seed, replicate, run_index])
    return int(ss.generate_state(1)[0])


def run_estimate(
    model_id: str,
    true_id: str,
    n: int,
    replicate: int,
    base_seed: int,
    beta0_pairs: Sequence[Tuple[float, float]] = DEFAULT_PAIRS,
    mcmc: Optional[McmcConfig] = None,
) -> EstimateRecord:
    """One replicate: sample a dataset, run every tempered chain, fill a record."""
    if n < 2:
        raise ValueError("n must be >= 2 so that log n > 0")
    mcmc = mcmc or McmcConfig()
    model = get_model(model_id)
    dist = get_true(true_id)
    data_seed = base_seed + replicate
    data = sample_true(dist, n, data_seed)
    logn = math.log(n)

    beta0s = sorted({b for pair in beta0_pairs for b in pair} | {1.0})
    draws_by_beta0 = {}
    acc_lo, acc_hi = math.inf, -math.inf
    for i, b0 in enumerate(beta0s):
        cfg = replace(mcmc, seed=mcmc_seed(base_seed, replicate, i))
        dr = run_mcmc(model, data, b0 / logn, cfg)
        draws_by_beta0[b0] = dr
        acc_lo = min(acc_lo, float(np.min(dr.diagnostics.accept_rates)))
        acc_hi = max(acc_hi, float(np.max(dr.diagnostics.accept_rates)))

    cfg1 = replace(mcmc, seed=mcmc_seed(base_seed, replicate, len(beta0s)))
    dr_unit = run_mcmc(model, data, 1.0, cfg1)
    acc_lo = min(acc_lo, float(np.min(dr_unit.diagnostics.accept_rates)))
    acc_hi = max(acc_hi, float(np.max(dr_unit.diagnostics.accept_rates)))
    tn = empirical_loss(dr_unit)

    wbic_by_beta0 = {b0: wbic(draws_by_beta0[b0]) for b0 in beta0s}
    lam_w = {
        (b1, b2): lambda_wbic(draws_by_beta0[b1], draws_by_beta0[b2]) for b1, b2 in beta0_pairs
    }
    return EstimateRecord(
        model=model_id,
        true=true_id,
        n=n,
        replicate=replicate,
        data_seed=data_seed,
        wbic_by_beta0=wbic_by_beta0,
        lambda_w=lam_w,
        lambda_i=lambda_imai(draws_by_beta0[1.0]),
        n_times_tn=n * tn,
        lambda_t=lambda_tn(draws_by_beta0[1.0], tn),
        min_accept_rate=acc_lo,
        max_accept_rate=acc_hi,
    )


# ---------------------------------------------------------------------------
# Worker pool


def _replicate_worker(payload: dict) -> dict:
    """Top-level so ProcessPoolExecutor can pickle it; returns a JSON-safe dict."""
    try:
        rec = run_estimate(
            model_id=payload["model"],
            true_id=payload["true"],
            n=payload["n"],
            replicate=payload["replicate"],
            base_seed=payload["seed"],
            beta0_pairs=[tuple(p) for p in payload["beta0_pairs"]],
            mcmc=McmcConfig(**payload["mcmc"]),
        )
        return {"n": payload["n"], "replicate": payload["replicate"], "ok": rec.to_json_dict()}
    except Exception as exc:  # noqa: BLE001 - a failed replicate must not kill the study
        return {
            "n": payload["n"],
            "replicate": payload["replicate"],
            "error": f"{type(exc).__name__}: {exc}",
        }


def run_replicates(cfg: ExperimentConfig):
    """All (size, replicate) jobs; returns (records, failures) sorted by key.

    The records that come back are identical whatever `jobs` is; only wall
    time changes.
    """
    cfg.validate()
    payloads = []
    for n in cfg.sizes:
        for r in range(cfg.replicates):
            payloads.append(
                {
                    "model": cfg.model,
                    "true": cfg.true,
                    "n": n,
                    "replicate": r,
                    "seed": cfg.seed,
                    "beta0_pairs": [list(p) for p in cfg.beta0_pairs],
                    "mcmc": asdict(cfg.mcmc),
                }
            )
    if cfg.jobs == 1:
        raw = [_replicate_worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            raw = list(pool.map(_replicate_worker, payloads))
    raw.sort(key=lambda d: (d["n"], d["replicate"]))
    records = [EstimateRecord.from_json_dict(d["ok"]) for d in raw if "ok" in d]
    failures = [
        {"n": d["n"], "replicate": d["replicate"], "error": d["error"]}
        for d in raw
        if "error" in d
    ]
    return records, failures


# ---------------------------------------------------------------------------
# Aggregation


def _pop_stats(values: np.ndarray, true_lambda: Optional[float]) -> dict:
    out = {
        "mean": float(np.mean(values)),
        "variance": float(np.var(values)),
    }
    if true_lambda is not None:
        out["bias"] = out["mean"] - true_lambda
        out["mse"] = float(np.mean((values - true_lambda) ** 2))
    return out


def estimator_labels(pairs: Sequence[Tuple[float, float]]) -> List[str]:
    return [f"lambda_w({pair_label(p)})" for p in pairs] + ["lambda_i", "lambda_t"]


def _estimator_values(records: List[EstimateRecord], pairs) -> Dict[str, np.ndarray]:
    cols: Dict[str, np.ndarray] = {}
    for p in pairs:
        cols[f"lambda_w({pair_label(p)})"] = np.array([r.lambda_w[p] for r in records])
    cols["lambda_i"] = np.array([r.lambda_i for r in records])
    cols["lambda_t"] = np.array([r.lambda_t for r in records])
    return cols


def variance_decomposition(records: List[EstimateRecord], pairs, n: int) -> Dict[str, dict]:
    """Split each replicate variance into numerator / temperature denominator.

    numerator = Var over replicates of the WBIC difference (or WBIC - n T_n);
    denominator = (log n)^2 (1/b1 - 1/b2)^2  (or (log n)^2 for the T_n route);
    the ratio must reproduce the direct estimator variance.
    """
    logn = math.log(n)
    out = {}
    for b1, b2 in pairs:
        diffs = np.array([r.wbic_by_beta0[b1] - r.wbic_by_beta0[b2] for r in records])
        direct = np.array([r.lambda_w[(b1, b2)] for r in records])
        denom = (logn * (1.0 / b1 - 1.0 / b2)) ** 2
        out[f"lambda_w({pair_label((b1, b2))})"] = {
            "numerator": float(np.var(diffs)),
            "denominator": denom,
            "ratio": float(np.var(diffs)) / denom,
            "direct_variance": float(np.var(direct)),
        }
    diffs = np.array([r.wbic_by_beta0[1.0] - r.n_times_tn for r in records])
    direct = np.array([r.lambda_t for r in records])
    out["lambda_t"] = {
        "numerator": float(np.var(diffs)),
        "denominator": logn * logn,
        "ratio": float(np.var(diffs)) / (logn * logn),
        "direct_variance": float(np.var(direct)),
    }
    return out


def summarize(cfg: ExperimentConfig, records: List[EstimateRecord], failures: List[dict]) -> dict:
    """Deterministic experiment summary (no wall-clock content)."""
    model = get_model(cfg.model)
    dist = get_true(cfg.true)
    true_lambda = model.true_lambda_for(dist)
    by_n: Dict[int, dict] = {}
    for n in cfg.sizes:
        group = [r for r in records if r.n == n]
        if not group:
            by_n[n] = {"replicates_completed": 0}
            continue
        cols = _estimator_values(group, cfg.beta0_pairs)
        stats = {label: _pop_stats(vals, true_lambda) for label, vals in cols.items()}
        wbic_vars = {
            repr(b0): float(np.var(np.array([r.wbic_by_beta0[b0] for r in group])))
            for b0 in sorted(group[0].wbic_by_beta0)
        }
        by_n[n] = {
            "replicates_completed": len(group),
            "estimators": stats,
            "decomposition": variance_decomposition(group, cfg.beta0_pairs, n),
            "variance_of_n_times_tn": float(np.var(np.array([r.n_times_tn for r in group]))),
            "variance_of_wbic_by_beta0": wbic_vars,
        }
    return {
        "tool_version": __version__,
        "model": cfg.model,
        "true": cfg.true,
        "true_lambda": true_lambda,
        "sizes": list(cfg.sizes),
        "replicates_requested": cfg.replicates,
        "replicates_failed": len(failures),
        "failures": failures,
        "seed": cfg.seed,
        "beta0_pairs": [list(p) for p in cfg.beta0_pairs],
        "mcmc": asdict(cfg.mcmc),
        "variance_convention": "population",
        "by_n": {str(n): by_n[n] for n in cfg.sizes},
    }


# ---------------------------------------------------------------------------
# Beta-gap sweep


def beta_gap_sweep(
    model_id: str,
    true_id: str,
    n: int,
    replicates: int,
    gaps: Sequence[float],
    seed: int = 0,
    mcmc: Optional[McmcConfig] = None,
    jobs: int = 1,
) -> dict:
    """Two-temperature estimator at beta_1 = 1/log n, beta_2 = beta_1 + gap.

    Gaps are in raw inverse-temperature units (the pair (1, 1 + gap*log n)
    on the beta0 scale).  Shrinking the gap inflates the variance because
    the 1/beta_1 - 1/beta_2 denominator vanishes; the sweep quantifies the
    resulting bias/variance trade-off on one seed.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    gaps = sorted(float(g) for g in gaps)
    if not gaps or gaps[0] <= 0:
        raise ValueError("gaps must be positive")
    mcmc = mcmc or McmcConfig()
    mcmc.validate()
    logn = math.log(n)
    pairs = tuple((1.0, 1.0 + g * logn) for g in gaps)
    cfg = ExperimentConfig(
        model=model_id,
        true=true_id,
        sizes=(n,),
        replicates=replicates,
        seed=seed,
        beta0_pairs=pairs,
        mcmc=mcmc,
        jobs=jobs,
    )
    records, failures = run_replicates(cfg)
    model = get_model(model_id)
    true_lambda = model.true_lambda_for(get_true(true_id))
    rows = []
    for g, pair in zip(gaps, pairs):
        vals = np.array([r.lambda_w[pair] for r in records])
        row = {
            "gap": g,
            "beta0_hi": pair[1],
            "mean": float(np.mean(vals)),
            "variance": float(np.var(vals)),
        }
        if true_lambda is not None:
            row["bias"] = row["mean"] - true_lambda
        rows.append(row)
    return {
        "tool_version": __version__,
        "model": model_id,
        "true": true_id,
        "true_lambda": true_lambda,
        "n": n,
        "replicates_requested": replicates,
        "replicates_failed": len(failures),
        "failures": failures,
        "seed": seed,
        "mcmc": asdict(mcmc),
        "variance_convention": "population",
        "rows": rows,
    }


# ---------------------------------------------------------------------------
# Outlier-contamination study


def outlier_study(
    model_id: str,
    true_id: str,
    n: int,
    deltas: Sequence[float],
    count: int = 50,
    seed: int = 0,
    mcmc: Optional[McmcConfig] = None,
) -> dict:
    """Sensitivity of the estimators to low-likelihood draws injected into the
    tempered run (copies of the last retained draw, total log-lik lowered by
    delta each).

    The variance estimator reacts quadratically in delta, the functional-
    variance estimator exactly linearly with slope count / ((K+count) log n);
    the returned baseline statistics let both be verified in closed form.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if count < 1:
        raise ValueError("count must be >= 1")
    deltas = [float(d) for d in deltas]
    if not deltas or any(d < 0 for d in deltas):
        raise ValueError("deltas must be non-negative")
    if 0.0 not in deltas:
        deltas = [0.0] + deltas
    deltas = sorted(set(deltas))
    mcmc = mcmc or McmcConfig()
    mcmc.validate()
    model = get_model(model_id)
    dist = get_true(true_id)
    data = sample_true(dist, n, seed)
    logn = math.log(n)

    dr_w = run_mcmc(model, data, 1.0 / logn, replace(mcmc, seed=mcmc_seed(seed, 0, 0)))
    dr_unit = run_mcmc(model, data, 1.0, replace(mcmc, seed=mcmc_seed(seed, 0, 1)))
    tn = empirical_loss(dr_unit)

    rows = []
    for d in deltas:
        inj = inject_outliers(dr_w, count, d)
        rows.append(
            {
                "delta": d,
                "lambda_i": lambda_imai(inj),
                "lambda_t": lambda_tn(inj, tn),
            }
        )
    base_i = rows[0]["lambda_i"]
    base_t = rows[0]["lambda_t"]
    for row in rows:
        row["dev_i"] = row["lambda_i"] - base_i
        row["dev_t"] = row["lambda_t"] - base_t

    dvals = np.array([row["delta"] for row in rows])
    dev_i = np.array([row["dev_i"] for row in rows])
    lin_res = _poly_ss(dvals, dev_i, 1)
    quad_res = _poly_ss(dvals, dev_i, 2)

    totals = dr_w.total_loglik
    return {
        "tool_version": __version__,
        "model": model_id,
        "true": true_id,
        "n": n,
        "seed": seed,
        "count": count,
        "mcmc": asdict(mcmc),
        "baseline": {
            "K": int(dr_w.K),
            "beta": dr_w.beta,
            "t_last": float(totals[-1]),
            "mean_totals": float(np.mean(totals)),
            "var_totals": float(np.var(totals)),
            "wbic": wbic(dr_w),
            "n_times_tn": n * tn,
            "lambda_i": float(lambda_imai(dr_w)),
            "lambda_t": float(lambda_tn(dr_w, tn)),
        },
        "fit_dev_i": {
            "linear_ss": lin_res,
            "quadratic_ss": quad_res,
            "ss_ratio": quad_res / lin_res if lin_res > 0 else math.nan,
        },
        "lambda_t_slope_closed_form": count / ((dr_w.K + count) * logn),
        "rows": rows,
    }


def _poly_ss(x: np.ndarray, y: np.ndarray, deg: int) -> float:
    """Least-squares residual sum of squares of a degree-`deg` polynomial fit."""
    coef = np.polynomial.polynomial.polyfit(x, y, deg)
    resid = y - np.polynomial.polynomial.polyval(x, coef)
    return float(np.dot(resid, resid))


# ---------------------------------------------------------------------------
# Deterministic writers


def fmt_float(x) -> str:
    """Canonical %.9g float formatting for every CSV cell."""
    return "%.9g" % float(x)


def write_json(obj: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_records_jsonl(records: List[EstimateRecord], path: str) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True))
            fh.write("\n")


def write_table1(summary: dict, n: int, path: str) -> None:
    """Per-estimator mean/bias/variance/MSE at one sample size."""
    stats = summary["by_n"][str(n)]["estimators"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "mean", "bias", "variance", "mse"])
        for label in sorted(stats):
            s = stats[label]
            w.writerow(
                [
                    label,
                    fmt_float(s["mean"]),
                    fmt_float(s["bias"]) if "bias" in s else "",
                    fmt_float(s["variance"]),
                    fmt_float(s["mse"]) if "mse" in s else "",
                ]
            )


def write_table2(summary: dict, n: int, path: str) -> None:
    """Replicate variances of the raw ingredients (n T_n and each WBIC)."""
    group = summary["by_n"][str(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "variance"])
        w.writerow(["n_times_tn", fmt_float(group["variance_of_n_times_tn"])])
        for b0, v in sorted(group["variance_of_wbic_by_beta0"].items(), key=lambda kv: float(kv[0])):
            w.writerow([f"wbic({b0})", fmt_float(v)])


def write_table3(summary: dict, n: int, path: str) -> None:
    """Variance decomposition: numerator, denominator, and their ratio."""
    rows = summary["by_n"][str(n)]["decomposition"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "numerator", "denominator", "ratio"])
        for label in sorted(rows):
            r = rows[label]
            w.writerow(
                [
                    label,
                    fmt_float(r["numerator"]),
                    fmt_float(r["denominator"]),
                    fmt_float(r["ratio"]),
                ]
            )


def write_curve_csv(path: str, header: List[str], rows: List[dict]) -> None:
    """Generic curve table; every numeric cell goes through fmt_float."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(row[h]) if isinstance(row[h], (int, float)) else row[h] for h in header])


def write_consistency_curve(summary: dict, path: str) -> None:
    """Mean of each estimator against n (only useful with several sizes)."""
    sizes = summary["sizes"]
    labels = None
    rows = []
    for n in sizes:
        group = summary["by_n"][str(n)]
        if "estimators" not in group:
            continue
        if labels is None:
            labels = sorted(group["estimators"])
        row = {"n": n}
        for label in labels:
            row[label] = group["estimators"][label]["mean"]
        rows.append(row)
    if labels is None:
        raise ValueError("no completed replicates; nothing to write")
    write_curve_csv(path, ["n"] + labels, rows)
