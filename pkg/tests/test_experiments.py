"""Tests for the replicate driver: seeding, parallel equivalence, summary
statistics, the variance decomposition, sweep/outlier studies, and the
deterministic writers."""

import csv
import json
import math

import numpy as np
import pytest

from lcest.estimators import EstimateRecord, pair_label
from lcest.experiments import (
    DEFAULT_PAIRS,
    ExperimentConfig,
    beta_gap_sweep,
    estimator_labels,
    fmt_float,
    mcmc_seed,
    outlier_study,
    run_estimate,
    run_replicates,
    summarize,
    variance_decomposition,
    write_consistency_curve,
    write_curve_csv,
    write_json,
    write_records_jsonl,
    write_table1,
    write_table2,
    write_table3,
)
from lcest.sampler import McmcConfig


FAST = McmcConfig(iters=400, burn_in=200, thin=1, chains=2, seed=0)


def tiny_config(**overrides) -> ExperimentConfig:
    base = dict(
        model="conjugate-normal",
        true="normal:0,1",
        sizes=(50,),
        replicates=3,
        seed=11,
        beta0_pairs=((1.0, 2.0), (1.0, 4.0)),
        mcmc=FAST,
        jobs=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# seeding


def test_mcmc_seed_is_deterministic_and_distinct():
    seen = set()
    for r in range(4):
        for run in range(4):
            s = mcmc_seed(123, r, run)
            assert s == mcmc_seed(123, r, run)
            seen.add(s)
    assert len(seen) == 16
    assert mcmc_seed(123, 0, 0) != mcmc_seed(124, 0, 0)


def test_run_estimate_record_shape():
    rec = run_estimate("conjugate-normal", "normal:0,1", 50, 2, 11, [(1.0, 2.0), (1.0, 4.0)], FAST)
    assert rec.model == "conjugate-normal"
    assert rec.n == 50 and rec.replicate == 2
    # one WBIC per distinct beta0, always including beta0 = 1
    assert sorted(rec.wbic_by_beta0) == [1.0, 2.0, 4.0]
    assert sorted(rec.lambda_w) == [(1.0, 2.0), (1.0, 4.0)]
    assert rec.lambda_i > 0
    assert 0.0 < rec.min_accept_rate <= rec.max_accept_rate <= 1.0
    # WBIC decreasing in beta0 on a healthy run
    assert rec.wbic_by_beta0[1.0] > rec.wbic_by_beta0[4.0]


def test_run_estimate_reproducible():
    a = run_estimate("conjugate-normal", "normal:0,1", 50, 0, 7, [(1.0, 2.0)], FAST)
    b = run_estimate("conjugate-normal", "normal:0,1", 50, 0, 7, [(1.0, 2.0)], FAST)
    assert a.to_json_dict() == b.to_json_dict()


# ---------------------------------------------------------------------------
# replicate driver


def test_run_replicates_parallel_matches_serial():
    cfg1 = tiny_config(jobs=1)
    cfg2 = tiny_config(jobs=2)
    rec1, fail1 = run_replicates(cfg1)
    rec2, fail2 = run_replicates(cfg2)
    assert fail1 == [] and fail2 == []
    assert [r.to_json_dict() for r in rec1] == [r.to_json_dict() for r in rec2]


def test_run_replicates_sorted_by_size_then_replicate():
    cfg = tiny_config(sizes=(60, 40), replicates=2)
    records, failures = run_replicates(cfg)
    assert failures == []
    assert [(r.n, r.replicate) for r in records] == [(40, 0), (40, 1), (60, 0), (60, 1)]


def test_run_replicates_counts_failures():
    # count data fed to a real-valued-only pipeline: every replicate must fail,
    # be reported, and leave zero records
    cfg = tiny_config(model="poisson-mix:2", true="normal:0,1", replicates=2)
    records, failures = run_replicates(cfg)
    assert records == []
    assert len(failures) == 2
    for f in failures:
        assert f["n"] == 50 and "error" in f
    summary = summarize(cfg, records, failures)
    assert summary["replicates_failed"] == 2
    assert summary["by_n"]["50"] == {"replicates_completed": 0}


def test_config_json_round_trip():
    cfg = tiny_config()
    back = ExperimentConfig.from_json_dict(cfg.to_json_dict())
    assert back.to_json_dict() == cfg.to_json_dict()


def test_config_rejects_unknown_and_missing_keys():
    cfg = tiny_config()
    d = cfg.to_json_dict()
    d["surprise"] = 1
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_json_dict(d)
    with pytest.raises(ValueError, match="missing required key"):
        ExperimentConfig.from_json_dict({"model": "example1", "true": "normal:0,1", "sizes": [50]})


def test_config_validate_rejects_bad_fields():
    with pytest.raises(ValueError):
        tiny_config(sizes=()).validate()
    with pytest.raises(ValueError):
        tiny_config(sizes=(1,)).validate()
    with pytest.raises(ValueError):
        tiny_config(replicates=0).validate()
    with pytest.raises(ValueError):
        tiny_config(jobs=0).validate()
    with pytest.raises(ValueError):
        tiny_config(beta0_pairs=((2.0, 2.0),)).validate()


# ---------------------------------------------------------------------------
# summary statistics


@pytest.fixture(scope="module")
def small_run():
    cfg = tiny_config(replicates=6)
    records, failures = run_replicates(cfg)
    assert failures == []
    return cfg, records


def test_summarize_population_moments(small_run):
    cfg, records = small_run
    summary = summarize(cfg, records, [])
    assert summary["variance_convention"] == "population"
    group = summary["by_n"]["50"]
    assert group["replicates_completed"] == 6
    labels = estimator_labels(cfg.beta0_pairs)
    assert sorted(group["estimators"]) == sorted(labels)
    lam = np.array([r.lambda_i for r in records])
    st = group["estimators"]["lambda_i"]
    assert st["mean"] == pytest.approx(lam.mean(), abs=1e-12)
    assert st["variance"] == pytest.approx(lam.var(ddof=0), abs=1e-12)
    # true lambda known here, so bias and MSE are present and consistent
    assert st["bias"] == pytest.approx(st["mean"] - 0.5, abs=1e-12)
    for s in group["estimators"].values():
        assert s["mse"] == pytest.approx(s["bias"] ** 2 + s["variance"], abs=1e-12)


def test_variance_decomposition_identity(small_run):
    cfg, records = small_run
    decomp = variance_decomposition(records, cfg.beta0_pairs, 50)
    for row in decomp.values():
        assert row["ratio"] == pytest.approx(row["direct_variance"], abs=1e-9)
        assert row["denominator"] > 0


def test_variance_decomposition_denominators_at_n_750():
    # closed form: (log n)^2 (1/b01 - 1/b02)^2 at n = 750, and (log n)^2 for
    # the empirical-loss estimator
    records = []
    pairs = ((1.0, 1.5), (1.0, 3.0), (1.0, 5.0))
    for i in range(2):
        records.append(
            EstimateRecord(
                model="m",
                true="t",
                n=750,
                replicate=i,
                data_seed=i,
                wbic_by_beta0={1.0: 10.0 + i, 1.5: 9.0, 3.0: 8.0, 5.0: 7.0},
                lambda_w={p: 0.5 for p in pairs},
                lambda_i=0.5,
                n_times_tn=5.0 + i,
                lambda_t=0.5,
                min_accept_rate=0.3,
                max_accept_rate=0.3,
            )
        )
    decomp = variance_decomposition(records, pairs, 750)
    assert decomp["lambda_w(1,1.5)"]["denominator"] == pytest.approx(4.86949, abs=1e-5)
    assert decomp["lambda_w(1,3)"]["denominator"] == pytest.approx(19.47794, abs=1e-5)
    assert decomp["lambda_w(1,5)"]["denominator"] == pytest.approx(28.04824, abs=1e-5)
    assert decomp["lambda_t"]["denominator"] == pytest.approx(43.82537, abs=1e-5)


# ---------------------------------------------------------------------------
# studies


def test_beta_gap_sweep_rows():
    out = beta_gap_sweep(
        "example1",
        "normal:0,1",
        n=60,
        replicates=3,
        gaps=[2.0, 0.5],
        seed=5,
        mcmc=FAST,
    )
    rows = out["rows"]
    assert [row["gap"] for row in rows] == [0.5, 2.0]
    logn = math.log(60)
    for row in rows:
        assert row["beta0_hi"] == pytest.approx(1.0 + row["gap"] * logn, rel=1e-12)
        assert row["variance"] >= 0
        assert row["bias"] == pytest.approx(row["mean"] - 0.5, abs=1e-12)
    assert out["true_lambda"] == 0.5
    assert out["replicates_failed"] == 0


def test_beta_gap_sweep_rejects_bad_gaps():
    with pytest.raises(ValueError, match="gaps"):
        beta_gap_sweep("example1", "normal:0,1", 60, 2, [0.5, -1.0], mcmc=FAST)
    with pytest.raises(ValueError, match="gaps"):
        beta_gap_sweep("example1", "normal:0,1", 60, 2, [], mcmc=FAST)


def test_outlier_study_exact_structure():
    out = outlier_study(
        "conjugate-normal",
        "normal:0,1",
        n=80,
        deltas=[5.0, 10.0],
        count=30,
        seed=3,
        mcmc=FAST,
    )
    rows = out["rows"]
    # delta = 0 is added automatically and anchors the deviations
    assert [row["delta"] for row in rows] == [0.0, 5.0, 10.0]
    assert rows[0]["dev_i"] == 0.0 and rows[0]["dev_t"] == 0.0
    K = out["baseline"]["K"]
    slope = out["lambda_t_slope_closed_form"]
    assert slope == pytest.approx(30 / ((K + 30) * math.log(80)), rel=1e-12)
    for row in rows[1:]:
        # empirical-loss estimator moves exactly linearly in the offset
        assert row["dev_t"] == pytest.approx(slope * row["delta"], rel=1e-9)
    assert rows[2]["dev_t"] == pytest.approx(2.0 * rows[1]["dev_t"], rel=1e-9)
    # three points, degree-2 fit: residual essentially zero next to linear fit
    assert out["fit_dev_i"]["quadratic_ss"] <= 1e-16 + 1e-6 * out["fit_dev_i"]["linear_ss"]


# ---------------------------------------------------------------------------
# writers


def test_write_json_and_records_byte_identical(tmp_path, small_run):
    cfg, records = small_run
    summary = summarize(cfg, records, [])
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_json(summary, str(p1))
    write_json(summary, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    assert json.loads(p1.read_text()) == summary

    r1, r2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_records_jsonl(records, str(r1))
    write_records_jsonl(records, str(r2))
    assert r1.read_bytes() == r2.read_bytes()
    back = [EstimateRecord.from_json_dict(json.loads(line)) for line in r1.read_text().splitlines()]
    assert [b.to_json_dict() for b in back] == [r.to_json_dict() for r in records]


def test_write_tables(tmp_path, small_run):
    cfg, records = small_run
    summary = summarize(cfg, records, [])
    t1 = tmp_path / "table1.csv"
    write_table1(summary, 50, str(t1))
    lines = t1.read_text().splitlines()
    assert lines[0] == "estimator,mean,bias,variance,mse"
    assert len(lines) == 1 + len(estimator_labels(cfg.beta0_pairs))

    t2 = tmp_path / "table2.csv"
    write_table2(summary, 50, str(t2))
    lines = t2.read_text().splitlines()
    assert lines[0] == "quantity,variance"
    assert lines[1].startswith("n_times_tn,")
    assert [ln.split(",")[0] for ln in lines[2:]] == ["wbic(1.0)", "wbic(2.0)", "wbic(4.0)"]

    t3 = tmp_path / "table3.csv"
    write_table3(summary, 50, str(t3))
    assert t3.read_text().splitlines()[0] == "estimator,numerator,denominator,ratio"


def test_fmt_float_is_nine_significant_digits():
    assert fmt_float(1.0) == "1"
    assert fmt_float(math.pi) == "3.14159265"
    assert fmt_float(1.23456789012e-7) == "1.23456789e-07"


def test_write_curve_csv_formats_cells(tmp_path):
    p = tmp_path / "c.csv"
    write_curve_csv(str(p), ["x", "y"], [{"x": 1.0, "y": math.pi}, {"x": 2.0, "y": 0.25}])
    assert p.read_text().splitlines() == ["x,y", "1,3.14159265", "2,0.25"]


def test_consistency_curve_needs_records(tmp_path):
    cfg = tiny_config()
    summary = summarize(cfg, [], [])
    with pytest.raises(ValueError, match="no completed replicates"):
        write_consistency_curve(summary, str(tmp_path / "curve.csv"))


def test_consistency_curve_columns(tmp_path):
    cfg = tiny_config(sizes=(40, 60), replicates=2)
    records, failures = run_replicates(cfg)
    assert failures == []
    summary = summarize(cfg, records, failures)
    p = tmp_path / "curve.csv"
    write_consistency_curve(summary, str(p))
    with open(p, newline="") as fh:
        parsed = list(csv.reader(fh))
    assert parsed[0] == ["n"] + sorted(estimator_labels(cfg.beta0_pairs))
    assert len(parsed) == 3
    assert parsed[1][0] == "40"
    assert parsed[2][0] == "60"
