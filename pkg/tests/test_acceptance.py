"""Acceptance criteria, one test per criterion.

Each test prints a single [PASS]/[FAIL] line (visible with ``pytest -s``)
and enforces the criterion's stated tolerance. Statistical criteria use
fixed seeds so the suite is reproducible run to run.
"""

import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from surgflow.cli import run
from surgflow.core import Event, KinematicsStream, LabelStream, Segment
from surgflow.evaluation import (
    REGIME_LONGEST,
    build_study,
    jaccard_index,
    mcnemar,
    pearson,
    prediction_segments,
    vectors_to_table,
)
from surgflow.metrics import compute_event_metric, compute_kinematic_metric, compute_metrics, default_registry
from surgflow.postprocess import FilterConfig, median_filter
from surgflow.synth import NoiseConfig, SynthConfig, generate_procedure, perturb_predictions

from . import reference
from .conftest import make_track

REG = default_registry()

SMALL = dict(n_tasks=12, task_duration_s=(60.0, 300.0), gap_duration_s=(0.0, 30.0),
             kinematics_rate_hz=10.0)


def _criterion(name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. Perfect-prediction fixpoint (CLI end to end), runtime < 60 s
# ---------------------------------------------------------------------------

def test_perfect_prediction_fixpoint(tmp_path):
    t0 = time.time()
    data = tmp_path / "data"
    pred = tmp_path / "pred"
    report_dir = tmp_path / "report"
    assert run(["generate", "--out", str(data), "--seed", "100", "--n", "20",
                "--task-duration", "60", "300", "--gap-duration", "0", "30",
                "--kin-rate", "10"]) == 0
    assert run(["perturb", "--data", str(data), "--seed", "1"]) == 0
    assert run(["postprocess", "--data", str(data), "--window", "1",
                "--out", str(pred)]) == 0
    assert run(["evaluate", "--data", str(data), "--pred", str(pred),
                "--regime", "both", "--out", str(report_dir)]) == 0
    elapsed = time.time() - t0
    report = json.loads((report_dir / "report.json").read_text())

    ok = report["jaccard"]["mean"] == 1.0 and report["jaccard"]["n"] == 20
    for entry in report["boundary_errors"]["per_task"].values():
        ok = ok and entry["median_abs_begin_s"] == 0.0
        ok = ok and entry["median_abs_end_s"] == 0.0
        ok = ok and entry["missing"] == 0
    n_defined = 0
    for key in ("correlations_longest", "correlations_all"):
        for row in report[key]["per_metric"]:
            if row["defined"]:
                n_defined += 1
                ok = ok and abs(row["rho"] - 1.0) <= 1e-12
    ok = ok and n_defined > 0
    for regime_key in ("longest", "all"):
        for q in report["quartile_agreement"][regime_key]["per_metric"]:
            ok = ok and q["fraction"] == 1.0
    ok = ok and elapsed < 60.0
    _criterion(
        "perfect-prediction fixpoint",
        ok,
        f"jaccard {report['jaccard']['mean']}, {n_defined} defined rho, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. Statistical-oracle equivalence on 1000 random inputs each
# ---------------------------------------------------------------------------

def test_statistical_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst_rho = worst_p = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 250))
        x = rng.normal(size=n)
        y = rng.normal(size=n) + rng.uniform(-2.0, 2.0) * x
        rho, p = pearson(x, y)
        ref_rho, ref_p = reference.pearson_reference(x, y)
        worst_rho = max(worst_rho, abs(rho - ref_rho) / max(abs(ref_rho), 1e-12))
        worst_p = max(worst_p, abs(p - ref_p) / max(ref_p, 1e-300))
    worst_mc = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 800))
        a = rng.random(n) < rng.random()
        b = rng.random(n) < rng.random()
        chi2, p = mcnemar(a, b)
        ref_chi2, ref_p = reference.mcnemar_reference(a, b)
        worst_mc = max(
            worst_mc,
            abs(chi2 - ref_chi2) / max(ref_chi2, 1e-12),
            abs(p - ref_p) / max(ref_p, 1e-300),
        )
    ok = worst_rho <= 1e-8 and worst_p <= 1e-8 and worst_mc <= 1e-8
    _criterion(
        "statistical-oracle equivalence",
        ok,
        f"worst rel err rho {worst_rho:.2e}, p {worst_p:.2e}, mcnemar {worst_mc:.2e}",
    )


# ---------------------------------------------------------------------------
# 3. Median-filter oracle: 500 random streams, exact equality; W=1 identity
# ---------------------------------------------------------------------------

def test_median_filter_oracle():
    rng = np.random.default_rng(7)
    windows = (1, 3, 31, 301)
    mismatches = 0
    for i in range(500):
        n = int(rng.integers(1, 2001))
        values = rng.integers(0, 13, n)
        stream = LabelStream(values)
        w = windows[i % len(windows)]
        out = median_filter(stream, FilterConfig(w)).labels
        if not np.array_equal(out, reference.median_filter_reference(values, w)):
            mismatches += 1
        if not np.array_equal(
            median_filter(stream, FilterConfig(1)).labels, values
        ):
            mismatches += 1
    _criterion("median-filter oracle", mismatches == 0, f"{mismatches} mismatches in 500 streams")


# ---------------------------------------------------------------------------
# 4. Metric-engine oracles on 200 random fixtures + aggregation invariants
# ---------------------------------------------------------------------------

def test_metric_engine_oracles():
    rng = np.random.default_rng(99)
    path_spec = REG.spec("path_length_psm1")
    speed_spec = REG.spec("mean_speed_psm1")
    count_spec = REG.spec("count_energy_on")
    worst = 0.0
    checked = 0
    for _ in range(200):
        n = int(rng.integers(50, 1500))
        rate = float(rng.choice([10.0, 25.0, 50.0]))
        t = np.arange(n) / rate
        pos = np.cumsum(rng.normal(0, 0.002, (n, 3)), axis=0)
        track = make_track(t, position=pos)
        kin = KinematicsStream({"PSM1": track, "PSM2": track})
        t_max = float(t[-1])
        b = float(rng.uniform(0, t_max * 0.4))
        e = float(rng.uniform(b + 2.0 / rate, t_max))
        seg = Segment(1, b, e)

        value = compute_kinematic_metric(path_spec, kin, [seg])
        ref = reference.path_length_reference(t, pos, [(b, e)])
        if value is not None and ref is not None:
            worst = max(worst, abs(value - ref) / max(abs(ref), 1e-300))
            checked += 1

        times = np.sort(rng.uniform(0, t_max, int(rng.integers(0, 60))))
        events = tuple(Event(float(ts), "energy_on") for ts in times)
        cval = compute_event_metric(count_spec, events, [seg])
        cref = reference.event_count_reference(times, [(b, e)])
        worst = max(worst, abs(cval - cref))

        # Additivity at a sample instant inside the segment.
        i0 = int(np.searchsorted(t, b, "left"))
        j = int(np.searchsorted(t, e, "right")) - 1
        if j - i0 >= 2:
            mid = float(t[int(rng.integers(i0 + 1, j))])
            left = compute_kinematic_metric(path_spec, kin, [Segment(1, b, mid)])
            right = compute_kinematic_metric(path_spec, kin, [Segment(1, mid, e)])
            whole = compute_kinematic_metric(path_spec, kin, [seg])
            if left is not None and right is not None:
                worst = max(worst, abs(left + right - whole) / max(abs(whole), 1e-300))
            # Duration-weighted mean of speeds == total path / total time.
            split_speed = compute_kinematic_metric(
                speed_spec, kin, [Segment(1, b, mid), Segment(1, mid, e)]
            )
            whole_speed = compute_kinematic_metric(speed_spec, kin, [seg])
            worst = max(
                worst, abs(split_speed - whole_speed) / max(abs(whole_speed), 1e-300)
            )
    ok = worst <= 1e-9 and checked >= 150
    _criterion("metric-engine oracles", ok, f"worst rel err {worst:.2e} on 200 fixtures")


# ---------------------------------------------------------------------------
# 5+7. Degradation monotonicity (<10 min) and quartile-band behavior
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def degradation_study():
    t0 = time.time()
    records = [generate_procedure(SynthConfig(seed=s, **SMALL)) for s in range(100)]
    gt_tables = {
        r.procedure_id: vectors_to_table(compute_metrics(REG, r, r.ground_truth))
        for r in records
    }

    jaccard_means = []
    for rate in (0.0, 1.0, 2.0, 4.0):
        vals = []
        for i, r in enumerate(records):
            noisy = perturb_predictions(
                r.labels_gt, NoiseConfig(spike_rate_per_min=rate, seed=5000 + i)
            )
            vals.append(jaccard_index(noisy, r.labels_gt).mean)
        jaccard_means.append(float(np.mean(vals)))

    rho_means = []
    band_entries = []
    for level in (0.0, 15.0, 60.0, 240.0):
        pred_tables = {}
        for i, r in enumerate(records):
            noisy = perturb_predictions(
                r.labels_gt, NoiseConfig(boundary_jitter_std_s=level, seed=9000 + i)
            )
            segset = prediction_segments(noisy, REGIME_LONGEST)
            pred_tables[r.procedure_id] = vectors_to_table(
                compute_metrics(REG, r, segset)
            )
        study = build_study(gt_tables, pred_tables, REG, REGIME_LONGEST)
        rhos = [res.rho for res in study.results if res.defined]
        rho_means.append(float(np.mean(rhos)))
        rho_by_key = {(r.task, r.metric_name): r.rho for r in study.results if r.defined}
        for q in study.quartiles:
            rho = rho_by_key.get((q.task, q.metric_name))
            if rho is not None and 0.2 <= rho < 0.6:
                band_entries.append(q.fraction)
    return {
        "jaccard_means": jaccard_means,
        "rho_means": rho_means,
        "band_entries": band_entries,
        "elapsed": time.time() - t0,
    }


def test_degradation_monotonicity(degradation_study):
    jm = degradation_study["jaccard_means"]
    rm = degradation_study["rho_means"]
    elapsed = degradation_study["elapsed"]
    ok = all(a >= b for a, b in zip(jm, jm[1:]))
    ok = ok and all(a >= b for a, b in zip(rm, rm[1:]))
    ok = ok and elapsed < 600.0
    _criterion(
        "degradation monotonicity",
        ok,
        f"jaccard {['%.3f' % v for v in jm]}, rho {['%.3f' % v for v in rm]}, {elapsed:.0f}s",
    )


def test_quartile_band_behavior(degradation_study):
    entries = degradation_study["band_entries"]
    mean_agreement = float(np.mean(entries)) if entries else 0.0
    ok = len(entries) >= 20 and mean_agreement > 0.25
    _criterion(
        "quartile-band behavior",
        ok,
        f"mean agreement {mean_agreement:.3f} over {len(entries)} band entries (chance 0.25)",
    )


# ---------------------------------------------------------------------------
# 6. Filtering direction: post-filter Jaccard >= pre-filter on >= 95% of seeds
# ---------------------------------------------------------------------------

def test_filtering_direction():
    wins = 0
    n_seeds = 100
    for seed in range(n_seeds):
        record = generate_procedure(SynthConfig(seed=seed, kinematics_rate_hz=1.0))
        noisy = perturb_predictions(
            record.labels_gt,
            NoiseConfig(spike_rate_per_min=2.0, spike_duration_s=(3.0, 10.0),
                        seed=2000 + seed),
        )
        before = jaccard_index(noisy, record.labels_gt).mean
        filtered = median_filter(noisy, FilterConfig(301))
        after = jaccard_index(filtered, record.labels_gt).mean
        if after >= before:
            wins += 1
    _criterion(
        "filtering direction",
        wins >= 0.95 * n_seeds,
        f"filtered >= unfiltered on {wins}/{n_seeds} seeds",
    )


# ---------------------------------------------------------------------------
# 8. Pipeline determinism: byte-identical reruns
# ---------------------------------------------------------------------------

def test_pipeline_determinism(tmp_path):
    def one_run(root: Path) -> dict:
        if root.exists():
            shutil.rmtree(root)
        data = root / "data"
        pred = root / "pred"
        assert run(["generate", "--out", str(data), "--seed", "31", "--n", "6",
                    "--task-duration", "60", "300", "--gap-duration", "0", "30",
                    "--kin-rate", "10"]) == 0
        assert run(["perturb", "--data", str(data), "--jitter-std", "30",
                    "--spike-rate", "1", "--seed", "7"]) == 0
        assert run(["postprocess", "--data", str(data), "--window", "301",
                    "--out", str(pred)]) == 0
        assert run(["metrics", "--data", str(data), "--pred", str(pred),
                    "--source", "pred", "--regime", "all",
                    "--out", str(root / "metrics")]) == 0
        assert run(["evaluate", "--data", str(data), "--pred", str(pred),
                    "--regime", "both", "--out", str(root / "report")]) == 0
        return {
            str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*"))
            if p.is_file()
        }

    root = tmp_path / "pipeline"
    first = one_run(root)
    second = one_run(root)
    same_names = first.keys() == second.keys()
    diffs = [k for k in first if first[k] != second.get(k)]
    _criterion(
        "pipeline determinism",
        same_names and not diffs,
        f"{len(first)} files compared" + (f", diffs: {diffs[:3]}" if diffs else ""),
    )
