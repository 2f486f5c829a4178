"""Segmentation-model quality measures.

Conventional measures (per-task Jaccard index, task boundary errors) sit
next to the metrics-based ones: Pearson correlation between efficiency
metrics computed from predicted vs human-labeled task boundaries, with
two-tailed significance, quartile agreement, and McNemar's test between
two models' frame-level correctness.

Statistical routines are self-contained: the two-tailed Pearson p-value
is evaluated through the regularized incomplete beta function using a
modified-Lentz continued fraction, and the McNemar p-value through the
one-degree chi-square survival function. Undefined statistics (too few
pairs, zero variance) surface as explicit errors or ``defined=False``
entries, never as NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import LabelStream, N_TASKS, ProcedureRecord, SegmentSet, format_float
from .errors import ConstantSeries, LengthMismatch, TooFewPairs, ValidationError
from .metrics import (
    MetricRegistry,
    MetricVector,
    SOURCE_EVENT,
    SOURCE_KINEMATIC,
    compute_metrics,
)
from .postprocess import select_all_segments, select_longest_segments

SIGNIFICANCE_LEVEL = 0.05
DEFAULT_ERROR_THRESHOLDS_S = (60.0, 120.0, 240.0)
# Agreement-vs-correlation bands; the middle band is the moderate range
# [0.2, 0.6) highlighted by the quartile-agreement analysis.
DEFAULT_RHO_BANDS = ((-1.0, 0.2), (0.2, 0.6), (0.6, 1.0 + 1e-12))

REGIME_LONGEST = "longest"
REGIME_ALL = "all"


# ---------------------------------------------------------------------------
# Numerics: regularized incomplete beta via continued fraction
# ---------------------------------------------------------------------------

_CF_EPS = 1e-15
_CF_FPMIN = 1e-300
_CF_MAX_ITER = 500


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_FPMIN:
        d = _CF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0 and b > 0):
        raise ValidationError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_p_two_tailed(rho: float, n: int) -> float:
    """Two-tailed p for a sample correlation rho with n pairs.

    Uses t = rho*sqrt((n-2)/(1-rho^2)) with n-2 dof; the tail integral
    reduces to I_{1-rho^2}(df/2, 1/2), which avoids forming t at all.
    """
    df = n - 2
    one_minus_r2 = 1.0 - rho * rho
    if one_minus_r2 <= 0.0:
        return 0.0
    return min(1.0, regularized_incomplete_beta(df / 2.0, 0.5, one_minus_r2))


def chi2_sf_1dof(chi2: float) -> float:
    """Survival function of the chi-square distribution with one dof."""
    if chi2 <= 0.0:
        return 1.0
    return math.erfc(math.sqrt(chi2 / 2.0))


# ---------------------------------------------------------------------------
# Statistics on paired series
# ---------------------------------------------------------------------------

def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Pearson correlation with two-tailed significance.

    Raises TooFewPairs for n < 3 and ConstantSeries when either input has
    zero variance.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise LengthMismatch("paired series must be 1-D and equally long")
    n = xa.size
    if n < 3:
        raise TooFewPairs(f"need at least 3 pairs, got {n}")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise ConstantSeries("correlation undefined for a constant series")
    xm = xa - xa.mean()
    ym = ya - ya.mean()
    denom = math.sqrt(float(np.dot(xm, xm)) * float(np.dot(ym, ym)))
    if denom == 0.0:
        # Distinct values whose deviations underflow are constant in float.
        raise ConstantSeries("correlation undefined for a constant series")
    rho = float(np.dot(xm, ym)) / denom
    rho = max(-1.0, min(1.0, rho))
    return rho, student_t_p_two_tailed(rho, n)


def mcnemar(
    correct_a: Sequence[bool], correct_b: Sequence[bool]
) -> tuple[float, float]:
    """Continuity-corrected McNemar test on paired correctness flags."""
    a = np.asarray(correct_a, dtype=bool)
    b = np.asarray(correct_b, dtype=bool)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch("flag vectors must be 1-D and equally long")
    only_a = int(np.sum(a & ~b))
    only_b = int(np.sum(~a & b))
    discordant = only_a + only_b
    if discordant == 0:
        return 0.0, 1.0
    chi2 = max(0.0, abs(only_a - only_b) - 1.0) ** 2 / discordant
    return chi2, chi2_sf_1dof(chi2)


def mcnemar_counts(
    correct_a: Sequence[bool], correct_b: Sequence[bool]
) -> tuple[int, int]:
    """Discordant-pair counts (a-only-correct, b-only-correct)."""
    a = np.asarray(correct_a, dtype=bool)
    b = np.asarray(correct_b, dtype=bool)
    if a.shape != b.shape:
        raise LengthMismatch("flag vectors must be equally long")
    return int(np.sum(a & ~b)), int(np.sum(~a & b))


def _quartile_labels(values: np.ndarray) -> np.ndarray:
    """Ascending rank quartiles, ceil(4*rank/n); ties keep input order."""
    n = values.size
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(1, n + 1)
    return np.ceil(4.0 * ranks / n).astype(np.int64)


def quartile_agreement(
    pred_vals: Sequence[float], gt_vals: Sequence[float]
) -> tuple[int, float]:
    """How many paired observations fall in the same quartile of each series."""
    pa = np.asarray(pred_vals, dtype=np.float64)
    ga = np.asarray(gt_vals, dtype=np.float64)
    if pa.shape != ga.shape or pa.ndim != 1:
        raise LengthMismatch("paired series must be 1-D and equally long")
    n = pa.size
    if n < 4:
        raise TooFewPairs(f"need at least 4 pairs, got {n}")
    same = int(np.sum(_quartile_labels(pa) == _quartile_labels(ga)))
    return same, same / n


# ---------------------------------------------------------------------------
# Frame- and boundary-level accuracy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JaccardResult:
    per_task: Mapping[int, float]
    mean: float | None      # over tasks present in ground truth
    n_tasks: int


def jaccard_index(pred: LabelStream, gt: LabelStream) -> JaccardResult:
    """Per-task intersection-over-union of frame supports.

    Idle frames never form a task; the per-procedure mean covers tasks
    present in the ground truth.
    """
    if not pred.same_clock(gt):
        raise LengthMismatch("prediction and ground truth are on different clocks")
    p = pred.labels
    g = gt.labels
    per_task: dict[int, float] = {}
    gt_tasks = []
    for task in range(1, N_TASKS + 1):
        in_p = p == task
        in_g = g == task
        union = int(np.sum(in_p | in_g))
        if union == 0:
            continue
        inter = int(np.sum(in_p & in_g))
        per_task[task] = inter / union
        if in_g.any():
            gt_tasks.append(task)
    mean = (
        float(np.mean([per_task[t] for t in gt_tasks])) if gt_tasks else None
    )
    return JaccardResult(per_task=per_task, mean=mean, n_tasks=len(gt_tasks))


@dataclass(frozen=True)
class BoundaryError:
    begin_s: float
    end_s: float

    @property
    def abs_begin_s(self) -> float:
        return abs(self.begin_s)

    @property
    def abs_end_s(self) -> float:
        return abs(self.end_s)


def boundary_errors(pred: SegmentSet, gt: SegmentSet) -> dict[int, BoundaryError | None]:
    """Signed predicted-minus-labeled boundary differences per task.

    Tasks in the ground truth that the prediction never produced map to
    None so callers can report the miss instead of inventing a number.
    """
    out: dict[int, BoundaryError | None] = {}
    for task in gt.tasks():
        gsegs = gt.segments_for(task)
        g_begin, g_end = gsegs[0].begin_s, gsegs[-1].end_s
        psegs = pred.segments_for(task)
        if not psegs:
            out[task] = None
            continue
        out[task] = BoundaryError(
            begin_s=psegs[0].begin_s - g_begin, end_s=psegs[-1].end_s - g_end
        )
    return out


def threshold_buckets(
    abs_errors_s: Sequence[float],
    thresholds: Sequence[float] = DEFAULT_ERROR_THRESHOLDS_S,
) -> dict:
    """Cumulative fractions of absolute errors at each threshold."""
    errs = np.asarray(list(abs_errors_s), dtype=np.float64)
    if errs.size and errs.min() < 0:
        raise ValidationError("absolute errors must be non-negative")
    edges = sorted(thresholds)
    out: dict = {"n": int(errs.size)}
    for t in edges:
        key = f"le_{_edge_label(t)}"
        out[key] = float(np.mean(errs <= t)) if errs.size else None
    key = f"gt_{_edge_label(edges[-1])}"
    out[key] = float(np.mean(errs > edges[-1])) if errs.size else None
    return out


def _edge_label(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else format_float(t)


# ---------------------------------------------------------------------------
# Correlation study
# ---------------------------------------------------------------------------

# task -> metric name -> value (None = missing)
MetricTable = dict[int, dict[str, float | None]]


@dataclass(frozen=True)
class CorrelationResult:
    task: int
    metric_name: str
    source: str
    n_pairs: int
    excluded: int
    defined: bool
    rho: float | None = None
    p_value: float | None = None
    reason: str | None = None


@dataclass(frozen=True)
class TaskCorrelationSummary:
    task: int
    source: str          # "KIN" | "EVT"
    n_metrics: int       # defined correlations summarized
    mean_rho: float | None
    std_rho: float | None
    median_p: float | None
    significant: bool


@dataclass(frozen=True)
class QuartileResult:
    task: int
    metric_name: str
    n: int
    n_same: int
    fraction: float


@dataclass(frozen=True)
class ScatterPoint:
    task: int
    metric_name: str
    procedure_id: str
    gt_value: float
    pred_value: float


@dataclass(frozen=True)
class CorrelationStudy:
    regime: str
    n_procedures: int
    results: tuple[CorrelationResult, ...]
    summaries: tuple[TaskCorrelationSummary, ...]
    quartiles: tuple[QuartileResult, ...]
    rho_bands: tuple[dict, ...]
    scatter: tuple[ScatterPoint, ...]


def vectors_to_table(vectors: Sequence[MetricVector]) -> MetricTable:
    return {vec.task: dict(vec.values) for vec in vectors}


def prediction_segments(labels: LabelStream, regime: str) -> SegmentSet:
    if regime == REGIME_LONGEST:
        return select_longest_segments(labels)
    if regime == REGIME_ALL:
        return select_all_segments(labels)
    raise ValidationError(f"unknown regime {regime!r}")


def build_study(
    gt_tables: Mapping[str, MetricTable],
    pred_tables: Mapping[str, MetricTable],
    registry: MetricRegistry,
    regime: str,
    rho_bands: Sequence[tuple[float, float]] = DEFAULT_RHO_BANDS,
) -> CorrelationStudy:
    """Pair per-procedure metric tables and run the correlation statistics.

    Procedures are paired in ascending procedure-id order, which also
    fixes the quartile tie-break. Results are ordered by task id then
    metric name regardless of how the tables were produced.
    """
    pids = sorted(gt_tables)
    results: list[CorrelationResult] = []
    quartiles: list[QuartileResult] = []
    scatter: list[ScatterPoint] = []

    for task in range(1, N_TASKS + 1):
        present = [pid for pid in pids if task in gt_tables[pid]]
        if not present:
            continue
        for spec in registry.all_specs():
            gt_vals, pred_vals, pair_pids = [], [], []
            for pid in present:
                g = gt_tables[pid][task].get(spec.name)
                p = pred_tables.get(pid, {}).get(task, {}).get(spec.name)
                if g is None or p is None:
                    continue
                gt_vals.append(g)
                pred_vals.append(p)
                pair_pids.append(pid)
            n_pairs = len(gt_vals)
            excluded = len(present) - n_pairs
            scatter.extend(
                ScatterPoint(task, spec.name, pid, g, p)
                for pid, g, p in zip(pair_pids, gt_vals, pred_vals)
            )
            try:
                rho, p_value = pearson(gt_vals, pred_vals)
                results.append(
                    CorrelationResult(
                        task, spec.name, spec.source, n_pairs, excluded,
                        defined=True, rho=rho, p_value=p_value,
                    )
                )
            except TooFewPairs:
                results.append(
                    CorrelationResult(
                        task, spec.name, spec.source, n_pairs, excluded,
                        defined=False, reason="too_few_pairs",
                    )
                )
            except ConstantSeries:
                results.append(
                    CorrelationResult(
                        task, spec.name, spec.source, n_pairs, excluded,
                        defined=False, reason="constant_series",
                    )
                )
            if n_pairs >= 4:
                n_same, frac = quartile_agreement(pred_vals, gt_vals)
                quartiles.append(QuartileResult(task, spec.name, n_pairs, n_same, frac))

    summaries = _summarize(results)
    bands = _band_agreement(results, quartiles, rho_bands)
    return CorrelationStudy(
        regime=regime,
        n_procedures=len(pids),
        results=tuple(results),
        summaries=tuple(summaries),
        quartiles=tuple(quartiles),
        rho_bands=tuple(bands),
        scatter=tuple(scatter),
    )


def _summarize(results: Sequence[CorrelationResult]) -> list[TaskCorrelationSummary]:
    summaries = []
    tasks = sorted({r.task for r in results})
    for task in tasks:
        for source, label in ((SOURCE_EVENT, "EVT"), (SOURCE_KINEMATIC, "KIN")):
            defined = [
                r for r in results
                if r.task == task and r.source == source and r.defined
            ]
            if defined:
                rhos = np.asarray([r.rho for r in defined])
                ps = np.asarray([r.p_value for r in defined])
                median_p = float(np.median(ps))
                summaries.append(
                    TaskCorrelationSummary(
                        task=task, source=label, n_metrics=len(defined),
                        mean_rho=float(rhos.mean()), std_rho=float(rhos.std()),
                        median_p=median_p,
                        significant=bool(median_p < SIGNIFICANCE_LEVEL),
                    )
                )
            else:
                summaries.append(
                    TaskCorrelationSummary(
                        task=task, source=label, n_metrics=0,
                        mean_rho=None, std_rho=None, median_p=None,
                        significant=False,
                    )
                )
    return summaries


def _band_agreement(
    results: Sequence[CorrelationResult],
    quartiles: Sequence[QuartileResult],
    rho_bands: Sequence[tuple[float, float]],
) -> list[dict]:
    rho_by_key = {(r.task, r.metric_name): r.rho for r in results if r.defined}
    bands = []
    for lo, hi in rho_bands:
        fractions = [
            q.fraction
            for q in quartiles
            if (q.task, q.metric_name) in rho_by_key
            and lo <= rho_by_key[(q.task, q.metric_name)] < hi
        ]
        bands.append(
            {
                "rho_min": lo,
                "rho_max": hi,
                "n": len(fractions),
                "mean_quartile_agreement": (
                    float(np.mean(fractions)) if fractions else None
                ),
            }
        )
    return bands


def correlation_study(
    procedures: Sequence[ProcedureRecord],
    predictions: Mapping[str, LabelStream],
    registry: MetricRegistry,
    regime: str,
    rho_bands: Sequence[tuple[float, float]] = DEFAULT_RHO_BANDS,
) -> CorrelationStudy:
    """Correlate metrics from predicted vs ground-truth boundaries.

    ``predictions`` maps procedure id to the (already post-processed)
    label stream; segment selection follows the requested regime.
    """
    if len(procedures) < 3:
        raise TooFewPairs("need at least 3 procedures")
    gt_tables: dict[str, MetricTable] = {}
    pred_tables: dict[str, MetricTable] = {}
    for record in procedures:
        pid = record.procedure_id
        gt_tables[pid] = vectors_to_table(
            compute_metrics(registry, record, record.ground_truth)
        )
        segset = prediction_segments(predictions[pid], regime)
        pred_tables[pid] = vectors_to_table(compute_metrics(registry, record, segset))
    return build_study(gt_tables, pred_tables, registry, regime, rho_bands)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

def study_to_dict(study: CorrelationStudy) -> dict:
    return {
        "regime": study.regime,
        "n_procedures": study.n_procedures,
        "per_metric": [
            {
                "task": r.task,
                "metric": r.metric_name,
                "source": r.source,
                "n_pairs": r.n_pairs,
                "excluded": r.excluded,
                "defined": r.defined,
                "rho": r.rho,
                "p_value": r.p_value,
                "reason": r.reason,
            }
            for r in study.results
        ],
        "per_task_summary": [
            {
                "task": s.task,
                "source": s.source,
                "n_metrics": s.n_metrics,
                "mean_rho": s.mean_rho,
                "std_rho": s.std_rho,
                "median_p": s.median_p,
                "significant": s.significant,
            }
            for s in study.summaries
        ],
    }


def quartile_section(study: CorrelationStudy) -> dict:
    return {
        "per_metric": [
            {
                "task": q.task,
                "metric": q.metric_name,
                "n": q.n,
                "n_same": q.n_same,
                "fraction": q.fraction,
            }
            for q in study.quartiles
        ],
        "by_rho_band": list(study.rho_bands),
    }


def assemble_report(
    jaccard_by_pid: Mapping[str, JaccardResult],
    boundary_by_pid: Mapping[str, Mapping[int, BoundaryError | None]],
    studies: Mapping[str, CorrelationStudy | None],
    thresholds: Sequence[float] = DEFAULT_ERROR_THRESHOLDS_S,
    mcnemar_result: dict | None = None,
) -> dict:
    """Merge per-procedure results into the report.json payload."""
    pids = sorted(jaccard_by_pid)
    means = [jaccard_by_pid[pid].mean for pid in pids if jaccard_by_pid[pid].mean is not None]
    per_task_j: dict[int, list[float]] = {}
    for pid in pids:
        for task, value in jaccard_by_pid[pid].per_task.items():
            per_task_j.setdefault(task, []).append(value)

    jaccard_section = {
        "n": len(means),
        "mean": float(np.mean(means)) if means else None,
        "std": float(np.std(means)) if means else None,
        "per_procedure": {pid: jaccard_by_pid[pid].mean for pid in pids},
        "per_task": {
            str(task): {
                "n": len(vals),
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
            }
            for task, vals in sorted(per_task_j.items())
        },
    }

    begin_abs_all: list[float] = []
    end_abs_all: list[float] = []
    per_task_b: dict[int, dict[str, list[float]]] = {}
    missing_by_task: dict[int, int] = {}
    for pid in sorted(boundary_by_pid):
        for task, err in boundary_by_pid[pid].items():
            bucket = per_task_b.setdefault(
                task, {"begin": [], "end": [], "abs_begin": [], "abs_end": []}
            )
            if err is None:
                missing_by_task[task] = missing_by_task.get(task, 0) + 1
                continue
            bucket["begin"].append(err.begin_s)
            bucket["end"].append(err.end_s)
            bucket["abs_begin"].append(err.abs_begin_s)
            bucket["abs_end"].append(err.abs_end_s)
            begin_abs_all.append(err.abs_begin_s)
            end_abs_all.append(err.abs_end_s)

    boundary_section = {
        "per_task": {
            str(task): {
                "n": len(vals["begin"]),
                "missing": missing_by_task.get(task, 0),
                "median_abs_begin_s": _median_or_none(vals["abs_begin"]),
                "median_abs_end_s": _median_or_none(vals["abs_end"]),
                "median_signed_begin_s": _median_or_none(vals["begin"]),
                "median_signed_end_s": _median_or_none(vals["end"]),
            }
            for task, vals in sorted(per_task_b.items())
        },
    }

    buckets_section = {
        "begin": threshold_buckets(begin_abs_all, thresholds),
        "end": threshold_buckets(end_abs_all, thresholds),
        "per_task": {
            str(task): {
                "begin": threshold_buckets(vals["abs_begin"], thresholds),
                "end": threshold_buckets(vals["abs_end"], thresholds),
            }
            for task, vals in sorted(per_task_b.items())
        },
    }

    longest = studies.get(REGIME_LONGEST)
    all_segments = studies.get(REGIME_ALL)
    return {
        "jaccard": jaccard_section,
        "boundary_errors": boundary_section,
        "buckets": buckets_section,
        "correlations_longest": study_to_dict(longest) if longest else None,
        "correlations_all": study_to_dict(all_segments) if all_segments else None,
        "quartile_agreement": {
            "longest": quartile_section(longest) if longest else None,
            "all": quartile_section(all_segments) if all_segments else None,
        },
        "mcnemar": mcnemar_result,
    }


def _median_or_none(values: Sequence[float]) -> float | None:
    return float(np.median(values)) if len(values) else None


def scatter_rows(studies: Mapping[str, CorrelationStudy | None]) -> list[list]:
    rows = []
    for regime in (REGIME_LONGEST, REGIME_ALL):
        study = studies.get(regime)
        if study is None:
            continue
        for pt in study.scatter:
            rows.append(
                [regime, pt.task, pt.metric_name, pt.procedure_id, pt.gt_value, pt.pred_value]
            )
    return rows
