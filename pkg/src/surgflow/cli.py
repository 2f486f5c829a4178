"""Command-line pipeline: generate, perturb, postprocess, metrics, evaluate, compare.

Every command echoes its fully resolved configuration into a manifest in
its output directory, serializes floats at 9 significant digits with
sorted keys, and merges per-procedure work in procedure-id order, so
re-running with identical inputs produces byte-identical outputs no
matter how many workers run (``--jobs``, or the SURGFLOW_JOBS
environment variable).

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import core, evaluation, metrics, postprocess, synth
from .errors import SurgflowError

PERTURBED_LABELS_CSV = "labels_pred.csv"


def main() -> None:
    sys.exit(run(sys.argv[1:]))


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not hasattr(args, "func"):
        parser.print_help()
        return 1
    try:
        args.func(args)
    except SurgflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


def _jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("SURGFLOW_JOBS")
    return max(1, int(env)) if env else 1


def _map_ordered(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _procedure_dirs(root: Path) -> list[Path]:
    dirs = sorted(
        d for d in root.iterdir() if d.is_dir() and (d / core.LABELS_CSV).exists()
    )
    if not dirs:
        raise FileNotFoundError(f"no procedure directories under {root}")
    return dirs


def _write_manifest(out_dir: Path, command: str, payload: dict) -> None:
    name = "manifest.json" if command == "generate" else f"{command}_manifest.json"
    core.dump_json(out_dir / name, {"command": command, **payload})


def _registry(args) -> metrics.MetricRegistry:
    if getattr(args, "registry", None):
        return metrics.load_registry(args.registry)
    return metrics.default_registry()


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _generate_one(item) -> str:
    cfg_kwargs, out_root = item
    record = synth.generate_procedure(synth.SynthConfig(**cfg_kwargs))
    core.write_procedure_dir(record, Path(out_root) / record.procedure_id)
    return record.procedure_id


def _cmd_generate(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_kwargs = dict(
        n_tasks=args.n_tasks,
        task_duration_s=tuple(args.task_duration),
        gap_duration_s=tuple(args.gap_duration),
        kinematics_rate_hz=args.kin_rate,
        label_rate_hz=args.label_rate,
        velocity_damping=args.damping,
        velocity_noise_m=args.velocity_noise,
        burstiness=args.burstiness,
    )
    synth.SynthConfig(seed=args.seed, **base_kwargs)  # validate before forking
    items = [({"seed": args.seed + i, **base_kwargs}, str(out)) for i in range(args.n)]
    ids = _map_ordered(_generate_one, items, _jobs(args))
    _write_manifest(
        out, "generate",
        {"seed": args.seed, "n": args.n, "config": base_kwargs, "procedures": sorted(ids)},
    )


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------

def _perturb_one(item) -> str:
    proc_dir, out_root, noise_kwargs = item
    proc_dir = Path(proc_dir)
    labels = core.read_labels_csv(proc_dir / core.LABELS_CSV)
    noisy = synth.perturb_predictions(labels, synth.NoiseConfig(**noise_kwargs))
    target = Path(out_root) / proc_dir.name
    target.mkdir(parents=True, exist_ok=True)
    core.write_labels_csv(target / PERTURBED_LABELS_CSV, noisy)
    return proc_dir.name


def _cmd_perturb(args) -> None:
    data = Path(args.data)
    out = Path(args.out) if args.out else data
    out.mkdir(parents=True, exist_ok=True)
    dirs = _procedure_dirs(data)
    items = []
    for i, proc_dir in enumerate(dirs):
        noise_kwargs = dict(
            boundary_jitter_std_s=args.jitter_std,
            spike_rate_per_min=args.spike_rate,
            spike_duration_s=tuple(args.spike_duration),
            spike_label=args.spike_label,
            seed=args.seed + i,
        )
        synth.NoiseConfig(**noise_kwargs)  # validate eagerly
        items.append((str(proc_dir), str(out), noise_kwargs))
    ids = _map_ordered(_perturb_one, items, _jobs(args))
    _write_manifest(
        out, "perturb",
        {
            "data": str(data),
            "seed": args.seed,
            "boundary_jitter_std_s": args.jitter_std,
            "spike_rate_per_min": args.spike_rate,
            "spike_duration_s": list(args.spike_duration),
            "spike_label": args.spike_label,
            "procedures": sorted(ids),
        },
    )


# ---------------------------------------------------------------------------
# postprocess
# ---------------------------------------------------------------------------

def _postprocess_one(item) -> str:
    labels_path, out_root, window = item
    labels_path = Path(labels_path)
    labels = core.read_labels_csv(labels_path)
    filtered = postprocess.median_filter(labels, postprocess.FilterConfig(window))
    segset = postprocess.select_longest_segments(filtered)
    pid = labels_path.parent.name
    target = Path(out_root) / pid
    target.mkdir(parents=True, exist_ok=True)
    core.write_labels_csv(target / core.LABELS_CSV, filtered)
    core.write_annotation_csv(target / core.ANNOTATION_CSV, segset)
    return pid


def _cmd_postprocess(args) -> None:
    if bool(args.infile) == bool(args.data):
        raise SurgflowError("exactly one of --in and --data is required")
    postprocess.FilterConfig(args.window)  # validate before any work
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.infile:
        paths = [Path(args.infile)]
    else:
        paths = [d / args.labels_name for d in _procedure_dirs(Path(args.data))]
        missing = [p for p in paths if not p.exists()]
        if missing:
            raise FileNotFoundError(f"missing prediction labels: {missing[0]}")
    items = [(str(p), str(out), args.window) for p in paths]
    ids = _map_ordered(_postprocess_one, items, _jobs(args))
    _write_manifest(
        out, "postprocess",
        {
            "window": args.window,
            "labels_name": args.labels_name if args.data else None,
            "procedures": sorted(ids),
        },
    )


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _metrics_one(item):
    data_dir, pred_dir, pid, source, regime, registry = item
    record = core.load_procedure_dir(Path(data_dir) / pid)
    if source == "gt":
        segset = record.ground_truth
    else:
        labels = core.read_labels_csv(Path(pred_dir) / pid / core.LABELS_CSV)
        segset = evaluation.prediction_segments(labels, regime)
    vectors = metrics.compute_metrics(registry, record, segset)
    return pid, metrics.metrics_to_rows(vectors, registry)


def _cmd_metrics(args) -> None:
    if args.source == "pred" and not args.pred:
        raise SurgflowError("--pred is required when --source pred")
    registry = _registry(args)
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pids = [d.name for d in _procedure_dirs(data)]
    items = [
        (str(data), args.pred, pid, args.source, args.regime, registry) for pid in pids
    ]
    results = _map_ordered(_metrics_one, items, _jobs(args))
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics.METRICS_CSV_COLUMNS)
        for _, rows in sorted(results, key=lambda r: r[0]):
            for row in rows:
                writer.writerow(
                    [
                        row[0], row[1], row[2],
                        core.format_float(row[3]) if row[3] != "" else "",
                        row[4],
                        core.format_float(row[5]),
                    ]
                )
    _write_manifest(
        out, "metrics",
        {
            "data": str(data),
            "pred": args.pred,
            "source": args.source,
            "regime": args.regime,
            "registry": args.registry,
            "procedures": sorted(pids),
        },
    )


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _evaluate_one(item):
    data_dir, pred_dir, pid, regimes, registry = item
    record = core.load_procedure_dir(Path(data_dir) / pid)
    pred_labels = core.read_labels_csv(Path(pred_dir) / pid / core.LABELS_CSV)
    jac = evaluation.jaccard_index(pred_labels, record.labels_gt)
    pred_longest = postprocess.select_longest_segments(pred_labels)
    bounds = evaluation.boundary_errors(pred_longest, record.ground_truth)
    gt_table = evaluation.vectors_to_table(
        metrics.compute_metrics(registry, record, record.ground_truth)
    )
    pred_tables = {}
    for regime in regimes:
        segset = evaluation.prediction_segments(pred_labels, regime)
        pred_tables[regime] = evaluation.vectors_to_table(
            metrics.compute_metrics(registry, record, segset)
        )
    return pid, jac, bounds, gt_table, pred_tables


def _cmd_evaluate(args) -> None:
    registry = _registry(args)
    regimes = (
        [evaluation.REGIME_LONGEST, evaluation.REGIME_ALL]
        if args.regime == "both"
        else [args.regime]
    )
    data = Path(args.data)
    pred = Path(args.pred)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pids = [d.name for d in _procedure_dirs(data)]
    items = [(str(data), str(pred), pid, tuple(regimes), registry) for pid in pids]
    results = _map_ordered(_evaluate_one, items, _jobs(args))
    results.sort(key=lambda r: r[0])

    jaccard_by_pid = {pid: jac for pid, jac, _, _, _ in results}
    boundary_by_pid = {pid: bounds for pid, _, bounds, _, _ in results}
    gt_tables = {pid: table for pid, _, _, table, _ in results}
    studies = {}
    for regime in (evaluation.REGIME_LONGEST, evaluation.REGIME_ALL):
        if regime in regimes:
            pred_tables = {pid: tables[regime] for pid, _, _, _, tables in results}
            studies[regime] = evaluation.build_study(gt_tables, pred_tables, registry, regime)
        else:
            studies[regime] = None

    report = evaluation.assemble_report(
        jaccard_by_pid, boundary_by_pid, studies, thresholds=tuple(args.thresholds)
    )
    core.dump_json(out / "report.json", report)
    with open(out / "scatter.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["regime", "task_id", "metric_name", "procedure_id", "gt_value", "pred_value"]
        )
        for row in evaluation.scatter_rows(studies):
            writer.writerow(
                row[:4] + [core.format_float(row[4]), core.format_float(row[5])]
            )
    _write_manifest(
        out, "evaluate",
        {
            "data": str(data),
            "pred": str(pred),
            "regime": args.regime,
            "registry": args.registry,
            "thresholds": list(args.thresholds),
            "procedures": sorted(pids),
        },
    )


# ---------------------------------------------------------------------------
# compare (McNemar between two prediction sets)
# ---------------------------------------------------------------------------

def _cmd_compare(args) -> None:
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flags_a: list[np.ndarray] = []
    flags_b: list[np.ndarray] = []
    pids = [d.name for d in _procedure_dirs(data)]
    for pid in pids:
        gt = core.read_labels_csv(data / pid / core.LABELS_CSV)
        for pred_root, acc in ((args.pred_a, flags_a), (args.pred_b, flags_b)):
            pred = core.read_labels_csv(Path(pred_root) / pid / core.LABELS_CSV)
            if not pred.same_clock(gt):
                raise SurgflowError(f"{pid}: prediction and ground truth lengths differ")
            acc.append(pred.labels == gt.labels)
    a = np.concatenate(flags_a)
    b = np.concatenate(flags_b)
    chi2, p_value = evaluation.mcnemar(a, b)
    a_only, b_only = evaluation.mcnemar_counts(a, b)
    payload = {
        "chi2": chi2,
        "p_value": p_value,
        "n_frames": int(a.size),
        "a_only_correct": a_only,
        "b_only_correct": b_only,
        "accuracy_a": float(np.mean(a)),
        "accuracy_b": float(np.mean(b)),
        "pred_a": str(args.pred_a),
        "pred_b": str(args.pred_b),
    }
    core.dump_json(out / "mcnemar.json", payload)
    _write_manifest(
        out, "compare",
        {"data": str(data), "pred_a": str(args.pred_a), "pred_b": str(args.pred_b),
         "procedures": sorted(pids)},
    )


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_jobs(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--jobs", type=int, default=None,
        help="worker processes (default: SURGFLOW_JOBS or 1)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgflow",
        description="Task-based efficiency metrics and segmentation-model evaluation",
    )
    sub = parser.add_subparsers(dest="command")

    g = sub.add_parser("generate", help="write synthetic procedure directories")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=1, help="number of procedures")
    g.add_argument("--n-tasks", type=int, default=12)
    g.add_argument("--task-duration", type=float, nargs=2, default=[120.0, 900.0],
                   metavar=("MIN_S", "MAX_S"))
    g.add_argument("--gap-duration", type=float, nargs=2, default=[0.0, 60.0],
                   metavar=("MIN_S", "MAX_S"))
    g.add_argument("--kin-rate", type=float, default=50.0)
    g.add_argument("--label-rate", type=float, default=1.0)
    g.add_argument("--damping", type=float, default=0.9)
    g.add_argument("--velocity-noise", type=float, default=0.002)
    g.add_argument("--burstiness", type=float, default=0.0)
    _add_jobs(g)
    g.set_defaults(func=_cmd_generate)

    p = sub.add_parser("perturb", help="derive noisy prediction labels from ground truth")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="default: alongside the input data")
    p.add_argument("--jitter-std", type=float, default=0.0)
    p.add_argument("--spike-rate", type=float, default=0.0, help="spikes per minute")
    p.add_argument("--spike-duration", type=float, nargs=2, default=[3.0, 10.0],
                   metavar=("MIN_S", "MAX_S"))
    p.add_argument("--spike-label", choices=[synth.SPIKE_LABEL_UNIFORM, synth.SPIKE_LABEL_ADJACENT],
                   default=synth.SPIKE_LABEL_UNIFORM)
    p.add_argument("--seed", type=int, default=0)
    _add_jobs(p)
    p.set_defaults(func=_cmd_perturb)

    f = sub.add_parser("postprocess", help="median-filter labels and select segments")
    f.add_argument("--in", dest="infile", default=None, help="one labels CSV")
    f.add_argument("--data", default=None, help="procedure tree (batch mode)")
    f.add_argument("--labels-name", default=PERTURBED_LABELS_CSV,
                   help="prediction file name inside each procedure directory")
    f.add_argument("--window", type=int, default=postprocess.DEFAULT_WINDOW)
    f.add_argument("--out", required=True)
    _add_jobs(f)
    f.set_defaults(func=_cmd_postprocess)

    m = sub.add_parser("metrics", help="write per-task metric values")
    m.add_argument("--data", required=True)
    m.add_argument("--pred", default=None)
    m.add_argument("--source", choices=["gt", "pred"], default="gt")
    m.add_argument("--regime", choices=[evaluation.REGIME_LONGEST, evaluation.REGIME_ALL],
                   default=evaluation.REGIME_LONGEST)
    m.add_argument("--registry", default=None, help="registry override JSON")
    m.add_argument("--out", required=True)
    _add_jobs(m)
    m.set_defaults(func=_cmd_metrics)

    e = sub.add_parser("evaluate", help="write report.json and scatter.csv")
    e.add_argument("--data", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--regime", choices=["both", evaluation.REGIME_LONGEST, evaluation.REGIME_ALL],
                   default="both")
    e.add_argument("--registry", default=None)
    e.add_argument("--thresholds", type=float, nargs="+",
                   default=list(evaluation.DEFAULT_ERROR_THRESHOLDS_S))
    e.add_argument("--out", required=True)
    _add_jobs(e)
    e.set_defaults(func=_cmd_evaluate)

    c = sub.add_parser("compare", help="McNemar test between two prediction sets")
    c.add_argument("--data", required=True)
    c.add_argument("--pred-a", required=True)
    c.add_argument("--pred-b", required=True)
    c.add_argument("--out", required=True)
    _add_jobs(c)
    c.set_defaults(func=_cmd_compare)

    return parser


if __name__ == "__main__":
    main()
