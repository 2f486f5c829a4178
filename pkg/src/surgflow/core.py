"""Domain types for procedures, labels, boundaries, kinematics and events.

Conventions used throughout the package:

* Task ids are plain integers in ``0..12``; 0 is the idle/unassigned class
  and 1..12 are the named procedure steps (``TASK_NAMES``).
* All time intervals are half-open ``[begin_s, end_s)`` in seconds.
* Label frame ``i`` covers ``[start + i/rate, start + (i+1)/rate)`` and
  belongs to a segment iff its start instant does.
* Everything is immutable after construction and safe to share across
  workers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    MalformedRow,
    NonMonotonicTimestamps,
    OverlappingGroundTruth,
    UnknownEventKind,
    UnknownManipulator,
    ValidationError,
)

IDLE_TASK = 0
N_TASKS = 12

TASK_NAMES: Mapping[int, str] = {
    1: "mobilize colon / drop bladder",
    2: "Endopelvic fascia / DVC",
    3: "Anterior bladder neck dissection",
    4: "Posterior bladder neck dissection",
    5: "Seminal vesicles",
    6: "Posterior plane / Denonvilliers",
    7: "Predicles / nerve sparing",
    8: "Apical dissection",
    9: "Posterior anastomosis",
    10: "Anterior anastomosis",
    11: "Lymph node dissection L",
    12: "Lymph node dissection R",
}

MANIPULATORS = ("PSM1", "PSM2")

EVENT_KINDS = (
    "camera_control_on",
    "camera_control_off",
    "energy_on",
    "energy_off",
    "clutch_on",
    "clutch_off",
    "head_in",
    "head_out",
    "arm_swap",
    "instrument_change_left",
    "instrument_change_right",
)


def validate_task_id(value: int, *, allow_idle: bool = True) -> int:
    lo = 0 if allow_idle else 1
    if not (lo <= value <= N_TASKS):
        raise ValidationError(f"task id {value} outside {lo}..{N_TASKS}")
    return int(value)


class Run(NamedTuple):
    """A maximal constant-label run, idle runs included."""

    task: int
    begin_s: float
    end_s: float


class Event(NamedTuple):
    t_s: float
    kind: str


@dataclass(frozen=True)
class Segment:
    """One occurrence of a surgical task over the half-open [begin_s, end_s)."""

    task: int
    begin_s: float
    end_s: float

    def __post_init__(self):
        validate_task_id(self.task, allow_idle=False)
        if not self.begin_s < self.end_s:
            raise ValidationError(
                f"segment for task {self.task} has begin {self.begin_s} >= end {self.end_s}"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.begin_s


class SegmentMode:
    LONGEST_ONLY = "longest_only"
    ALL_SEGMENTS = "all_segments"


@dataclass(frozen=True)
class SegmentSet:
    """Per-task segment lists, either the single longest run or every run."""

    mode: str
    by_task: Mapping[int, tuple[Segment, ...]]

    def __post_init__(self):
        if self.mode not in (SegmentMode.LONGEST_ONLY, SegmentMode.ALL_SEGMENTS):
            raise ValidationError(f"unknown segment mode {self.mode!r}")
        for task, segs in self.by_task.items():
            validate_task_id(task, allow_idle=False)
            if not segs:
                raise ValidationError(f"task {task} present with no segments")
            if self.mode == SegmentMode.LONGEST_ONLY and len(segs) > 1:
                raise ValidationError(
                    f"longest-only set has {len(segs)} segments for task {task}"
                )
            for seg in segs:
                if seg.task != task:
                    raise ValidationError("segment filed under the wrong task")
            for a, b in zip(segs, segs[1:]):
                if b.begin_s < a.end_s:
                    raise ValidationError(
                        f"segments of task {task} overlap or are unsorted"
                    )

    def tasks(self) -> list[int]:
        return sorted(self.by_task)

    def segments_for(self, task: int) -> tuple[Segment, ...]:
        return self.by_task.get(task, ())

    def all_segments(self) -> list[Segment]:
        return [s for t in self.tasks() for s in self.by_task[t]]

    def coverage_s(self, task: int) -> float:
        return sum(s.duration_s for s in self.segments_for(task))


@dataclass(frozen=True)
class LabelStream:
    """Per-frame task labels on a fixed frame clock (1 Hz by default)."""

    labels: np.ndarray
    frame_rate_hz: float = 1.0
    start_time_s: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("label stream must be a non-empty 1-D sequence")
        if arr.min() < 0 or arr.max() > N_TASKS:
            raise ValidationError("label stream contains task ids outside 0..12")
        if self.frame_rate_hz <= 0:
            raise ValidationError("frame rate must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    def __len__(self) -> int:
        return int(self.labels.size)

    def time_of(self, frame: int) -> float:
        return self.start_time_s + frame / self.frame_rate_hz

    def same_clock(self, other: "LabelStream") -> bool:
        return (
            len(self) == len(other)
            and self.frame_rate_hz == other.frame_rate_hz
            and self.start_time_s == other.start_time_s
        )


@dataclass(frozen=True)
class KinematicsTrack:
    """Samples for one manipulator: tip position and wrist angles over time."""

    t_s: np.ndarray        # (n,) seconds, strictly increasing
    position: np.ndarray   # (n, 3) meters
    wrist: np.ndarray      # (n, 3) roll, pitch, yaw radians

    def __post_init__(self):
        t = np.ascontiguousarray(self.t_s, dtype=np.float64)
        pos = np.ascontiguousarray(self.position, dtype=np.float64)
        ang = np.ascontiguousarray(self.wrist, dtype=np.float64)
        if t.ndim != 1:
            raise ValidationError("timestamps must be 1-D")
        if pos.shape != (t.size, 3) or ang.shape != (t.size, 3):
            raise ValidationError("position/wrist must be (n, 3) arrays")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValidationError("timestamps must be strictly increasing")
        for a in (t, pos, ang):
            a.setflags(write=False)
        object.__setattr__(self, "t_s", t)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "wrist", ang)

    def __len__(self) -> int:
        return int(self.t_s.size)

    # Derived per-pair arrays; pair k spans [t_s[k], t_s[k+1]].
    @cached_property
    def pair_dt(self) -> np.ndarray:
        return np.diff(self.t_s)

    @cached_property
    def pair_displacement(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.position, axis=0), axis=1)

    @cached_property
    def pair_speed(self) -> np.ndarray:
        return self.pair_displacement / self.pair_dt

    @cached_property
    def pair_angle_delta(self) -> np.ndarray:
        """|delta| per wrist axis, wrapped to (-pi, pi]; shape (n-1, 3)."""
        d = np.diff(self.wrist, axis=0)
        wrapped = np.pi - np.mod(np.pi - d, 2.0 * np.pi)
        return np.abs(wrapped)


@dataclass(frozen=True)
class KinematicsStream:
    """Tracks for the two patient-side manipulators."""

    tracks: Mapping[str, KinematicsTrack]

    def __post_init__(self):
        for name in self.tracks:
            if name not in MANIPULATORS:
                raise UnknownManipulator(f"unknown manipulator {name!r}")

    def track(self, manipulator: str) -> KinematicsTrack:
        if manipulator not in MANIPULATORS:
            raise UnknownManipulator(f"unknown manipulator {manipulator!r}")
        if manipulator not in self.tracks:
            raise UnknownManipulator(f"no samples for manipulator {manipulator!r}")
        return self.tracks[manipulator]

    def manipulators(self) -> list[str]:
        return [m for m in MANIPULATORS if m in self.tracks]


@dataclass(frozen=True)
class ProcedureRecord:
    """One procedure: ground-truth boundaries, labels, kinematics, events."""

    procedure_id: str
    ground_truth: SegmentSet
    labels_gt: LabelStream
    kinematics: KinematicsStream
    events: tuple[Event, ...]
    duration_s: float

    def __post_init__(self):
        segs = self.ground_truth.all_segments()
        for seg in segs:
            if seg.begin_s < 0 or seg.end_s > self.duration_s:
                raise ValidationError(
                    f"{self.procedure_id}: task {seg.task} segment "
                    f"[{seg.begin_s}, {seg.end_s}) outside [0, {self.duration_s})"
                )
        ordered = sorted(segs, key=lambda s: s.begin_s)
        for a, b in zip(ordered, ordered[1:]):
            if b.begin_s < a.end_s:
                raise OverlappingGroundTruth(
                    f"{self.procedure_id}: tasks {a.task} and {b.task} overlap"
                )
        for prev, ev in zip((None,) + self.events, self.events):
            if ev.kind not in EVENT_KINDS:
                raise ValidationError(f"event kind {ev.kind!r} not in registry")
            if prev is not None and ev.t_s < prev.t_s:
                raise ValidationError("events must be sorted by time")


# ---------------------------------------------------------------------------
# Conversions between label streams and segment representations
# ---------------------------------------------------------------------------

def annotation_to_labels(
    ann: SegmentSet, duration_s: float, frame_rate_hz: float = 1.0
) -> LabelStream:
    """Rasterize per-task boundaries onto the frame clock.

    Frame i gets task t iff the frame's start instant lies in a segment of
    t; frames covered by no segment get the idle label. Output length is
    exactly ``floor(duration_s * frame_rate_hz)``.
    """
    n = int(math.floor(duration_s * frame_rate_hz))
    times = np.arange(n, dtype=np.float64) / frame_rate_hz
    labels = np.zeros(n, dtype=np.int64)
    claimed = np.zeros(n, dtype=bool)
    for task in ann.tasks():
        for seg in ann.segments_for(task):
            mask = (times >= seg.begin_s) & (times < seg.end_s)
            if np.any(claimed & mask):
                raise OverlappingGroundTruth(
                    f"segments overlap on the frame grid near task {task}"
                )
            claimed |= mask
            labels[mask] = task
    return LabelStream(labels, frame_rate_hz=frame_rate_hz)


def labels_to_runs(labels: LabelStream) -> list[Run]:
    """Decompose a stream into maximal constant runs (idle runs included).

    Runs partition the stream: run i ends exactly where run i+1 begins.
    """
    arr = labels.labels
    boundaries = np.flatnonzero(np.diff(arr)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [arr.size]))
    return [
        Run(int(arr[i]), labels.time_of(int(i)), labels.time_of(int(j)))
        for i, j in zip(starts, ends)
    ]


def runs_to_segment_set(runs: Iterable[Run], mode: str) -> SegmentSet:
    """Group non-idle runs per task; idle runs are dropped."""
    by_task: dict[int, list[Segment]] = {}
    for run in runs:
        if run.task == IDLE_TASK:
            continue
        by_task.setdefault(run.task, []).append(
            Segment(run.task, run.begin_s, run.end_s)
        )
    return SegmentSet(mode, {t: tuple(s) for t, s in by_task.items()})


# ---------------------------------------------------------------------------
# CSV ingestion / serialization
# ---------------------------------------------------------------------------

LABELS_CSV = "labels.csv"
ANNOTATION_CSV = "annotation.csv"
KINEMATICS_CSV = "kinematics.csv"
EVENTS_CSV = "events.csv"


def format_float(x: float) -> str:
    """Fixed 9-significant-digit formatting used in every output file."""
    return f"{x:.9g}"


def _read_rows(path: Path, columns: Sequence[str]) -> list[tuple[int, list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise MalformedRow("empty file", file=str(path), line=1) from None
            if [h.strip() for h in header] != list(columns):
                raise MalformedRow(
                    f"expected header {','.join(columns)}", file=str(path), line=1
                )
            return [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]
    except OSError as exc:
        raise exc


def _parse_int(value: str, path: Path, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise MalformedRow(
            f"expected integer, got {value!r}", file=str(path), line=lineno
        ) from None


def _parse_float(value: str, path: Path, lineno: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise MalformedRow(
            f"expected number, got {value!r}", file=str(path), line=lineno
        ) from None
    if not math.isfinite(out):
        raise MalformedRow(f"non-finite value {value!r}", file=str(path), line=lineno)
    return out


def read_labels_csv(path: str | Path, frame_rate_hz: float = 1.0) -> LabelStream:
    path = Path(path)
    rows = _read_rows(path, ["frame_index", "task_id"])
    labels = np.empty(len(rows), dtype=np.int64)
    for k, (lineno, row) in enumerate(rows):
        if len(row) != 2:
            raise MalformedRow("expected 2 fields", file=str(path), line=lineno)
        idx = _parse_int(row[0], path, lineno)
        task = _parse_int(row[1], path, lineno)
        if idx != k:
            raise MalformedRow(
                f"frame_index {idx} out of order (expected {k})",
                file=str(path),
                line=lineno,
            )
        if not (0 <= task <= N_TASKS):
            raise MalformedRow(
                f"task_id {task} outside 0..{N_TASKS}", file=str(path), line=lineno
            )
        labels[k] = task
    if len(rows) == 0:
        raise MalformedRow("no label rows", file=str(path), line=1)
    return LabelStream(labels, frame_rate_hz=frame_rate_hz)


def read_annotation_csv(path: str | Path, mode: str = SegmentMode.LONGEST_ONLY) -> SegmentSet:
    path = Path(path)
    rows = _read_rows(path, ["task_id", "begin_s", "end_s"])
    by_task: dict[int, list[Segment]] = {}
    for lineno, row in rows:
        if len(row) != 3:
            raise MalformedRow("expected 3 fields", file=str(path), line=lineno)
        task = _parse_int(row[0], path, lineno)
        begin = _parse_float(row[1], path, lineno)
        end = _parse_float(row[2], path, lineno)
        if not (1 <= task <= N_TASKS):
            raise MalformedRow(
                f"task_id {task} outside 1..{N_TASKS}", file=str(path), line=lineno
            )
        if begin >= end:
            raise MalformedRow(
                f"begin {begin} >= end {end}", file=str(path), line=lineno
            )
        if begin < 0:
            raise MalformedRow(f"begin {begin} < 0", file=str(path), line=lineno)
        by_task.setdefault(task, []).append(Segment(task, begin, end))
    for task, segs in by_task.items():
        segs.sort(key=lambda s: s.begin_s)
        if mode == SegmentMode.LONGEST_ONLY and len(segs) > 1:
            raise MalformedRow(
                f"task {task} appears {len(segs)} times", file=str(path)
            )
    try:
        return SegmentSet(mode, {t: tuple(s) for t, s in by_task.items()})
    except ValidationError as exc:
        raise MalformedRow(str(exc), file=str(path)) from None


def read_kinematics_csv(path: str | Path) -> KinematicsStream:
    path = Path(path)
    columns = ["t_s", "manipulator", "x", "y", "z", "roll", "pitch", "yaw"]
    rows = _read_rows(path, columns)
    per_arm: dict[str, dict[str, list]] = {
        m: {"t": [], "pos": [], "ang": [], "lines": []} for m in MANIPULATORS
    }
    for lineno, row in rows:
        if len(row) != 8:
            raise MalformedRow("expected 8 fields", file=str(path), line=lineno)
        t = _parse_float(row[0], path, lineno)
        arm = row[1].strip()
        if arm not in MANIPULATORS:
            raise MalformedRow(
                f"manipulator {arm!r} not in {MANIPULATORS}", file=str(path), line=lineno
            )
        vals = [_parse_float(v, path, lineno) for v in row[2:8]]
        bucket = per_arm[arm]
        if bucket["t"] and t <= bucket["t"][-1]:
            raise NonMonotonicTimestamps(
                f"t_s {t} not after {bucket['t'][-1]} for {arm}",
                file=str(path),
                line=lineno,
            )
        bucket["t"].append(t)
        bucket["pos"].append(vals[0:3])
        bucket["ang"].append(vals[3:6])
    tracks = {}
    for arm, bucket in per_arm.items():
        if bucket["t"]:
            tracks[arm] = KinematicsTrack(
                np.asarray(bucket["t"]),
                np.asarray(bucket["pos"]),
                np.asarray(bucket["ang"]),
            )
    return KinematicsStream(tracks)


def read_events_csv(path: str | Path) -> tuple[Event, ...]:
    path = Path(path)
    rows = _read_rows(path, ["t_s", "kind"])
    events = []
    for lineno, row in rows:
        if len(row) != 2:
            raise MalformedRow("expected 2 fields", file=str(path), line=lineno)
        t = _parse_float(row[0], path, lineno)
        kind = row[1].strip()
        if kind not in EVENT_KINDS:
            raise UnknownEventKind(
                f"event kind {kind!r} not in registry", file=str(path), line=lineno
            )
        events.append(Event(t, kind))
    # File order is not significant; events are kept sorted by time.
    events.sort(key=lambda e: (e.t_s, e.kind))
    return tuple(events)


def load_procedure(
    labels_path: str | Path,
    annotation_path: str | Path,
    kinematics_path: str | Path,
    events_path: str | Path,
    procedure_id: str | None = None,
) -> ProcedureRecord:
    """Load and validate the four files describing one procedure.

    Pure: loading identical files always yields an identical record.
    """
    labels = read_labels_csv(labels_path)
    ground_truth = read_annotation_csv(annotation_path, mode=SegmentMode.LONGEST_ONLY)
    kinematics = read_kinematics_csv(kinematics_path)
    events = read_events_csv(events_path)
    duration_s = len(labels) / labels.frame_rate_hz
    pid = procedure_id or Path(labels_path).resolve().parent.name
    for seg in ground_truth.all_segments():
        if seg.end_s > duration_s:
            raise MalformedRow(
                f"task {seg.task} segment ends at {seg.end_s} beyond duration {duration_s}",
                file=str(annotation_path),
            )
    return ProcedureRecord(
        procedure_id=pid,
        ground_truth=ground_truth,
        labels_gt=labels,
        kinematics=kinematics,
        events=events,
        duration_s=duration_s,
    )


def load_procedure_dir(directory: str | Path) -> ProcedureRecord:
    d = Path(directory)
    return load_procedure(
        d / LABELS_CSV, d / ANNOTATION_CSV, d / KINEMATICS_CSV, d / EVENTS_CSV,
        procedure_id=d.name,
    )


def write_labels_csv(path: str | Path, labels: LabelStream) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "task_id"])
        for i, task in enumerate(labels.labels):
            w.writerow([i, int(task)])


def write_annotation_csv(path: str | Path, segset: SegmentSet) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task_id", "begin_s", "end_s"])
        for seg in segset.all_segments():
            w.writerow([seg.task, format_float(seg.begin_s), format_float(seg.end_s)])


def write_kinematics_csv(path: str | Path, kin: KinematicsStream) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "manipulator", "x", "y", "z", "roll", "pitch", "yaw"])
        for arm in kin.manipulators():
            track = kin.tracks[arm]
            for k in range(len(track)):
                w.writerow(
                    [format_float(track.t_s[k]), arm]
                    + [format_float(v) for v in track.position[k]]
                    + [format_float(v) for v in track.wrist[k]]
                )


def write_events_csv(path: str | Path, events: Sequence[Event]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "kind"])
        for ev in events:
            w.writerow([format_float(ev.t_s), ev.kind])


def write_procedure_dir(record: ProcedureRecord, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_labels_csv(d / LABELS_CSV, record.labels_gt)
    write_annotation_csv(d / ANNOTATION_CSV, record.ground_truth)
    write_kinematics_csv(d / KINEMATICS_CSV, record.kinematics)
    write_events_csv(d / EVENTS_CSV, record.events)


def dump_json(path: str | Path, payload) -> None:
    """Serialize with sorted keys and 9-significant-digit floats."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round_floats(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format_float(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj
