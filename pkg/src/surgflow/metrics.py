"""Per-task efficiency metrics over kinematics and system events.

The default registry reconstructs the published metric families at their
published sizes: 13 kinematic metrics (economy of motion, speeds and wrist
angular paths for both patient-side manipulators, plus an idle-time
fraction) and 33 event metrics (count, rate and mean inter-event gap for
each of the 11 system event kinds).

Values are computed per segment and combined across a task's segments
according to each metric's aggregation rule, so the longest-segment and
all-segments regimes share one code path. A task whose segments contain no
usable samples yields ``None`` (missing) rather than a fabricated zero.

Segment membership rules:

* an event belongs to ``[begin, end)`` iff ``begin <= t < end``;
* a kinematics sample pair ``(t_k, t_k+1)`` belongs to a segment iff its
  whole interval does: ``begin <= t_k`` and ``t_k+1 <= end``. The closed
  right edge makes path-type metrics exactly additive when a segment is
  split at a sample instant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (
    EVENT_KINDS,
    MANIPULATORS,
    Event,
    KinematicsStream,
    KinematicsTrack,
    ProcedureRecord,
    Segment,
    SegmentSet,
)
from .errors import InvalidConfig, UnknownEventKind, ValidationError

SOURCE_KINEMATIC = "kinematic"
SOURCE_EVENT = "event"

# Aggregation rules across a task's segments.
ADDITIVE = "additive"
DURATION_WEIGHTED_MEAN = "duration_weighted_mean"
MAX_OVER = "max_over"
RECOMPUTED_OVER_UNION = "recomputed_over_union"

# Metric kinds and their canonical aggregation.
PATH_LENGTH = "path_length"
MEAN_SPEED = "mean_speed"
MAX_SPEED = "max_speed"
ANGULAR_PATH = "angular_path"
IDLE_FRACTION = "idle_fraction"
EVENT_COUNT = "event_count"
EVENT_RATE_PER_MIN = "event_rate_per_min"
MEAN_INTER_EVENT_INTERVAL = "mean_inter_event_interval_s"

_CANONICAL_AGGREGATION = {
    PATH_LENGTH: ADDITIVE,
    ANGULAR_PATH: ADDITIVE,
    EVENT_COUNT: ADDITIVE,
    MEAN_SPEED: DURATION_WEIGHTED_MEAN,
    IDLE_FRACTION: DURATION_WEIGHTED_MEAN,
    EVENT_RATE_PER_MIN: DURATION_WEIGHTED_MEAN,
    MAX_SPEED: MAX_OVER,
    MEAN_INTER_EVENT_INTERVAL: RECOMPUTED_OVER_UNION,
}

WRIST_AXES = ("roll", "pitch", "yaw")
DEFAULT_IDLE_SPEED_THRESHOLD_M_S = 0.005


@dataclass(frozen=True)
class MetricSpec:
    """One named metric: what to measure and how to combine segments."""

    name: str
    source: str
    metric: str
    manipulator: str | None = None
    axis: str | None = None
    event_kind: str | None = None
    speed_threshold_m_s: float | None = None
    aggregation: str | None = None

    def __post_init__(self):
        if self.metric not in _CANONICAL_AGGREGATION:
            raise InvalidConfig(f"unknown metric kind {self.metric!r}")
        canonical = _CANONICAL_AGGREGATION[self.metric]
        if self.aggregation is None:
            object.__setattr__(self, "aggregation", canonical)
        elif self.aggregation != canonical:
            raise InvalidConfig(
                f"{self.name}: aggregation {self.aggregation!r} inconsistent with "
                f"{self.metric!r} (expected {canonical!r})"
            )
        if self.source == SOURCE_KINEMATIC:
            if self.metric in (PATH_LENGTH, MEAN_SPEED, MAX_SPEED, ANGULAR_PATH):
                if self.manipulator not in MANIPULATORS:
                    raise InvalidConfig(f"{self.name}: manipulator required")
            if self.metric == ANGULAR_PATH and self.axis not in WRIST_AXES:
                raise InvalidConfig(f"{self.name}: axis must be one of {WRIST_AXES}")
            if self.metric == IDLE_FRACTION and not self.speed_threshold_m_s:
                raise InvalidConfig(f"{self.name}: speed threshold required")
        elif self.source == SOURCE_EVENT:
            if self.event_kind not in EVENT_KINDS:
                raise InvalidConfig(f"{self.name}: event kind required")
        else:
            raise InvalidConfig(f"{self.name}: unknown source {self.source!r}")


@dataclass(frozen=True)
class MetricRegistry:
    kinematic_specs: tuple[MetricSpec, ...]
    event_specs: tuple[MetricSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.all_specs()]
        if len(names) != len(set(names)):
            raise InvalidConfig("duplicate metric names in registry")

    def all_specs(self) -> tuple[MetricSpec, ...]:
        return self.kinematic_specs + self.event_specs

    def spec(self, name: str) -> MetricSpec:
        for s in self.all_specs():
            if s.name == name:
                return s
        raise KeyError(name)


@dataclass(frozen=True)
class MetricVector:
    """All registry metrics for one (procedure, task)."""

    procedure_id: str
    task: int
    values: Mapping[str, float | None]
    coverage_s: float


def default_registry(
    idle_speed_threshold_m_s: float = DEFAULT_IDLE_SPEED_THRESHOLD_M_S,
) -> MetricRegistry:
    """The stock 13 kinematic + 33 event metric definitions."""
    kin: list[MetricSpec] = []
    for arm in MANIPULATORS:
        a = arm.lower()
        kin.append(MetricSpec(f"path_length_{a}", SOURCE_KINEMATIC, PATH_LENGTH, manipulator=arm))
        kin.append(MetricSpec(f"mean_speed_{a}", SOURCE_KINEMATIC, MEAN_SPEED, manipulator=arm))
        kin.append(MetricSpec(f"max_speed_{a}", SOURCE_KINEMATIC, MAX_SPEED, manipulator=arm))
        for axis in WRIST_AXES:
            kin.append(
                MetricSpec(
                    f"angular_path_{axis}_{a}", SOURCE_KINEMATIC, ANGULAR_PATH,
                    manipulator=arm, axis=axis,
                )
            )
    kin.append(
        MetricSpec(
            "idle_fraction", SOURCE_KINEMATIC, IDLE_FRACTION,
            speed_threshold_m_s=idle_speed_threshold_m_s,
        )
    )
    evt: list[MetricSpec] = []
    for kind in EVENT_KINDS:
        evt.append(MetricSpec(f"count_{kind}", SOURCE_EVENT, EVENT_COUNT, event_kind=kind))
        evt.append(
            MetricSpec(f"rate_per_min_{kind}", SOURCE_EVENT, EVENT_RATE_PER_MIN, event_kind=kind)
        )
        evt.append(
            MetricSpec(
                f"mean_gap_s_{kind}", SOURCE_EVENT, MEAN_INTER_EVENT_INTERVAL, event_kind=kind
            )
        )
    return MetricRegistry(tuple(kin), tuple(evt))


def load_registry(path: str | Path) -> MetricRegistry:
    """Read a registry override file: a JSON list of MetricSpec descriptors."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, list):
        raise InvalidConfig("registry file must contain a JSON list")
    kin, evt = [], []
    allowed = {
        "name", "source", "metric", "manipulator", "axis", "event_kind",
        "speed_threshold_m_s", "aggregation",
    }
    for entry in payload:
        extra = set(entry) - allowed
        if extra:
            raise InvalidConfig(f"unknown registry fields {sorted(extra)}")
        spec = MetricSpec(**entry)
        (kin if spec.source == SOURCE_KINEMATIC else evt).append(spec)
    return MetricRegistry(tuple(kin), tuple(evt))


# ---------------------------------------------------------------------------
# Kinematic metrics
# ---------------------------------------------------------------------------

def _pair_slice(track: KinematicsTrack, seg: Segment) -> slice:
    """Indices of sample pairs whose interval lies inside the segment."""
    i0 = int(np.searchsorted(track.t_s, seg.begin_s, side="left"))
    j = int(np.searchsorted(track.t_s, seg.end_s, side="right")) - 1
    return slice(i0, max(j, i0))


def _check_disjoint(segs: Sequence[Segment]) -> list[Segment]:
    ordered = sorted(segs, key=lambda s: s.begin_s)
    for a, b in zip(ordered, ordered[1:]):
        if b.begin_s < a.end_s:
            raise ValidationError("metric segments must be disjoint")
    return ordered


def _aggregate(agg: str, parts: list[tuple[float, float]]) -> float | None:
    """Combine per-segment (value, weight) parts; None when nothing usable."""
    if not parts:
        return None
    if agg == ADDITIVE:
        return float(sum(v for v, _ in parts))
    if agg == MAX_OVER:
        return float(max(v for v, _ in parts))
    if agg == DURATION_WEIGHTED_MEAN:
        total_w = sum(w for _, w in parts)
        if total_w <= 0:
            return None
        return float(sum(v * w for v, w in parts) / total_w)
    raise InvalidConfig(f"unknown aggregation {agg!r}")


def compute_kinematic_metric(
    spec: MetricSpec, kin: KinematicsStream, segs: Sequence[Segment]
) -> float | None:
    if spec.source != SOURCE_KINEMATIC:
        raise InvalidConfig(f"{spec.name} is not a kinematic metric")
    ordered = _check_disjoint(segs)
    if spec.metric == IDLE_FRACTION:
        return _idle_fraction(spec, kin, ordered)

    track = kin.track(spec.manipulator)
    parts: list[tuple[float, float]] = []
    for seg in ordered:
        sl = _pair_slice(track, seg)
        if sl.stop <= sl.start:
            continue  # no samples in this segment; recorded by omission
        dt = track.pair_dt[sl]
        time = float(dt.sum())
        if spec.metric == PATH_LENGTH:
            parts.append((float(track.pair_displacement[sl].sum()), time))
        elif spec.metric == MEAN_SPEED:
            path = float(track.pair_displacement[sl].sum())
            parts.append((path / time, time))
        elif spec.metric == MAX_SPEED:
            parts.append((float(track.pair_speed[sl].max()), time))
        elif spec.metric == ANGULAR_PATH:
            col = WRIST_AXES.index(spec.axis)
            parts.append((float(track.pair_angle_delta[sl, col].sum()), time))
    return _aggregate(spec.aggregation, parts)


def _idle_fraction(
    spec: MetricSpec, kin: KinematicsStream, ordered: Sequence[Segment]
) -> float | None:
    """Fraction of sampled interval time below the stillness threshold.

    Pooled across both manipulators: each manipulator's in-segment sample
    intervals contribute their dt to the denominator and, when the tip
    speed is below the threshold, to the numerator.
    """
    parts: list[tuple[float, float]] = []
    for seg in ordered:
        idle = 0.0
        total = 0.0
        for arm in kin.manipulators():
            track = kin.tracks[arm]
            sl = _pair_slice(track, seg)
            if sl.stop <= sl.start:
                continue
            dt = track.pair_dt[sl]
            total += float(dt.sum())
            idle += float(dt[track.pair_speed[sl] < spec.speed_threshold_m_s].sum())
        if total > 0:
            parts.append((idle / total, total))
    return _aggregate(spec.aggregation, parts)


# ---------------------------------------------------------------------------
# Event metrics
# ---------------------------------------------------------------------------

def _event_times(events: Sequence[Event], kind: str) -> np.ndarray:
    if kind not in EVENT_KINDS:
        raise UnknownEventKind(f"event kind {kind!r} not in registry")
    return np.asarray([e.t_s for e in events if e.kind == kind], dtype=np.float64)


def compute_event_metric(
    spec: MetricSpec, events: Sequence[Event], segs: Sequence[Segment]
) -> float | None:
    if spec.source != SOURCE_EVENT:
        raise InvalidConfig(f"{spec.name} is not an event metric")
    ordered = _check_disjoint(segs)
    if not ordered:
        return None
    times = _event_times(events, spec.event_kind)

    if spec.metric == EVENT_COUNT:
        total = sum(_count_in(times, seg) for seg in ordered)
        return float(total)

    if spec.metric == EVENT_RATE_PER_MIN:
        parts = [
            (_count_in(times, seg) / (seg.duration_s / 60.0), seg.duration_s)
            for seg in ordered
        ]
        return _aggregate(spec.aggregation, parts)

    if spec.metric == MEAN_INTER_EVENT_INTERVAL:
        # Concatenate segments onto a compressed time axis so gaps never
        # include inter-segment dead time.
        compressed: list[float] = []
        offset = 0.0
        for seg in ordered:
            in_seg = times[(times >= seg.begin_s) & (times < seg.end_s)]
            compressed.extend(offset + (t - seg.begin_s) for t in np.sort(in_seg))
            offset += seg.duration_s
        if len(compressed) < 2:
            return None
        return float(np.mean(np.diff(compressed)))

    raise InvalidConfig(f"unknown event metric {spec.metric!r}")


def _count_in(times: np.ndarray, seg: Segment) -> int:
    lo = int(np.searchsorted(times, seg.begin_s, side="left"))
    hi = int(np.searchsorted(times, seg.end_s, side="left"))
    return hi - lo


# ---------------------------------------------------------------------------
# Whole-registry evaluation
# ---------------------------------------------------------------------------

def compute_metrics(
    registry: MetricRegistry, record: ProcedureRecord, segset: SegmentSet
) -> list[MetricVector]:
    """One MetricVector per task present in the segment set, in task order."""
    vectors = []
    for task in segset.tasks():
        segs = segset.segments_for(task)
        values: dict[str, float | None] = {}
        for spec in registry.all_specs():
            if spec.source == SOURCE_KINEMATIC:
                values[spec.name] = compute_kinematic_metric(spec, record.kinematics, segs)
            else:
                values[spec.name] = compute_event_metric(spec, record.events, segs)
        vectors.append(
            MetricVector(
                procedure_id=record.procedure_id,
                task=task,
                values=values,
                coverage_s=segset.coverage_s(task),
            )
        )
    return vectors


METRICS_CSV_COLUMNS = ("procedure_id", "task_id", "metric_name", "value", "missing", "coverage_s")


def metrics_to_rows(vectors: Sequence[MetricVector], registry: MetricRegistry) -> list[list]:
    """Flatten metric vectors into metrics.csv rows (registry order)."""
    rows = []
    for vec in vectors:
        for spec in registry.all_specs():
            value = vec.values[spec.name]
            rows.append(
                [
                    vec.procedure_id,
                    vec.task,
                    spec.name,
                    "" if value is None else value,
                    "true" if value is None else "false",
                    vec.coverage_s,
                ]
            )
    return rows
