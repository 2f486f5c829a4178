import numpy as np
import pytest

from surgflow.core import (
    KinematicsStream,
    KinematicsTrack,
    ProcedureRecord,
    Segment,
    SegmentMode,
    SegmentSet,
    annotation_to_labels,
)


def make_track(t, position=None, wrist=None):
    t = np.asarray(t, dtype=float)
    if position is None:
        position = np.zeros((t.size, 3))
    if wrist is None:
        wrist = np.zeros((t.size, 3))
    return KinematicsTrack(t, np.asarray(position, float), np.asarray(wrist, float))


def make_record(
    procedure_id="p-test",
    segments=((1, 0.0, 10.0),),
    duration_s=20.0,
    tracks=None,
    events=(),
):
    by_task = {}
    for task, b, e in segments:
        by_task.setdefault(task, []).append(Segment(task, b, e))
    segset = SegmentSet(
        SegmentMode.LONGEST_ONLY, {t: tuple(v) for t, v in by_task.items()}
    )
    labels = annotation_to_labels(segset, duration_s, 1.0)
    if tracks is None:
        t = np.arange(int(duration_s * 10)) / 10.0
        tracks = {"PSM1": make_track(t), "PSM2": make_track(t)}
    return ProcedureRecord(
        procedure_id=procedure_id,
        ground_truth=segset,
        labels_gt=labels,
        kinematics=KinematicsStream(tracks),
        events=tuple(sorted(events, key=lambda e: (e.t_s, e.kind))),
        duration_s=duration_s,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_walk_track(rng, n=800, rate_hz=50.0, step_m=0.001):
    t = np.arange(n) / rate_hz
    pos = np.cumsum(rng.normal(0.0, step_m, (n, 3)), axis=0)
    wrist = np.cumsum(rng.normal(0.0, 0.02, (n, 3)), axis=0)
    return KinematicsTrack(t, pos, wrist)
