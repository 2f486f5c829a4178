import numpy as np
import pytest

from surgflow.core import (
    Event,
    KinematicsStream,
    Segment,
    SegmentMode,
    SegmentSet,
)
from surgflow.errors import InvalidConfig, UnknownEventKind, UnknownManipulator
from surgflow.metrics import (
    MetricSpec,
    SOURCE_EVENT,
    SOURCE_KINEMATIC,
    compute_event_metric,
    compute_kinematic_metric,
    compute_metrics,
    default_registry,
    load_registry,
)

from .conftest import make_track, random_walk_track
from .reference import (
    event_count_reference,
    mean_gap_reference,
    path_length_reference,
)

REG = default_registry()


def seg(task, b, e):
    return Segment(task, b, e)


def kin_stream(track, track2=None):
    return KinematicsStream({"PSM1": track, "PSM2": track2 or track})


class TestRegistry:
    def test_default_sizes(self):
        assert len(REG.kinematic_specs) == 13
        assert len(REG.event_specs) == 33

    def test_names_unique_and_deterministic(self):
        again = default_registry()
        assert [s.name for s in again.all_specs()] == [s.name for s in REG.all_specs()]
        assert len({s.name for s in REG.all_specs()}) == 46

    def test_aggregation_consistency_enforced(self):
        with pytest.raises(InvalidConfig):
            MetricSpec("bad", SOURCE_KINEMATIC, "path_length",
                       manipulator="PSM1", aggregation="max_over")

    def test_override_file_roundtrip(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text(
            '[{"name": "em_left", "source": "kinematic", "metric": "path_length",'
            ' "manipulator": "PSM1"},'
            ' {"name": "cam_on", "source": "event", "metric": "event_count",'
            ' "event_kind": "camera_control_on"}]'
        )
        reg = load_registry(path)
        assert [s.name for s in reg.all_specs()] == ["em_left", "cam_on"]
        assert reg.spec("em_left").aggregation == "additive"

    def test_override_file_rejects_unknown_fields(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text('[{"name": "x", "source": "event", "metric": "event_count",'
                        ' "event_kind": "energy_on", "bogus": 1}]')
        with pytest.raises(InvalidConfig):
            load_registry(path)


class TestKinematicMetrics:
    def test_constant_velocity_line(self):
        # 0.01 m/s along x for 10 s sampled at 50 Hz, inclusive of both ends.
        t = np.arange(501) * 0.02
        pos = np.zeros((501, 3))
        pos[:, 0] = 0.01 * t
        kin = kin_stream(make_track(t, position=pos))
        spec = REG.spec("path_length_psm1")
        value = compute_kinematic_metric(spec, kin, [seg(1, 0.0, 10.0)])
        assert value == pytest.approx(0.1, rel=1e-12)
        speed = compute_kinematic_metric(REG.spec("mean_speed_psm1"), kin, [seg(1, 0.0, 10.0)])
        assert speed == pytest.approx(0.01, rel=1e-12)
        vmax = compute_kinematic_metric(REG.spec("max_speed_psm1"), kin, [seg(1, 0.0, 10.0)])
        assert vmax == pytest.approx(0.01, rel=1e-9)

    def test_stationary_tip(self):
        t = np.arange(100) * 0.02
        kin = kin_stream(make_track(t))
        assert compute_kinematic_metric(REG.spec("path_length_psm1"), kin, [seg(1, 0.0, 2.0)]) == 0.0
        assert compute_kinematic_metric(REG.spec("idle_fraction"), kin, [seg(1, 0.0, 2.0)]) == 1.0

    def test_random_walk_matches_bruteforce(self, rng):
        track = random_walk_track(rng, n=1200)
        kin = kin_stream(track, random_walk_track(rng, n=1200))
        segments = [seg(1, 5.0, 15.0)]
        value = compute_kinematic_metric(REG.spec("path_length_psm1"), kin, segments)
        ref = path_length_reference(track.t_s, track.position, [(5.0, 15.0)])
        assert value == pytest.approx(ref, rel=1e-12)

    def test_no_samples_in_segment_is_missing(self):
        t = np.arange(100) * 0.02  # covers [0, 2)
        kin = kin_stream(make_track(t))
        value = compute_kinematic_metric(REG.spec("path_length_psm1"), kin, [seg(1, 50.0, 60.0)])
        assert value is None

    def test_unknown_manipulator_raises(self):
        spec = MetricSpec("pl_cam", SOURCE_KINEMATIC, "path_length", manipulator="PSM2")
        t = np.arange(10) * 0.02
        kin = KinematicsStream({"PSM1": make_track(t)})
        with pytest.raises(UnknownManipulator):
            compute_kinematic_metric(spec, kin, [seg(1, 0.0, 0.1)])

    def test_additivity_at_sample_instant(self, rng):
        track = random_walk_track(rng, n=1000)
        kin = kin_stream(track)
        spec = REG.spec("path_length_psm1")
        # 8.0 s is exactly a sample instant at 50 Hz.
        left = compute_kinematic_metric(spec, kin, [seg(1, 2.0, 8.0)])
        right = compute_kinematic_metric(spec, kin, [seg(1, 8.0, 16.0)])
        whole = compute_kinematic_metric(spec, kin, [seg(1, 2.0, 16.0)])
        assert left + right == pytest.approx(whole, rel=1e-9)
        # Split segments aggregate additively too.
        split = compute_kinematic_metric(spec, kin, [seg(1, 2.0, 8.0), seg(1, 8.0, 16.0)])
        assert split == pytest.approx(whole, rel=1e-9)

    def test_mean_speed_duration_weighted_consistency(self, rng):
        track = random_walk_track(rng, n=1500)
        kin = kin_stream(track)
        pieces = [seg(1, 1.0, 7.0), seg(1, 9.0, 14.0), seg(1, 20.0, 29.96)]
        mean = compute_kinematic_metric(REG.spec("mean_speed_psm1"), kin, pieces)
        total_path = compute_kinematic_metric(REG.spec("path_length_psm1"), kin, pieces)
        total_time = 0.0
        for piece in pieces:
            i0 = np.searchsorted(track.t_s, piece.begin_s, "left")
            j = np.searchsorted(track.t_s, piece.end_s, "right") - 1
            total_time += track.t_s[j] - track.t_s[i0]
        assert mean == pytest.approx(total_path / total_time, rel=1e-9)

    def test_enlarging_segment_never_decreases_path(self, rng):
        track = random_walk_track(rng, n=900)
        kin = kin_stream(track)
        spec = REG.spec("path_length_psm1")
        values = [
            compute_kinematic_metric(spec, kin, [seg(1, 1.0, end)])
            for end in (3.0, 6.0, 9.0, 15.0)
        ]
        assert values == sorted(values)

    def test_angular_path_wraps_deltas(self):
        t = np.array([0.0, 1.0, 2.0])
        wrist = np.zeros((3, 3))
        wrist[:, 0] = [3.0, -3.0, 3.0]  # crosses the pi boundary twice
        kin = kin_stream(make_track(t, wrist=wrist))
        value = compute_kinematic_metric(
            REG.spec("angular_path_roll_psm1"), kin, [seg(1, 0.0, 2.0)]
        )
        # Each hop is 2*pi - 6 through the wrap, not 6.
        assert value == pytest.approx(2 * (2 * np.pi - 6.0), rel=1e-12)

    def test_all_values_finite_or_missing(self, rng):
        record = _random_record(rng)
        vectors = compute_metrics(REG, record, record.ground_truth)
        for vec in vectors:
            for name, value in vec.values.items():
                assert value is None or np.isfinite(value), name


class TestEventMetrics:
    def test_membership_enumeration(self):
        events = tuple(Event(t, "camera_control_on") for t in (5.0, 15.0, 25.0))
        spec = REG.spec("count_camera_control_on")
        assert compute_event_metric(spec, events, [seg(1, 0.0, 20.0)]) == 2.0

    def test_no_matching_events_counts_zero(self):
        events = (Event(1.0, "energy_on"),)
        spec = REG.spec("count_camera_control_on")
        assert compute_event_metric(spec, events, [seg(1, 0.0, 20.0)]) == 0.0

    def test_split_segments_exclude_gap(self):
        events = tuple(Event(t, "camera_control_on") for t in (5.0, 15.0, 25.0))
        spec = REG.spec("count_camera_control_on")
        segs = [seg(1, 0.0, 10.0), seg(1, 20.0, 30.0)]
        assert compute_event_metric(spec, events, segs) == 2.0

    def test_rate_is_count_over_total_minutes(self):
        events = tuple(Event(t, "energy_on") for t in (1.0, 2.0, 25.0))
        spec = REG.spec("rate_per_min_energy_on")
        segs = [seg(1, 0.0, 10.0), seg(1, 20.0, 30.0)]
        value = compute_event_metric(spec, events, segs)
        assert value == pytest.approx(3.0 / (20.0 / 60.0), rel=1e-12)

    def test_mean_gap_uses_compressed_axis(self):
        # Events at 8 and 22: segments [0,10) and [20,30) put them 4 s apart
        # on the compressed axis (2 to segment end, 2 into the next).
        events = (Event(8.0, "clutch_on"), Event(22.0, "clutch_on"))
        spec = REG.spec("mean_gap_s_clutch_on")
        segs = [seg(1, 0.0, 10.0), seg(1, 20.0, 30.0)]
        value = compute_event_metric(spec, events, segs)
        assert value == pytest.approx(4.0, rel=1e-12)
        ref = mean_gap_reference([8.0, 22.0], [(0.0, 10.0), (20.0, 30.0)])
        assert value == pytest.approx(ref, rel=1e-12)

    def test_fewer_than_two_events_is_missing(self):
        events = (Event(5.0, "head_in"),)
        spec = REG.spec("mean_gap_s_head_in")
        assert compute_event_metric(spec, events, [seg(1, 0.0, 10.0)]) is None

    def test_unknown_kind_rejected(self):
        spec = MetricSpec("n_energy", SOURCE_EVENT, "event_count", event_kind="energy_on")
        object.__setattr__(spec, "event_kind", "teleport")
        with pytest.raises(UnknownEventKind):
            compute_event_metric(spec, (), [seg(1, 0.0, 1.0)])

    def test_count_matches_bruteforce(self, rng):
        times = np.sort(rng.uniform(0, 100, 80))
        events = tuple(Event(float(t), "arm_swap") for t in times)
        segs = [seg(1, 10.0, 30.0), seg(1, 45.0, 47.5), seg(1, 80.0, 99.0)]
        spec = REG.spec("count_arm_swap")
        value = compute_event_metric(spec, events, segs)
        ref = event_count_reference(times, [(10.0, 30.0), (45.0, 47.5), (80.0, 99.0)])
        assert value == ref


def _random_record(rng, seed_events=True):
    from surgflow.synth import SynthConfig, generate_procedure

    return generate_procedure(
        SynthConfig(seed=int(rng.integers(0, 2**31)), n_tasks=6,
                    task_duration_s=(20, 80), gap_duration_s=(0, 10),
                    kinematics_rate_hz=10.0)
    )


class TestComputeMetrics:
    def test_single_segment_equals_direct_computation(self, rng):
        record = _random_record(rng)
        vectors = compute_metrics(REG, record, record.ground_truth)
        task = vectors[0].task
        segs = record.ground_truth.segments_for(task)
        for spec in REG.kinematic_specs:
            direct = compute_kinematic_metric(spec, record.kinematics, segs)
            assert vectors[0].values[spec.name] == direct

    def test_all_segments_with_single_run_equals_longest(self, rng):
        record = _random_record(rng)
        labels = record.labels_gt
        from surgflow.postprocess import select_all_segments, select_longest_segments

        all_set = select_all_segments(labels)
        longest_set = select_longest_segments(labels)
        v_all = compute_metrics(REG, record, all_set)
        v_longest = compute_metrics(REG, record, longest_set)
        for a, b in zip(v_all, v_longest):
            assert a.task == b.task
            assert a.values == b.values

    def test_empty_segset_yields_empty_list(self, rng):
        record = _random_record(rng)
        empty = SegmentSet(SegmentMode.ALL_SEGMENTS, {})
        assert compute_metrics(REG, record, empty) == []

    def test_every_registry_name_present(self, rng):
        record = _random_record(rng)
        vectors = compute_metrics(REG, record, record.ground_truth)
        names = {s.name for s in REG.all_specs()}
        for vec in vectors:
            assert set(vec.values) == names
            assert vec.coverage_s == record.ground_truth.coverage_s(vec.task)

    def test_event_metrics_invariant_under_file_permutation(self, rng, tmp_path):
        from surgflow.core import load_procedure_dir, write_procedure_dir

        record = _random_record(rng)
        d = tmp_path / record.procedure_id
        write_procedure_dir(record, d)
        original = load_procedure_dir(d)
        lines = (d / "events.csv").read_text().splitlines()
        header, rows = lines[0], lines[1:]
        perm = list(rng.permutation(len(rows)))
        (d / "events.csv").write_text("\n".join([header] + [rows[i] for i in perm]) + "\n")
        reloaded = load_procedure_dir(d)
        base = compute_metrics(REG, original, original.ground_truth)
        shuffled = compute_metrics(REG, reloaded, reloaded.ground_truth)
        for a, b in zip(base, shuffled):
            for spec in REG.event_specs:
                assert a.values[spec.name] == b.values[spec.name]
