"""Deterministic synthetic procedures and controlled prediction noise.

Every output is a pure function of its config, seed included. Randomness
comes from numpy's PCG64 generator rooted in a ``SeedSequence`` of the
config seed, with one spawned child per concern (layout, each
manipulator's trajectory, events, noise), so changing one knob never
reshuffles unrelated draws.

Task and gap durations are drawn as whole seconds. That puts every
ground-truth boundary on the 1 Hz label grid, which makes rasterization
exactly invertible: predictions equal to ground truth reproduce the
ground-truth boundaries and metrics bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.signal import lfilter

from .core import (
    EVENT_KINDS,
    MANIPULATORS,
    Event,
    KinematicsStream,
    KinematicsTrack,
    LabelStream,
    ProcedureRecord,
    Segment,
    SegmentMode,
    SegmentSet,
    annotation_to_labels,
)
from .errors import InvalidConfig

SPIKE_LABEL_UNIFORM = "uniform_random_task"
SPIKE_LABEL_ADJACENT = "adjacent_task"

DEFAULT_EVENT_RATES_PER_MIN: Mapping[str, float] = {
    "camera_control_on": 1.5,
    "camera_control_off": 1.5,
    "energy_on": 3.0,
    "energy_off": 3.0,
    "clutch_on": 1.2,
    "clutch_off": 1.2,
    "head_in": 0.3,
    "head_out": 0.3,
    "arm_swap": 0.2,
    "instrument_change_left": 0.1,
    "instrument_change_right": 0.1,
}

# Wrist-angle random walk; not exposed in the config because no metric
# contract depends on the exact scale, only on variability across seeds.
_WRIST_DAMPING = 0.995
_WRIST_NOISE_RAD = 0.01
_BURST_SPREAD_S = 2.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_tasks: int = 12
    task_duration_s: tuple[float, float] = (120.0, 900.0)
    gap_duration_s: tuple[float, float] = (0.0, 60.0)
    kinematics_rate_hz: float = 50.0
    label_rate_hz: float = 1.0
    velocity_damping: float = 0.9
    velocity_noise_m: float = 0.002
    event_rates_per_min: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_EVENT_RATES_PER_MIN)
    )
    burstiness: float = 0.0

    def __post_init__(self):
        if not (1 <= self.n_tasks <= 12):
            raise InvalidConfig(f"n_tasks {self.n_tasks} outside 1..12")
        for name, (lo, hi) in (
            ("task_duration_s", self.task_duration_s),
            ("gap_duration_s", self.gap_duration_s),
        ):
            if lo > hi or lo < 0:
                raise InvalidConfig(f"{name} range ({lo}, {hi}) invalid")
        if self.task_duration_s[1] < 1.0:
            raise InvalidConfig("tasks must allow at least 1 s")
        if self.kinematics_rate_hz <= 0 or self.label_rate_hz <= 0:
            raise InvalidConfig("rates must be positive")
        if not (0.0 < self.velocity_damping < 1.0):
            raise InvalidConfig("velocity_damping must be in (0, 1)")
        if self.velocity_noise_m < 0:
            raise InvalidConfig("velocity_noise_m must be >= 0")
        if self.burstiness < 0:
            raise InvalidConfig("burstiness must be >= 0")
        for kind, rate in self.event_rates_per_min.items():
            if kind not in EVENT_KINDS:
                raise InvalidConfig(f"unknown event kind {kind!r}")
            if rate < 0:
                raise InvalidConfig(f"rate for {kind} must be >= 0")


@dataclass(frozen=True)
class NoiseConfig:
    boundary_jitter_std_s: float = 0.0
    spike_rate_per_min: float = 0.0
    spike_duration_s: tuple[float, float] = (3.0, 10.0)
    spike_label: str = SPIKE_LABEL_UNIFORM
    seed: int = 0

    def __post_init__(self):
        if self.boundary_jitter_std_s < 0:
            raise InvalidConfig("boundary_jitter_std_s must be >= 0")
        if self.spike_rate_per_min < 0:
            raise InvalidConfig("spike_rate_per_min must be >= 0")
        lo, hi = self.spike_duration_s
        if lo > hi or lo <= 0:
            raise InvalidConfig(f"spike_duration_s range ({lo}, {hi}) invalid")
        if self.spike_label not in (SPIKE_LABEL_UNIFORM, SPIKE_LABEL_ADJACENT):
            raise InvalidConfig(f"unknown spike_label {self.spike_label!r}")

    @property
    def is_zero(self) -> bool:
        return self.boundary_jitter_std_s == 0 and self.spike_rate_per_min == 0


def _spawn(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def generate_procedure(cfg: SynthConfig) -> ProcedureRecord:
    """Build one fully deterministic synthetic procedure from the config."""
    rng_layout, rng_psm1, rng_psm2, rng_events = _spawn(cfg.seed, 4)

    # Sequential layout: gap, task 1, gap, ..., task n, gap (whole seconds).
    dur_lo, dur_hi = (int(math.ceil(cfg.task_duration_s[0])), int(cfg.task_duration_s[1]))
    gap_lo, gap_hi = (int(math.ceil(cfg.gap_duration_s[0])), int(cfg.gap_duration_s[1]))
    dur_lo = max(dur_lo, 1)
    segments: dict[int, tuple[Segment, ...]] = {}
    cursor = int(rng_layout.integers(gap_lo, gap_hi + 1))
    for task in range(1, cfg.n_tasks + 1):
        dur = int(rng_layout.integers(dur_lo, dur_hi + 1))
        segments[task] = (Segment(task, float(cursor), float(cursor + dur)),)
        cursor += dur
        cursor += int(rng_layout.integers(gap_lo, gap_hi + 1))
    duration_s = float(cursor)

    ground_truth = SegmentSet(SegmentMode.LONGEST_ONLY, segments)
    labels_gt = annotation_to_labels(ground_truth, duration_s, cfg.label_rate_hz)

    tracks = {
        MANIPULATORS[0]: _trajectory(cfg, duration_s, rng_psm1),
        MANIPULATORS[1]: _trajectory(cfg, duration_s, rng_psm2),
    }
    events = _events(cfg, duration_s, rng_events)

    return ProcedureRecord(
        procedure_id=f"proc-{cfg.seed:08d}",
        ground_truth=ground_truth,
        labels_gt=labels_gt,
        kinematics=KinematicsStream(tracks),
        events=events,
        duration_s=duration_s,
    )


def _trajectory(cfg: SynthConfig, duration_s: float, rng: np.random.Generator) -> KinematicsTrack:
    """Damped random-walk velocity, integrated to tip positions."""
    n = int(math.floor(duration_s * cfg.kinematics_rate_hz))
    dt = 1.0 / cfg.kinematics_rate_hz
    t = np.arange(n, dtype=np.float64) * dt

    noise = rng.standard_normal((n, 3)) * cfg.velocity_noise_m
    velocity = lfilter([1.0], [1.0, -cfg.velocity_damping], noise, axis=0)
    position = np.cumsum(velocity * dt, axis=0)

    angle_noise = rng.standard_normal((n, 3)) * _WRIST_NOISE_RAD
    angles = lfilter([1.0], [1.0, -_WRIST_DAMPING], angle_noise, axis=0)
    wrist = np.pi - np.mod(np.pi - angles, 2.0 * np.pi)  # wrap to (-pi, pi]

    return KinematicsTrack(t_s=t, position=position, wrist=wrist)


def _events(cfg: SynthConfig, duration_s: float, rng: np.random.Generator) -> tuple[Event, ...]:
    """Per-kind Poisson processes, optionally clustered into bursts.

    With burstiness b, cluster centers arrive at rate/(1+b) and carry
    1+Poisson(b) events each, so the expected count stays rate*duration.
    """
    events: list[Event] = []
    minutes = duration_s / 60.0
    for kind in EVENT_KINDS:  # fixed iteration order keeps draws stable
        rate = cfg.event_rates_per_min.get(kind, 0.0)
        if rate <= 0:
            continue
        if cfg.burstiness == 0:
            count = int(rng.poisson(rate * minutes))
            times = rng.uniform(0.0, duration_s, count)
        else:
            n_centers = int(rng.poisson(rate * minutes / (1.0 + cfg.burstiness)))
            centers = rng.uniform(0.0, duration_s, n_centers)
            times_list = []
            for center in centers:
                size = 1 + int(rng.poisson(cfg.burstiness))
                burst = center + rng.normal(0.0, _BURST_SPREAD_S, size)
                times_list.append(burst)
            times = np.concatenate(times_list) if times_list else np.empty(0)
            times = np.clip(times, 0.0, np.nextafter(duration_s, 0.0))
        events.extend(Event(float(ts), kind) for ts in np.sort(times))
    events.sort(key=lambda e: (e.t_s, e.kind))
    return tuple(events)


def perturb_predictions(gt_labels: LabelStream, noise: NoiseConfig) -> LabelStream:
    """Degrade ground-truth labels by boundary jitter and label spikes.

    Boundary shifts are drawn per run boundary from N(0, std), rounded to
    the frame grid, and clamped so run order is preserved and every run
    keeps at least one frame. Spikes are Poisson-placed constant runs
    with sampled duration and label. A zero config returns the input
    unchanged.
    """
    if noise.is_zero:
        return gt_labels
    rng_jitter, rng_spikes = _spawn(noise.seed, 2)
    arr = np.array(gt_labels.labels)
    n = arr.size
    rate = gt_labels.frame_rate_hz

    if noise.boundary_jitter_std_s > 0:
        bounds = np.flatnonzero(np.diff(arr)) + 1
        run_tasks = arr[np.concatenate(([0], bounds))]
        sigma = noise.boundary_jitter_std_s * rate
        shifted = []
        prev = 0
        n_bounds = bounds.size
        for k, b in enumerate(bounds):
            proposal = int(round(b + rng_jitter.normal(0.0, sigma)))
            lo = prev + 1
            hi = n - (n_bounds - k)
            shifted.append(min(max(proposal, lo), hi))
            prev = shifted[-1]
        rebuilt = np.empty(n, dtype=arr.dtype)
        starts = [0] + shifted
        ends = shifted + [n]
        for task, i, j in zip(run_tasks, starts, ends):
            rebuilt[i:j] = task
        arr = rebuilt

    if noise.spike_rate_per_min > 0:
        runs = _run_spans(arr)
        n_spikes = int(rng_spikes.poisson(noise.spike_rate_per_min * n / rate / 60.0))
        lo_s, hi_s = noise.spike_duration_s
        for _ in range(n_spikes):
            start = int(rng_spikes.integers(0, n))
            dur_frames = max(1, int(round(rng_spikes.uniform(lo_s, hi_s) * rate)))
            label = _spike_label(noise, rng_spikes, runs, start)
            arr[start : min(n, start + dur_frames)] = label
    return LabelStream(arr, gt_labels.frame_rate_hz, gt_labels.start_time_s)


def _run_spans(arr: np.ndarray) -> list[tuple[int, int, int]]:
    bounds = np.flatnonzero(np.diff(arr)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [arr.size]))
    return [(int(arr[i]), int(i), int(j)) for i, j in zip(starts, ends)]


def _spike_label(
    noise: NoiseConfig,
    rng: np.random.Generator,
    runs: list[tuple[int, int, int]],
    frame: int,
) -> int:
    if noise.spike_label == SPIKE_LABEL_UNIFORM:
        return int(rng.integers(1, 13))
    idx = next(i for i, (_, s, e) in enumerate(runs) if s <= frame < e)
    before = [t for t, _, _ in runs[:idx] if t != 0]
    after = [t for t, _, _ in runs[idx + 1 :] if t != 0]
    candidates = []
    if before:
        candidates.append(before[-1])
    if after:
        candidates.append(after[0])
    if not candidates:
        return int(rng.integers(1, 13))
    return int(candidates[int(rng.integers(0, len(candidates)))])
