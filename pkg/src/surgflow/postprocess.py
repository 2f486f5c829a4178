"""Post-processing of raw per-frame predictions.

Two stages: a running-window median filter that removes short
misclassification spikes, and segment selection that turns the cleaned
stream into per-task boundaries (either the single longest run per task or
every run).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelStream, Run, SegmentMode, SegmentSet, labels_to_runs, runs_to_segment_set
from .errors import EvenWindow, InvalidConfig

DEFAULT_WINDOW = 301


@dataclass(frozen=True)
class FilterConfig:
    """Median filter window length in frames; must be odd.

    The 301-frame default suits prostatectomy-scale tasks and has to be
    re-tuned for procedures with much shorter or longer tasks.
    """

    window_w: int = DEFAULT_WINDOW

    def __post_init__(self):
        if self.window_w < 1:
            raise InvalidConfig(f"window must be >= 1, got {self.window_w}")
        if self.window_w % 2 == 0:
            raise EvenWindow(f"window must be odd, got {self.window_w}")


def median_filter(labels: LabelStream, cfg: FilterConfig = FilterConfig()) -> LabelStream:
    """Running median over integer task ids with centered truncated windows.

    The window at frame i has radius ``min(i, n-1-i, (W-1)/2)``, so the
    window is always odd-sized and symmetric; W=1 is the identity. The
    output at each frame is an element of that frame's window.
    """
    arr = labels.labels
    n = arr.size
    w = cfg.window_w
    radius = (w - 1) // 2
    if radius == 0 or n == 1:
        return labels
    out = np.empty(n, dtype=arr.dtype)

    if n >= w:
        # Interior frames all use the full window: one vectorized sort.
        windows = np.lib.stride_tricks.sliding_window_view(arr, w)
        out[radius : n - radius] = np.sort(windows, axis=1)[:, radius]
        edges = list(range(radius)) + list(range(n - radius, n))
    else:
        edges = list(range(n))
    for i in edges:
        r = min(i, n - 1 - i, radius)
        out[i] = np.sort(arr[i - r : i + r + 1])[r]
    return LabelStream(out, labels.frame_rate_hz, labels.start_time_s)


def select_longest_segments(labels: LabelStream) -> SegmentSet:
    """Keep, per task, the maximal-duration run; earliest run wins ties."""
    best: dict[int, Run] = {}
    for run in labels_to_runs(labels):
        if run.task == 0:
            continue
        cur = best.get(run.task)
        if cur is None or (run.end_s - run.begin_s) > (cur.end_s - cur.begin_s):
            best[run.task] = run
    return runs_to_segment_set(best.values(), SegmentMode.LONGEST_ONLY)


def select_all_segments(labels: LabelStream) -> SegmentSet:
    """Every maximal non-idle run becomes a segment, in time order."""
    return runs_to_segment_set(labels_to_runs(labels), SegmentMode.ALL_SEGMENTS)
