"""Task-based efficiency metrics and evaluation for surgical workflow segmentation."""

from .core import (
    EVENT_KINDS,
    MANIPULATORS,
    TASK_NAMES,
    Event,
    KinematicsStream,
    KinematicsTrack,
    LabelStream,
    ProcedureRecord,
    Segment,
    SegmentMode,
    SegmentSet,
    annotation_to_labels,
    labels_to_runs,
    load_procedure,
    load_procedure_dir,
)
from .evaluation import (
    CorrelationStudy,
    boundary_errors,
    correlation_study,
    jaccard_index,
    mcnemar,
    pearson,
    quartile_agreement,
    threshold_buckets,
)
from .metrics import (
    MetricRegistry,
    MetricSpec,
    MetricVector,
    compute_event_metric,
    compute_kinematic_metric,
    compute_metrics,
    default_registry,
)
from .postprocess import (
    FilterConfig,
    median_filter,
    select_all_segments,
    select_longest_segments,
)
from .synth import NoiseConfig, SynthConfig, generate_procedure, perturb_predictions

__version__ = "0.1.0"
