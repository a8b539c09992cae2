"""Dual visible/thermal multi-object tracking: dataset tools, trackers,
and evaluation metrics, with a small token-fusion module on the side."""

__version__ = "0.1.0"

from .assignment import Assignment, Box, hungarian, iou, iou_matrix, match_with_threshold
from .data import (
    AnnotationRecord,
    AnnotationSet,
    DatasetStats,
    Detection,
    FormatError,
    SequenceMeta,
    TrajectorySet,
    dataset_stats,
)
from .metrics import (
    ALPHAS,
    DEFAULT_IOU_THRESHOLD,
    EvaluationReport,
    SequenceItem,
    clear_metrics,
    evaluate,
    evaluate_pair,
    hota,
    idf1,
)
from .tracker import TrackerConfig, merge_modal_detections, track_sequence

__all__ = [
    "ALPHAS", "Assignment", "AnnotationRecord", "AnnotationSet", "Box",
    "DEFAULT_IOU_THRESHOLD", "DatasetStats", "Detection", "EvaluationReport",
    "FormatError", "SequenceItem", "SequenceMeta", "TrackerConfig",
    "TrajectorySet", "clear_metrics", "dataset_stats", "evaluate",
    "evaluate_pair", "hota", "hungarian", "idf1", "iou", "iou_matrix",
    "match_with_threshold", "merge_modal_detections", "track_sequence",
]
