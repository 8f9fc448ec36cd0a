"""Toolkit for hierarchical vessel/material scene annotations.

Defines a canonical annotation file format (RLE masks, class taxonomy,
containment/connectivity relations), computes semantic, panoptic (standard
and class-agnostic), per-vessel and relationship evaluation metrics, and
provides a framework-free numeric reference of the matching-based losses.
"""

from .annotations import (
    AnnotationError,
    AnnotationSchemaError,
    AnnotationSemanticError,
    AnnotationSyntaxError,
    Instance,
    Relation,
    SceneAnnotation,
    Violation,
    direct_content_of,
    parse_scene,
    serialize_scene,
    validate_scene,
)
from .masks import (
    BinaryMask,
    DimensionMismatchError,
    EmptyMaskError,
    area,
    intersection_area,
    iou,
    overlap_fraction,
    rle_decode,
    rle_encode,
    union_area,
    union_masks,
)
from .matching import (
    CapacityError,
    MatchResult,
    assign_classes_to_instances,
    hungarian_assign,
    iou_matrix,
    pad_instances,
    pq_match,
)
from .metrics import (
    AgnosticCounters,
    MacroStats,
    MetricReport,
    PanopticCounters,
    PanopticQuality,
    RelationCounters,
    RelationScores,
    ReportConfigError,
    SemanticCounters,
    SemanticScores,
    aggregate_reports,
    class_agnostic_panoptic,
    evaluate_scene,
    panoptic_metrics,
    per_vessel_content_eval,
    relationship_metrics,
    semantic_metrics,
    split_false_positives,
    standard_panoptic,
)
from .losses import (
    DEFAULT_SLOT_COUNT,
    LogitPair,
    cross_entropy_gradient,
    instance_loss,
    pixel_cross_entropy,
    semantic_loss,
    softmax_pair,
)
from .synthetic import (
    ExpectedMetrics,
    Perturbation,
    SyntheticPlan,
    generate_dataset,
    generate_scene,
    load_expected_metrics,
    nested_demo_scene,
)
from .taxonomy import DEFAULT_TAXONOMY, Taxonomy

__version__ = "0.1.0"
