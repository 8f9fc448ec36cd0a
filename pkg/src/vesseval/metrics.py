"""Evaluation metrics over scene annotations.

Semantic IOU/precision/recall, standard and class-agnostic panoptic quality
(PQ = RQ x SQ with RQ = TP/(TP + 0.5(FP+FN)) and SQ = mean matched IOU),
fractional false-positive splitting for the class-agnostic mode, per-vessel
content evaluation with macro averaging, and relationship precision/recall/
IOU.  Every report carries mergeable raw counters; merged counters equal a
single-pass evaluation of the union.

Undefined (zero-support) metric values are ``None``, never 0 or 1; averages
skip them and report support counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Collection, Iterable, Mapping, NamedTuple, Optional, Sequence

from .annotations import Instance, Relation, SceneAnnotation, direct_content_of
from .masks import BinaryMask, DimensionMismatchError, intersection_area, union_masks
from .matching import pq_match
from .taxonomy import DEFAULT_TAXONOMY, KIND_VESSEL, Taxonomy

__all__ = [
    "AgnosticCounters",
    "MacroStats",
    "MetricReport",
    "PanopticCounters",
    "PanopticQuality",
    "PerVesselStats",
    "RelationCounters",
    "RelationScores",
    "ReportConfigError",
    "SemanticCounters",
    "SemanticScores",
    "aggregate_reports",
    "class_agnostic_panoptic",
    "evaluate_scene",
    "panoptic_metrics",
    "per_vessel_content_eval",
    "relationship_metrics",
    "semantic_metrics",
    "split_false_positives",
    "standard_panoptic",
]

REPORT_FORMAT = "metric_report_v1"
RELATION_EVAL_CLASSES = ("linked", "inside", "contain", "none")
MACRO_METRICS = (
    "semantic_iou", "semantic_precision", "semantic_recall",
    "with_class_pq", "with_class_sq", "with_class_rq",
    "agnostic_pq", "agnostic_sq", "agnostic_rq",
)


class ReportConfigError(ValueError):
    """Reports with mismatched configurations cannot be merged."""


# ---------------------------------------------------------------------------
# counters

@dataclass(frozen=True)
class SemanticCounters:
    """Per-class pixel counts; union == gt + pred - intersection by construction."""

    intersection_px: int = 0
    union_px: int = 0
    gt_px: int = 0
    pred_px: int = 0

    def __add__(self, other: "SemanticCounters") -> "SemanticCounters":
        return SemanticCounters(
            self.intersection_px + other.intersection_px,
            self.union_px + other.union_px,
            self.gt_px + other.gt_px,
            self.pred_px + other.pred_px,
        )


class SemanticScores(NamedTuple):
    iou: Optional[float]
    precision: Optional[float]
    recall: Optional[float]


@dataclass(frozen=True)
class PanopticCounters:
    """Matched/unmatched segment counts; fp and tp may be fractional in the
    class-agnostic mode."""

    tp: float = 0
    fp: float = 0
    fn: float = 0
    iou_sum: float = 0.0

    def __add__(self, other: "PanopticCounters") -> "PanopticCounters":
        return PanopticCounters(
            self.tp + other.tp, self.fp + other.fp,
            self.fn + other.fn, self.iou_sum + other.iou_sum,
        )


class PanopticQuality(NamedTuple):
    pq: Optional[float]
    sq: Optional[float]
    rq: Optional[float]


@dataclass(frozen=True)
class AgnosticCounters:
    """Mergeable raw class-agnostic counters.

    The per-class fractional FP is derived at read time from gt_count and the
    set-wide unmatched-prediction total, so merged counters split FPs by the
    whole evaluated set's class fractions.
    """

    tp: int = 0
    fn: int = 0
    iou_sum: float = 0.0
    gt_count: int = 0

    def __add__(self, other: "AgnosticCounters") -> "AgnosticCounters":
        return AgnosticCounters(
            self.tp + other.tp, self.fn + other.fn,
            self.iou_sum + other.iou_sum, self.gt_count + other.gt_count,
        )


@dataclass(frozen=True)
class RelationCounters:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "RelationCounters") -> "RelationCounters":
        return RelationCounters(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def support(self) -> int:
        return self.tp + self.fp + self.fn


class RelationScores(NamedTuple):
    precision: Optional[float]
    recall: Optional[float]
    iou: Optional[float]


@dataclass(frozen=True)
class MacroStats:
    """Running sum of a per-vessel metric over the vessels where it was defined."""

    total: float = 0.0
    support: int = 0

    def __add__(self, other: "MacroStats") -> "MacroStats":
        return MacroStats(self.total + other.total, self.support + other.support)

    @property
    def mean(self) -> Optional[float]:
        return self.total / self.support if self.support else None


# ---------------------------------------------------------------------------
# elementary metric derivations

def semantic_metrics(
    pred_maps: Mapping[str, BinaryMask],
    gt_maps: Mapping[str, BinaryMask],
    *,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> tuple[dict[str, SemanticScores], dict[str, SemanticCounters]]:
    """Per-class pixel scores from per-class masks.

    iou = I/U, precision = I/pred_px, recall = I/gt_px.  A class with no gt
    and no pred pixels is absent from the output; a one-sided empty map
    yields 0 for the ratio whose denominator vanished.
    """
    classes = sorted(set(pred_maps) | set(gt_maps))
    unknown = [c for c in classes if not taxonomy.is_known(c)]
    if unknown:
        raise KeyError(f"class keys not in taxonomy: {unknown}")
    dims = None
    for m in list(pred_maps.values()) + list(gt_maps.values()):
        if dims is None:
            dims = (m.width, m.height)
        elif dims != (m.width, m.height):
            raise DimensionMismatchError("all semantic maps must share dimensions")
    counters: dict[str, SemanticCounters] = {}
    for cls in classes:
        gt = gt_maps.get(cls)
        pred = pred_maps.get(cls)
        gt_px = gt.area if gt is not None else 0
        pred_px = pred.area if pred is not None else 0
        if gt_px == 0 and pred_px == 0:
            continue
        inter = intersection_area(pred, gt) if gt is not None and pred is not None else 0
        counters[cls] = SemanticCounters(inter, gt_px + pred_px - inter, gt_px, pred_px)
    return {cls: _semantic_scores(c) for cls, c in counters.items()}, counters


def _semantic_scores(c: SemanticCounters) -> SemanticScores:
    if c.gt_px == 0 and c.pred_px == 0:
        return SemanticScores(None, None, None)
    iou = c.intersection_px / c.union_px
    precision = c.intersection_px / c.pred_px if c.pred_px else 0.0
    recall = c.intersection_px / c.gt_px if c.gt_px else 0.0
    return SemanticScores(iou, precision, recall)


def panoptic_metrics(counters: Mapping[str, PanopticCounters]) -> dict[str, PanopticQuality]:
    """RQ = TP/(TP + 0.5(FP+FN)); SQ = iou_sum/TP (undefined at TP=0);
    PQ = RQ x SQ, with PQ = 0 in the TP=0 limit.  Zero-support classes are
    excluded."""
    out: dict[str, PanopticQuality] = {}
    for cls in sorted(counters):
        quality = _panoptic_quality(counters[cls])
        if quality is not None:
            out[cls] = quality
    return out


def _panoptic_quality(c: PanopticCounters) -> Optional[PanopticQuality]:
    if c.tp == 0 and c.fp == 0 and c.fn == 0:
        return None
    rq = c.tp / (c.tp + 0.5 * (c.fp + c.fn))
    if c.tp > 0:
        sq = c.iou_sum / c.tp
        return PanopticQuality(rq * sq, sq, rq)
    return PanopticQuality(0.0, None, 0.0)


def split_false_positives(
    total_agnostic_fp: float, class_fractions: Mapping[str, float]
) -> dict[str, float]:
    """Apportion the class-agnostic FP total to classes by their GT share."""
    fractions = dict(class_fractions)
    if any(f < 0 for f in fractions.values()):
        raise ValueError("class fractions must be non-negative")
    total = sum(fractions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"class fractions must sum to 1, got {total}")
    return {cls: total_agnostic_fp * fractions[cls] for cls in sorted(fractions)}


# ---------------------------------------------------------------------------
# instance-level counting

LabeledMasks = Sequence[tuple[BinaryMask, Collection[str]]]


def standard_panoptic(preds: LabeledMasks, gts: LabeledMasks) -> dict[str, PanopticCounters]:
    """Per-class counters in the with-class mode.

    A matched pair counts as TP for every class both sides carry, FN for
    classes only the GT carries and FP for classes only the prediction
    carries; unmatched segments count for all of their classes.
    """
    result = pq_match(preds, gts, "with_class")
    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    iou_sum: dict[str, float] = {}
    for pred_idx, gt_idx, pair_iou in sorted(result.matches, key=lambda m: m[1]):
        pred_labels = frozenset(preds[pred_idx][1])
        gt_labels = frozenset(gts[gt_idx][1])
        for cls in pred_labels & gt_labels:
            tp[cls] = tp.get(cls, 0) + 1
            iou_sum[cls] = iou_sum.get(cls, 0.0) + pair_iou
        for cls in gt_labels - pred_labels:
            fn[cls] = fn.get(cls, 0) + 1
        for cls in pred_labels - gt_labels:
            fp[cls] = fp.get(cls, 0) + 1
    for gt_idx in result.fn_gt:
        for cls in gts[gt_idx][1]:
            fn[cls] = fn.get(cls, 0) + 1
    for pred_idx in result.fp_pred:
        for cls in preds[pred_idx][1]:
            fp[cls] = fp.get(cls, 0) + 1
    return {
        cls: PanopticCounters(tp.get(cls, 0), fp.get(cls, 0), fn.get(cls, 0), iou_sum.get(cls, 0.0))
        for cls in sorted(set(tp) | set(fp) | set(fn))
    }


def _agnostic_counters(preds: LabeledMasks, gts: LabeledMasks) -> tuple[dict[str, AgnosticCounters], int]:
    """Raw class-agnostic counters (GT-side counting) and the unmatched-prediction total."""
    result = pq_match(preds, gts, "class_agnostic")
    matched_iou = {gt_idx: pair_iou for _, gt_idx, pair_iou in result.matches}
    tp: dict[str, int] = {}
    fn: dict[str, int] = {}
    iou_sum: dict[str, float] = {}
    gt_count: dict[str, int] = {}
    for gt_idx, (_, labels) in enumerate(gts):
        matched = gt_idx in matched_iou
        for cls in labels:
            gt_count[cls] = gt_count.get(cls, 0) + 1
            if matched:
                tp[cls] = tp.get(cls, 0) + 1
                iou_sum[cls] = iou_sum.get(cls, 0.0) + matched_iou[gt_idx]
            else:
                fn[cls] = fn.get(cls, 0) + 1
    counters = {
        cls: AgnosticCounters(tp.get(cls, 0), fn.get(cls, 0), iou_sum.get(cls, 0.0), gt_count[cls])
        for cls in sorted(gt_count)
    }
    return counters, len(result.fp_pred)


def _split_agnostic(
    counters: Mapping[str, AgnosticCounters], total_fp: int
) -> dict[str, PanopticCounters]:
    """Derive full per-class counters by splitting the FP total over GT shares."""
    total_gt = sum(c.gt_count for c in counters.values())
    if total_gt == 0:
        return {}
    fractions = {cls: c.gt_count / total_gt for cls, c in counters.items()}
    fp = split_false_positives(total_fp, fractions)
    return {
        cls: PanopticCounters(c.tp, fp[cls], c.fn, c.iou_sum)
        for cls, c in sorted(counters.items())
    }


def class_agnostic_panoptic(preds: LabeledMasks, gts: LabeledMasks) -> dict[str, PanopticCounters]:
    """Per-class counters in the class-agnostic mode.

    Matching ignores classes; TP/FN count on the GT side per carried class
    (a k-class instance contributes to k classes) and the unmatched-prediction
    total is split across classes by their GT segment share.
    """
    counters, total_fp = _agnostic_counters(preds, gts)
    return _split_agnostic(counters, total_fp)


# ---------------------------------------------------------------------------
# relationships

RelationTriple = tuple[str, str, str]


def _normalize_relations(relations: Iterable) -> set[RelationTriple]:
    out = set()
    for rel in relations:
        if isinstance(rel, Relation):
            out.add(rel.as_tuple())
        else:
            kind, subject, obj = rel
            out.add((str(kind), str(subject), str(obj)))
    return out


def _validate_relation_set(triples: set[RelationTriple], universe: frozenset[str], label: str) -> None:
    for kind, subject, obj in triples:
        if kind not in ("linked", "inside", "contain"):
            raise ValueError(f"{label}: unknown relation kind {kind!r}")
        outside = [e for e in (subject, obj) if e not in universe]
        if outside:
            raise ValueError(f"{label}: relation endpoint(s) {outside} outside the declared universe")
        if kind == "linked" and ("linked", obj, subject) not in triples:
            raise ValueError(f"{label}: linked({subject},{obj}) lacks its mirror")
        if kind == "inside" and ("contain", obj, subject) not in triples:
            raise ValueError(f"{label}: inside({subject},{obj}) lacks contain({obj},{subject})")
        if kind == "contain" and ("inside", obj, subject) not in triples:
            raise ValueError(f"{label}: contain({subject},{obj}) lacks inside({obj},{subject})")


def relationship_metrics(
    pred_relations: Iterable,
    gt_relations: Iterable,
    universe: Collection[str],
) -> tuple[dict[str, RelationScores], dict[str, RelationCounters]]:
    """Pairwise relation detection scores over a shared vessel universe.

    inside/contain are counted on ordered pairs; the symmetric linked class
    and the synthetic none class (a pair with no relation at all) are counted
    once per unordered pair.  precision = TP/(TP+FP), recall = TP/(TP+FN),
    iou = TP/(TP+FP+FN); classes without support are absent from the scores.
    """
    universe = frozenset(universe)
    pred = _normalize_relations(pred_relations)
    gt = _normalize_relations(gt_relations)
    _validate_relation_set(pred, universe, "pred")
    _validate_relation_set(gt, universe, "gt")
    counters = _relation_counters(pred, gt, universe)
    scores: dict[str, RelationScores] = {}
    for cls, c in counters.items():
        if c.support:
            scores[cls] = RelationScores(
                c.tp / (c.tp + c.fp) if c.tp + c.fp else None,
                c.tp / (c.tp + c.fn) if c.tp + c.fn else None,
                c.tp / c.support,
            )
    return scores, counters


def _relation_counters(
    pred: set[RelationTriple], gt: set[RelationTriple], universe: frozenset[str]
) -> dict[str, RelationCounters]:
    def ordered(triples: set[RelationTriple], kind: str) -> set[tuple[str, str]]:
        return {(s, o) for k, s, o in triples if k == kind}

    def unordered(triples: set[RelationTriple], kind: str) -> set[frozenset[str]]:
        return {frozenset((s, o)) for k, s, o in triples if k == kind}

    counters: dict[str, RelationCounters] = {}
    for kind in ("inside", "contain"):
        p, g = ordered(pred, kind), ordered(gt, kind)
        counters[kind] = RelationCounters(len(p & g), len(p - g), len(g - p))
    p, g = unordered(pred, "linked"), unordered(gt, "linked")
    counters["linked"] = RelationCounters(len(p & g), len(p - g), len(g - p))

    pred_related = {frozenset((s, o)) for _, s, o in pred}
    gt_related = {frozenset((s, o)) for _, s, o in gt}
    tp = fp = fn = 0
    for a, b in combinations(sorted(universe), 2):
        pair = frozenset((a, b))
        gt_none = pair not in gt_related
        pred_none = pair not in pred_related
        tp += gt_none and pred_none
        fp += pred_none and not gt_none
        fn += gt_none and not pred_none
    counters["none"] = RelationCounters(tp, fp, fn)
    return {cls: counters[cls] for cls in RELATION_EVAL_CLASSES}


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class PerVesselStats:
    """Macro accumulators over vessels plus micro counter sums for reference."""

    vessel_count: int = 0
    macro: Mapping[str, Mapping[str, MacroStats]] = field(default_factory=dict)
    semantic: Mapping[str, SemanticCounters] = field(default_factory=dict)
    with_class: Mapping[str, PanopticCounters] = field(default_factory=dict)
    agnostic: Mapping[str, AgnosticCounters] = field(default_factory=dict)
    agnostic_total_fp: int = 0

    def __add__(self, other: "PerVesselStats") -> "PerVesselStats":
        macro = {
            metric: _merge_counter_dicts(self.macro.get(metric, {}), other.macro.get(metric, {}))
            for metric in MACRO_METRICS
        }
        return PerVesselStats(
            vessel_count=self.vessel_count + other.vessel_count,
            macro=macro,
            semantic=_merge_counter_dicts(self.semantic, other.semantic),
            with_class=_merge_counter_dicts(self.with_class, other.with_class),
            agnostic=_merge_counter_dicts(self.agnostic, other.agnostic),
            agnostic_total_fp=self.agnostic_total_fp + other.agnostic_total_fp,
        )


@dataclass(frozen=True)
class MetricReport:
    """Evaluation results with mergeable raw counters.

    ``relations`` and ``per_vessel`` are None when the corresponding
    evaluation was not configured; merging reports with differing
    configurations raises ReportConfigError.
    """

    scene_count: int = 0
    semantic: Mapping[str, SemanticCounters] = field(default_factory=dict)
    with_class: Mapping[str, PanopticCounters] = field(default_factory=dict)
    agnostic: Mapping[str, AgnosticCounters] = field(default_factory=dict)
    agnostic_total_fp: int = 0
    relations: Optional[Mapping[str, RelationCounters]] = None
    per_vessel: Optional[PerVesselStats] = None

    @classmethod
    def empty(cls, *, relations: bool = False, per_vessel: bool = False) -> "MetricReport":
        return cls(
            relations={} if relations else None,
            per_vessel=PerVesselStats() if per_vessel else None,
        )

    # -- derived views ------------------------------------------------

    def semantic_scores(self) -> dict[str, SemanticScores]:
        return {cls: _semantic_scores(c) for cls, c in sorted(self.semantic.items())}

    def with_class_quality(self) -> dict[str, PanopticQuality]:
        return panoptic_metrics(self.with_class)

    def agnostic_counters(self) -> dict[str, PanopticCounters]:
        """Full agnostic counters with the FP total split over set-wide GT shares."""
        return _split_agnostic(self.agnostic, self.agnostic_total_fp)

    def agnostic_quality(self) -> dict[str, PanopticQuality]:
        return panoptic_metrics(self.agnostic_counters())

    def relation_scores(self) -> Optional[dict[str, RelationScores]]:
        if self.relations is None:
            return None
        out = {}
        for cls, c in self.relations.items():
            if c.support:
                out[cls] = RelationScores(
                    c.tp / (c.tp + c.fp) if c.tp + c.fp else None,
                    c.tp / (c.tp + c.fn) if c.tp + c.fn else None,
                    c.tp / c.support,
                )
        return out

    def per_vessel_means(self) -> Optional[dict[str, dict[str, tuple[Optional[float], int]]]]:
        if self.per_vessel is None:
            return None
        return {
            metric: {cls: (stats.mean, stats.support) for cls, stats in sorted(by_class.items())}
            for metric, by_class in self.per_vessel.macro.items()
        }

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "format": REPORT_FORMAT,
            "scene_count": self.scene_count,
            "semantic": {cls: vars(c).copy() for cls, c in sorted(self.semantic.items())},
            "panoptic_with_class": {cls: vars(c).copy() for cls, c in sorted(self.with_class.items())},
            "panoptic_agnostic": {
                "classes": {cls: vars(c).copy() for cls, c in sorted(self.agnostic.items())},
                "total_fp": self.agnostic_total_fp,
            },
            "relations": None,
            "per_vessel": None,
        }
        if self.relations is not None:
            doc["relations"] = {cls: vars(c).copy() for cls, c in sorted(self.relations.items())}
        if self.per_vessel is not None:
            pv = self.per_vessel
            doc["per_vessel"] = {
                "vessel_count": pv.vessel_count,
                "macro": {
                    metric: {cls: vars(s).copy() for cls, s in sorted(by_class.items())}
                    for metric, by_class in sorted(pv.macro.items())
                },
                "semantic": {cls: vars(c).copy() for cls, c in sorted(pv.semantic.items())},
                "with_class": {cls: vars(c).copy() for cls, c in sorted(pv.with_class.items())},
                "agnostic": {cls: vars(c).copy() for cls, c in sorted(pv.agnostic.items())},
                "agnostic_total_fp": pv.agnostic_total_fp,
            }
        doc["derived"] = self._derived_dict()
        return doc

    def _derived_dict(self) -> dict[str, Any]:
        derived: dict[str, Any] = {
            "semantic": {cls: s._asdict() for cls, s in self.semantic_scores().items()},
            "panoptic_with_class": {cls: q._asdict() for cls, q in self.with_class_quality().items()},
            "panoptic_agnostic": {cls: q._asdict() for cls, q in self.agnostic_quality().items()},
        }
        rel = self.relation_scores()
        if rel is not None:
            derived["relations"] = {cls: s._asdict() for cls, s in rel.items()}
        means = self.per_vessel_means()
        if means is not None:
            derived["per_vessel_means"] = {
                metric: {cls: {"mean": mean, "support": support} for cls, (mean, support) in by_class.items()}
                for metric, by_class in means.items()
            }
        return derived

    def to_json(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MetricReport":
        if doc.get("format") != REPORT_FORMAT:
            raise ValueError(f"not a metric report document (format={doc.get('format')!r})")
        agnostic_doc = doc["panoptic_agnostic"]
        relations = doc.get("relations")
        per_vessel_doc = doc.get("per_vessel")
        per_vessel = None
        if per_vessel_doc is not None:
            per_vessel = PerVesselStats(
                vessel_count=per_vessel_doc["vessel_count"],
                macro={
                    metric: {c: MacroStats(**s) for c, s in by_class.items()}
                    for metric, by_class in per_vessel_doc["macro"].items()
                },
                semantic={c: SemanticCounters(**v) for c, v in per_vessel_doc["semantic"].items()},
                with_class={c: PanopticCounters(**v) for c, v in per_vessel_doc["with_class"].items()},
                agnostic={c: AgnosticCounters(**v) for c, v in per_vessel_doc["agnostic"].items()},
                agnostic_total_fp=per_vessel_doc["agnostic_total_fp"],
            )
        return cls(
            scene_count=doc["scene_count"],
            semantic={c: SemanticCounters(**v) for c, v in doc["semantic"].items()},
            with_class={c: PanopticCounters(**v) for c, v in doc["panoptic_with_class"].items()},
            agnostic={c: AgnosticCounters(**v) for c, v in agnostic_doc["classes"].items()},
            agnostic_total_fp=agnostic_doc["total_fp"],
            relations=None if relations is None else {c: RelationCounters(**v) for c, v in relations.items()},
            per_vessel=per_vessel,
        )

    @classmethod
    def from_json(cls, data: bytes | str) -> "MetricReport":
        return cls.from_dict(json.loads(data))


def _merge_counter_dicts(a: Mapping, b: Mapping) -> dict:
    out = dict(a)
    for key, value in b.items():
        out[key] = out[key] + value if key in out else value
    return {key: out[key] for key in sorted(out)}


def aggregate_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Associative, commutative merge: counters sum; ratios rederive from sums."""
    merged = MetricReport.empty()
    first = True
    for report in reports:
        if first:
            merged = MetricReport.empty(
                relations=report.relations is not None,
                per_vessel=report.per_vessel is not None,
            )
            first = False
        if (merged.relations is None) != (report.relations is None):
            raise ReportConfigError("cannot merge reports with and without relation evaluation")
        if (merged.per_vessel is None) != (report.per_vessel is None):
            raise ReportConfigError("cannot merge reports with and without per-vessel evaluation")
        merged = MetricReport(
            scene_count=merged.scene_count + report.scene_count,
            semantic=_merge_counter_dicts(merged.semantic, report.semantic),
            with_class=_merge_counter_dicts(merged.with_class, report.with_class),
            agnostic=_merge_counter_dicts(merged.agnostic, report.agnostic),
            agnostic_total_fp=merged.agnostic_total_fp + report.agnostic_total_fp,
            relations=None if merged.relations is None
            else _merge_counter_dicts(merged.relations, report.relations),
            per_vessel=None if merged.per_vessel is None
            else merged.per_vessel + report.per_vessel,
        )
    return merged


# ---------------------------------------------------------------------------
# scene-level evaluation

def _labeled(instances: Iterable[Instance]) -> list[tuple[BinaryMask, frozenset[str]]]:
    return [(inst.mask, inst.labels) for inst in instances]


def _semantic_maps(instances: Iterable[Instance], width: int, height: int) -> dict[str, BinaryMask]:
    by_class: dict[str, list[BinaryMask]] = {}
    for inst in instances:
        for cls in inst.labels:
            by_class.setdefault(cls, []).append(inst.mask)
    return {
        cls: union_masks(masks, width, height)
        for cls, masks in sorted(by_class.items())
    }


def _vessel_relations(scene: SceneAnnotation) -> list[RelationTriple]:
    vessels = {i.id for i in scene.instances if i.kind == KIND_VESSEL}
    return [
        r.as_tuple() for r in scene.relations
        if r.subject in vessels and r.object in vessels
    ]


def evaluate_scene(
    gt_scene: SceneAnnotation,
    pred_scene: SceneAnnotation,
    *,
    relations: bool = False,
    per_vessel: bool = False,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> MetricReport:
    """Evaluate one predicted scene against its ground truth.

    Semantic maps and instance label sets are built from classes and
    properties together.  Relation metrics run over the union of both scenes'
    vessel ids; per-vessel metrics pair prediction content to GT vessels by
    vessel id.
    """
    if (gt_scene.image_width, gt_scene.image_height) != (pred_scene.image_width, pred_scene.image_height):
        raise DimensionMismatchError("GT and prediction scenes have different image dimensions")
    width, height = gt_scene.image_width, gt_scene.image_height

    gt_pairs = _labeled(gt_scene.instances)
    pred_pairs = _labeled(pred_scene.instances)
    _, semantic = semantic_metrics(
        _semantic_maps(pred_scene.instances, width, height),
        _semantic_maps(gt_scene.instances, width, height),
        taxonomy=taxonomy,
    )
    with_class = standard_panoptic(pred_pairs, gt_pairs)
    agnostic, total_fp = _agnostic_counters(pred_pairs, gt_pairs)

    relation_counters = None
    if relations:
        universe = {i.id for i in gt_scene.instances if i.kind == KIND_VESSEL}
        universe |= {i.id for i in pred_scene.instances if i.kind == KIND_VESSEL}
        _, relation_counters = relationship_metrics(
            _vessel_relations(pred_scene), _vessel_relations(gt_scene), universe
        )

    per_vessel_stats = None
    if per_vessel:
        pred_content = {}
        for vessel in gt_scene.vessels():
            pred_inst = pred_scene.by_id.get(vessel.id)
            if pred_inst is not None and pred_inst.kind == KIND_VESSEL:
                content_ids = direct_content_of(pred_scene, vessel.id)
                pred_content[vessel.id] = [pred_scene.by_id[i] for i in sorted(content_ids)]
            else:
                pred_content[vessel.id] = []
        per_vessel_stats = _per_vessel_stats(gt_scene, pred_content, taxonomy)

    return MetricReport(
        scene_count=1,
        semantic=semantic,
        with_class=with_class,
        agnostic=agnostic,
        agnostic_total_fp=total_fp,
        relations=relation_counters,
        per_vessel=per_vessel_stats,
    )


def per_vessel_content_eval(
    gt_scene: SceneAnnotation,
    pred_content: Mapping[str, Sequence[Instance]],
    *,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> MetricReport:
    """Evaluate predicted vessel content vessel by vessel and macro-average.

    ``pred_content`` is keyed by GT vessel id; a key that is not a GT vessel
    raises KeyError.  Each vessel's GT content is its direct content
    (content of nested vessels excluded).  Undefined per-vessel metrics are
    skipped by the averages; raw counters are also summed for reference.
    """
    gt_vessel_ids = [v.id for v in gt_scene.vessels()]
    unknown = sorted(set(pred_content) - set(gt_vessel_ids))
    if unknown:
        raise KeyError(f"pred_content keys are not GT vessel ids: {unknown}")
    stats = _per_vessel_stats(gt_scene, pred_content, taxonomy)
    return MetricReport(
        scene_count=1,
        semantic=dict(stats.semantic),
        with_class=dict(stats.with_class),
        agnostic=dict(stats.agnostic),
        agnostic_total_fp=stats.agnostic_total_fp,
        relations=None,
        per_vessel=stats,
    )


def _per_vessel_stats(
    gt_scene: SceneAnnotation,
    pred_content: Mapping[str, Sequence[Instance]],
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> PerVesselStats:
    width, height = gt_scene.image_width, gt_scene.image_height
    macro: dict[str, dict[str, MacroStats]] = {metric: {} for metric in MACRO_METRICS}
    micro_semantic: dict[str, SemanticCounters] = {}
    micro_wc: dict[str, PanopticCounters] = {}
    micro_ag: dict[str, AgnosticCounters] = {}
    micro_fp = 0
    vessel_ids = sorted(v.id for v in gt_scene.vessels())

    def accumulate(metric: str, cls: str, value: Optional[float]) -> None:
        if value is None:
            return
        macro[metric][cls] = macro[metric].get(cls, MacroStats()) + MacroStats(value, 1)

    for vessel_id in vessel_ids:
        gt_instances = [gt_scene.by_id[i] for i in sorted(direct_content_of(gt_scene, vessel_id))]
        pred_instances = list(pred_content.get(vessel_id, ()))

        scores, counters = semantic_metrics(
            _semantic_maps(pred_instances, width, height),
            _semantic_maps(gt_instances, width, height),
            taxonomy=taxonomy,
        )
        micro_semantic = _merge_counter_dicts(micro_semantic, counters)
        for cls, s in scores.items():
            accumulate("semantic_iou", cls, s.iou)
            accumulate("semantic_precision", cls, s.precision)
            accumulate("semantic_recall", cls, s.recall)

        wc = standard_panoptic(_labeled(pred_instances), _labeled(gt_instances))
        micro_wc = _merge_counter_dicts(micro_wc, wc)
        for cls, quality in panoptic_metrics(wc).items():
            accumulate("with_class_pq", cls, quality.pq)
            accumulate("with_class_sq", cls, quality.sq)
            accumulate("with_class_rq", cls, quality.rq)

        ag_raw, ag_fp = _agnostic_counters(_labeled(pred_instances), _labeled(gt_instances))
        micro_ag = _merge_counter_dicts(micro_ag, ag_raw)
        micro_fp += ag_fp
        # FP split inside a single vessel uses that vessel's own GT shares
        for cls, quality in panoptic_metrics(_split_agnostic(ag_raw, ag_fp)).items():
            accumulate("agnostic_pq", cls, quality.pq)
            accumulate("agnostic_sq", cls, quality.sq)
            accumulate("agnostic_rq", cls, quality.rq)

    return PerVesselStats(
        vessel_count=len(vessel_ids),
        macro={metric: dict(sorted(by_class.items())) for metric, by_class in macro.items()},
        semantic=micro_semantic,
        with_class=micro_wc,
        agnostic=micro_ag,
        agnostic_total_fp=micro_fp,
    )
