"""Segment correspondence: IOU matrices, thresholded PQ matching, Hungarian
assignment with deterministic tie-breaking, fixed-slot padding, and the
overlap-based class assignment rule."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Collection, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .masks import BinaryMask, DimensionMismatchError, EmptyMaskError, iou, overlap_fraction

__all__ = [
    "CapacityError",
    "IOU_MATCH_THRESHOLD",
    "CLASS_OVERLAP_THRESHOLD",
    "MATCH_MODES",
    "MatchResult",
    "assign_classes_to_instances",
    "hungarian_assign",
    "iou_matrix",
    "pad_instances",
    "pq_match",
]

IOU_MATCH_THRESHOLD = 0.5  # strict: a pair matches only with IOU > 0.5
CLASS_OVERLAP_THRESHOLD = 0.33  # strict: class assigned only above 33% overlap

MATCH_MODES = ("with_class", "class_agnostic")


class CapacityError(ValueError):
    """More ground-truth instances than prediction slots."""


@dataclass(frozen=True)
class MatchResult:
    """Thresholded one-to-one matching between predicted and GT segments.

    Every match has IOU > 0.5; matches plus fn_gt cover all GT indices and
    matches plus fp_pred cover all predicted indices.
    """

    matches: tuple[tuple[int, int, float], ...]  # (pred index, gt index, iou)
    fn_gt: tuple[int, ...]
    fp_pred: tuple[int, ...]
    mode: str


def _check_dims(masks: Sequence[BinaryMask]) -> Optional[tuple[int, int]]:
    dims = None
    for m in masks:
        if dims is None:
            dims = (m.width, m.height)
        elif (m.width, m.height) != dims:
            raise DimensionMismatchError(
                f"all masks must share dimensions, got {dims} and {(m.width, m.height)}"
            )
    return dims


def _bbox_disjoint(a: BinaryMask, b: BinaryMask) -> bool:
    ba, bb = a.bbox, b.bbox
    if ba is None or bb is None:
        return True
    return (
        ba[1] <= bb[0] or bb[1] <= ba[0]  # row ranges
        or ba[3] <= bb[2] or bb[3] <= ba[2]  # col ranges
    )


def iou_matrix(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask]) -> np.ndarray:
    """Pairwise IOU, shape (len(preds), len(gts)); undefined pairs stored as 0."""
    _check_dims(list(preds) + list(gts))
    out = np.zeros((len(preds), len(gts)), dtype=np.float64)
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if _bbox_disjoint(p, g):
                continue
            value = iou(p, g)
            out[i, j] = 0.0 if value is None else value
    return out


def pq_match(
    preds: Sequence[tuple[BinaryMask, Collection[str]]],
    gts: Sequence[tuple[BinaryMask, Collection[str]]],
    mode: str,
) -> MatchResult:
    """Greedy one-to-one matching of candidate pairs, best IOU first.

    A pair is a candidate iff IOU > 0.5 and, in ``with_class`` mode, the
    class sets intersect.  Ties break on (gt index, pred index) ascending, so
    the result is deterministic.
    """
    if mode not in MATCH_MODES:
        raise ValueError(f"mode must be one of {MATCH_MODES}, got {mode!r}")
    matrix = iou_matrix([p for p, _ in preds], [g for g, _ in gts])
    candidates = []
    for i, j in zip(*np.nonzero(matrix > IOU_MATCH_THRESHOLD)):
        if mode == "with_class" and not (set(preds[i][1]) & set(gts[j][1])):
            continue
        candidates.append((-matrix[i, j], int(j), int(i)))
    candidates.sort()
    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    matches = []
    for neg_iou, j, i in candidates:
        if i in matched_pred or j in matched_gt:
            continue
        matched_pred.add(i)
        matched_gt.add(j)
        matches.append((i, j, -neg_iou))
    return MatchResult(
        matches=tuple(matches),
        fn_gt=tuple(j for j in range(len(gts)) if j not in matched_gt),
        fp_pred=tuple(i for i in range(len(preds)) if i not in matched_pred),
        mode=mode,
    )


# ---------------------------------------------------------------------------
# Hungarian assignment

def _exact_total(cost: np.ndarray, rows, cols) -> Fraction:
    """Order-independent exact sum of selected entries (floats are rationals)."""
    return sum((Fraction(float(cost[r, c])) for r, c in zip(rows, cols)), Fraction(0))


def hungarian_assign(cost) -> tuple[int, ...]:
    """Minimum-cost square assignment; one column per row, injective.

    Among all optimal assignments, returns the lexicographically smallest
    (row 0's column minimized first, then row 1's, ...), so exact cost ties —
    ubiquitous with padded empty masks — resolve deterministically.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    n = cost.shape[0]
    if n == 0:
        return ()
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix entries must be finite")
    if (cost < 0).any():
        raise ValueError("cost matrix entries must be non-negative")

    rows, cols = linear_sum_assignment(cost)
    best = _exact_total(cost, rows, cols)

    assignment: list[int] = []
    available = list(range(n))
    fixed = Fraction(0)
    for row in range(n):
        rest_rows = np.arange(row + 1, n)
        chosen = None
        for col in available:
            candidate = fixed + Fraction(float(cost[row, col]))
            if rest_rows.size:
                rest_cols = np.array([c for c in available if c != col])
                sub = cost[np.ix_(rest_rows, rest_cols)]
                sr, sc = linear_sum_assignment(sub)
                candidate += _exact_total(sub, sr, sc)
            if candidate == best:
                chosen = col
                break
        if chosen is None:
            # float-noise safety net: fall back to an optimal completion
            rest_cols = np.array(available)
            sub = cost[np.ix_(np.arange(row, n), rest_cols)]
            _, sc = linear_sum_assignment(sub)
            chosen = int(rest_cols[sc[0]])
        assignment.append(chosen)
        available.remove(chosen)
        fixed += Fraction(float(cost[row, chosen]))
    return tuple(assignment)


def pad_instances(
    gt_masks: Sequence[BinaryMask],
    slot_count: int,
    *,
    width: Optional[int] = None,
    height: Optional[int] = None,
) -> list[BinaryMask]:
    """Pad a GT mask list to exactly ``slot_count`` with all-zero masks.

    Raises CapacityError when there are more GT masks than slots; truncation
    is never silent.
    """
    masks = list(gt_masks)
    if len(masks) > slot_count:
        raise CapacityError(f"{len(masks)} GT masks exceed {slot_count} slots")
    dims = _check_dims(masks)
    if dims is not None:
        if width is not None and (width, height) != dims:
            raise DimensionMismatchError(f"declared {width}x{height} does not match masks {dims}")
        width, height = dims
    if width is None or height is None:
        raise ValueError("padding an empty GT list requires explicit width and height")
    empty = BinaryMask.empty(width, height)
    return masks + [empty] * (slot_count - len(masks))


def assign_classes_to_instances(
    instance_masks: Sequence[BinaryMask],
    semantic_maps: Sequence[tuple[str, BinaryMask]],
) -> list[frozenset[str]]:
    """Assign a class to an instance iff more than 33% of the instance's
    area overlaps that class's semantic map; thresholds are independent, so
    multiple classes (or none) may be assigned."""
    _check_dims(list(instance_masks) + [m for _, m in semantic_maps])
    for mask in instance_masks:
        if mask.area == 0:
            raise EmptyMaskError("instance masks must be nonempty for class assignment")
    out = []
    for mask in instance_masks:
        assigned = {
            cls
            for cls, smap in semantic_maps
            if not _bbox_disjoint(mask, smap)
            and overlap_fraction(mask, smap) > CLASS_OVERLAP_THRESHOLD
        }
        out.append(frozenset(assigned))
    return out
