"""Framework-free numeric reference for the matching-based training losses.

Two-map softmax normalization, elementwise cross-entropy, the per-class
semantic loss, and the Hungarian-matched fixed-slot instance loss, plus the
analytic cross-entropy gradient used to verify everything against finite
differences.  All reductions are means (per pixel, per class, per slot) so
magnitudes stay comparable across mask sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .masks import BinaryMask, DimensionMismatchError, iou
from .matching import hungarian_assign, pad_instances

__all__ = [
    "DEFAULT_SLOT_COUNT",
    "LOG_EPSILON",
    "LogitPair",
    "binarize_probabilities",
    "cross_entropy_gradient",
    "instance_loss",
    "pixel_cross_entropy",
    "semantic_loss",
    "softmax_pair",
]

DEFAULT_SLOT_COUNT = 10  # fixed number of predicted instance slots
LOG_EPSILON = 1e-7  # clamp for log arguments; oracles must replicate it


@dataclass(frozen=True, eq=False)
class LogitPair:
    """Two unnormalized maps: evidence for and against membership, per pixel."""

    yes: np.ndarray
    no: np.ndarray

    def __post_init__(self) -> None:
        yes = np.asarray(self.yes, dtype=np.float64)
        no = np.asarray(self.no, dtype=np.float64)
        if yes.ndim != 2 or yes.shape != no.shape:
            raise DimensionMismatchError(
                f"logit maps must be 2-D with equal shapes, got {yes.shape} and {no.shape}"
            )
        if not (np.isfinite(yes).all() and np.isfinite(no).all()):
            raise ValueError("logit maps must be finite")
        object.__setattr__(self, "yes", yes)
        object.__setattr__(self, "no", no)

    @property
    def shape(self) -> tuple[int, int]:
        return self.yes.shape


def softmax_pair(pair: LogitPair) -> np.ndarray:
    """Per-pixel membership probability exp(yes)/(exp(yes)+exp(no)).

    Computed in the shifted form, so arbitrarily large logit gaps neither
    overflow nor produce NaN; swapping the maps yields the exact complement.
    """
    shift = np.maximum(pair.yes, pair.no)
    ey = np.exp(pair.yes - shift)
    en = np.exp(pair.no - shift)
    return ey / (ey + en)


def _gt_array(gt, shape: tuple[int, int]) -> np.ndarray:
    if isinstance(gt, BinaryMask):
        arr = gt.to_array()
    else:
        arr = np.asarray(gt, dtype=bool)
    if arr.shape != shape:
        raise DimensionMismatchError(f"GT shape {arr.shape} does not match prediction {shape}")
    return arr.astype(np.float64)


def pixel_cross_entropy(p: np.ndarray, gt) -> float:
    """Mean over pixels of -[g ln p + (1-g) ln(1-p)], p clamped to [eps, 1-eps]."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise DimensionMismatchError("probability map must be 2-D")
    g = _gt_array(gt, p.shape)
    pc = np.clip(p, LOG_EPSILON, 1.0 - LOG_EPSILON)
    return float(np.mean(-(g * np.log(pc) + (1.0 - g) * np.log(1.0 - pc))))


def semantic_loss(
    preds: Mapping[str, LogitPair], gts: Mapping[str, BinaryMask]
) -> float:
    """Mean over classes of the cross-entropy between each class's normalized
    prediction and its GT map."""
    if set(preds) != set(gts):
        missing = sorted(set(preds) ^ set(gts))
        raise KeyError(f"prediction and GT class keys differ: {missing}")
    if not preds:
        raise ValueError("semantic loss needs at least one class")
    return float(np.mean([
        pixel_cross_entropy(softmax_pair(preds[cls]), gts[cls]) for cls in sorted(preds)
    ]))


def binarize_probabilities(p: np.ndarray) -> BinaryMask:
    """Threshold at p >= 0.5 (the two-map softmax decision boundary)."""
    return BinaryMask.from_array(np.asarray(p) >= 0.5)


def instance_loss(
    pred_slots: Sequence[LogitPair],
    gt_instances: Sequence[BinaryMask],
) -> tuple[float, tuple[Optional[int], ...]]:
    """Hungarian-matched fixed-slot instance loss.

    GT masks are padded with empty masks up to the slot count; the matching
    cost is 1 - IOU between the binarized slot prediction and each padded GT
    mask (empty vs empty counts as IOU 1, so empty-predicting slots prefer
    the padding), and the loss is the mean cross-entropy over slots against
    their assigned masks.  Returns (loss, assignment) where assignment maps
    each slot to a GT index or None for a padded empty.
    """
    slots = list(pred_slots)
    if not slots:
        raise ValueError("instance loss needs at least one prediction slot")
    height, width = slots[0].shape
    for s in slots:
        if s.shape != (height, width):
            raise DimensionMismatchError("all prediction slots must share dimensions")
    padded = pad_instances(list(gt_instances), len(slots), width=width, height=height)
    probs = [softmax_pair(s) for s in slots]
    binarized = [binarize_probabilities(p) for p in probs]
    cost = np.empty((len(slots), len(slots)), dtype=np.float64)
    for i, mask in enumerate(binarized):
        for j, gt in enumerate(padded):
            pair_iou = iou(mask, gt)
            cost[i, j] = 1.0 - (1.0 if pair_iou is None else pair_iou)
    assignment = hungarian_assign(cost)
    losses = [pixel_cross_entropy(probs[i], padded[assignment[i]]) for i in range(len(slots))]
    mapping = tuple(j if j < len(gt_instances) else None for j in assignment)
    return float(np.mean(losses)), mapping


def cross_entropy_gradient(pair: LogitPair, gt) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of pixel_cross_entropy(softmax_pair(pair), gt).

    Per pixel (p - g) / pixel_count for the yes map and its negation for the
    no map; matches finite differences wherever p stays inside the log clamp.
    """
    p = softmax_pair(pair)
    g = _gt_array(gt, p.shape)
    grad_yes = (p - g) / p.size
    return grad_yes, -grad_yes
