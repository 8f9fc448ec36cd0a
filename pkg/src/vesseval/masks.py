"""Run-length encoded binary masks and the pixel-set algebra built on them.

A mask is stored row-major as alternating run lengths, starting with a
(possibly empty) zero-run.  All set operations work on run boundaries, so
their cost scales with the number of runs rather than the number of pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "BinaryMask",
    "DimensionMismatchError",
    "EmptyMaskError",
    "area",
    "intersection_area",
    "iou",
    "overlap_fraction",
    "rle_decode",
    "rle_encode",
    "union_area",
    "union_masks",
]


class DimensionMismatchError(ValueError):
    """Masks of different sizes were combined, or pixel data has the wrong length."""


class EmptyMaskError(ValueError):
    """An operation that requires a nonempty mask received an empty one."""


@dataclass(frozen=True)
class BinaryMask:
    """Immutable binary pixel region with fixed image dimensions.

    ``runs`` alternate zero-run, one-run, zero-run, ... in row-major pixel
    order.  Canonical form: only the leading zero-run may have length 0, and
    the run lengths sum to ``width * height``.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        runs = tuple(self.runs)
        object.__setattr__(self, "runs", runs)
        if not runs:
            raise ValueError("runs must not be empty")
        arr = np.asarray(runs, dtype=np.int64)
        if arr[0] < 0 or (arr.size > 1 and arr[1:].min() <= 0):
            raise ValueError("only the leading zero-run may be empty; runs must be non-negative")
        total = int(arr.sum())
        if total != self.width * self.height:
            raise DimensionMismatchError(
                f"runs sum to {total}, expected {self.width * self.height} "
                f"for a {self.width}x{self.height} mask"
            )

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_array(cls, pixels, width: Optional[int] = None, height: Optional[int] = None) -> "BinaryMask":
        """Encode a 2-D (height, width) array or flat row-major bit sequence."""
        arr = np.asarray(pixels)
        if arr.ndim == 2:
            h, w = arr.shape
            if width is not None and width != w or height is not None and height != h:
                raise DimensionMismatchError(
                    f"array shape {arr.shape} does not match declared {height}x{width}"
                )
            width, height = w, h
        elif arr.ndim == 1:
            if width is None or height is None:
                raise ValueError("flat pixel input requires explicit width and height")
            if arr.size != width * height:
                raise DimensionMismatchError(
                    f"got {arr.size} pixels, expected {width * height} for {width}x{height}"
                )
        else:
            raise ValueError(f"pixel input must be 1-D or 2-D, got ndim={arr.ndim}")
        flat = arr.ravel().astype(bool)
        n = flat.size
        changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], changes, [n]))
        runs = np.diff(bounds)
        if flat[0]:
            runs = np.concatenate(([0], runs))
        return cls(width, height, tuple(int(r) for r in runs))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(width, height, (width * height,))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(width, height, (0, width * height))

    @classmethod
    def from_intervals(cls, starts, ends, width: int, height: int) -> "BinaryMask":
        """Build from disjoint, sorted, half-open one-intervals in flat pixel space."""
        starts = np.asarray(starts, dtype=np.int64)
        ends = np.asarray(ends, dtype=np.int64)
        n = width * height
        if starts.size == 0:
            return cls.empty(width, height)
        if starts[0] < 0 or ends[-1] > n or (ends <= starts).any() or (starts[1:] <= ends[:-1]).any():
            raise ValueError("intervals must be sorted, disjoint, nonempty and within bounds")
        bounds = [np.array([0], dtype=np.int64), np.stack([starts, ends], axis=1).ravel()]
        if ends[-1] < n:
            bounds.append(np.array([n], dtype=np.int64))
        runs = np.diff(np.concatenate(bounds))
        return cls(width, height, tuple(int(r) for r in runs))

    # -- derived views ---------------------------------------------------

    @cached_property
    def _cum(self) -> np.ndarray:
        """Cumulative run boundaries; position x lies in an odd-indexed run iff it is set."""
        return np.cumsum(np.asarray(self.runs, dtype=np.int64))

    @cached_property
    def _intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """(starts, ends) of the one-runs in flat pixel space."""
        cum = self._cum
        starts = cum[0::2]
        ends = cum[1::2]
        return starts[: ends.size], ends

    @cached_property
    def area(self) -> int:
        return int(sum(self.runs[1::2]))

    @cached_property
    def _span(self) -> Optional[tuple[int, int]]:
        """Flat-space extent (first set pixel, one past the last), or None if empty."""
        starts, ends = self._intervals
        if starts.size == 0:
            return None
        return int(starts[0]), int(ends[-1])

    @cached_property
    def bbox(self) -> Optional[tuple[int, int, int, int]]:
        """(row0, row1, col0, col1) half-open bounding box, or None if empty.

        Column bounds are conservative: any one-run spanning a row boundary
        widens them to the full width.
        """
        span = self._span
        if span is None:
            return None
        starts, ends = self._intervals
        w = self.width
        row0 = span[0] // w
        row1 = (span[1] - 1) // w + 1
        c0 = starts % w
        c1 = (ends - 1) % w
        wraps = (ends - starts >= w) | (c1 < c0)
        if wraps.any():
            return (row0, row1, 0, w)
        return (row0, row1, int(c0.min()), int(c1.max()) + 1)

    def to_array(self) -> np.ndarray:
        """Decode to a (height, width) boolean array."""
        return rle_decode(self).reshape(self.height, self.width).astype(bool)

    def __repr__(self) -> str:  # full runs tuples are unreadable in test output
        return (
            f"BinaryMask({self.width}x{self.height}, area={self.area}, "
            f"{len(self.runs)} runs)"
        )


def rle_encode(pixels, width: int, height: int) -> BinaryMask:
    """Encode a row-major bit sequence of length width*height as a canonical mask."""
    return BinaryMask.from_array(pixels, width=width, height=height)


def rle_decode(mask: BinaryMask) -> np.ndarray:
    """Decode to the flat row-major bit sequence (uint8, length width*height)."""
    runs = np.asarray(mask.runs, dtype=np.int64)
    values = np.zeros(runs.size, dtype=np.uint8)
    values[1::2] = 1
    return np.repeat(values, runs)


def area(mask: BinaryMask) -> int:
    """Number of set pixels."""
    return mask.area


def _check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatchError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def _membership(cum: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Whether each flat position is set, by run-boundary parity."""
    return (np.searchsorted(cum, points, side="right") % 2).astype(bool)


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    """|a ∩ b| in pixels."""
    _check_same_dims(a, b)
    sa, sb = a._span, b._span
    if sa is None or sb is None or sa[1] <= sb[0] or sb[1] <= sa[0]:
        return 0
    total = a.width * a.height
    points = np.unique(np.concatenate((a._cum[:-1], b._cum[:-1], (0,))))
    lengths = np.diff(points, append=total)
    inside = _membership(a._cum, points) & _membership(b._cum, points)
    return int(lengths[inside].sum())


def union_area(a: BinaryMask, b: BinaryMask) -> int:
    """|a ∪ b| in pixels (inclusion-exclusion)."""
    return a.area + b.area - intersection_area(a, b)


def iou(a: BinaryMask, b: BinaryMask) -> Optional[float]:
    """Intersection over union.

    Returns None (undefined) when both masks are empty; callers must handle
    that case explicitly rather than receive a silent 0 or 1.
    """
    _check_same_dims(a, b)
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return None
    return inter / union


def overlap_fraction(inner: BinaryMask, outer: BinaryMask) -> float:
    """Fraction of the inner mask's area covered by the outer mask."""
    _check_same_dims(inner, outer)
    if inner.area == 0:
        raise EmptyMaskError("overlap_fraction requires a nonempty inner mask")
    return intersection_area(inner, outer) / inner.area


def union_masks(masks: Iterable[BinaryMask], width: Optional[int] = None, height: Optional[int] = None) -> BinaryMask:
    """Union of any number of masks of identical dimensions."""
    masks = list(masks)
    if not masks:
        if width is None or height is None:
            raise ValueError("union of no masks requires explicit width and height")
        return BinaryMask.empty(width, height)
    first = masks[0]
    if width is None:
        width, height = first.width, first.height
    for m in masks:
        if m.width != width or m.height != height:
            raise DimensionMismatchError("union_masks requires identical dimensions")
    starts = np.concatenate([m._intervals[0] for m in masks])
    ends = np.concatenate([m._intervals[1] for m in masks])
    if starts.size == 0:
        return BinaryMask.empty(width, height)
    order = np.argsort(starts, kind="stable")
    starts, ends = starts[order], ends[order]
    running = np.maximum.accumulate(ends)
    # a new merged interval begins wherever the start exceeds everything seen so far
    new_group = np.empty(starts.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = starts[1:] > running[:-1]
    group_starts = starts[new_group]
    group_ends = np.maximum.reduceat(ends, np.flatnonzero(new_group))
    return BinaryMask.from_intervals(group_starts, group_ends, width, height)
