"""Synthetic scene generation with known-answer evaluation counters.

Scenes are built from rectangles and ellipses placed on a grid: disjoint
vessels, each holding material bands (and optionally a nested vessel or a
part) whose areas are capped at 25% of their vessel, so no cross-instance
pair can reach the 0.5 IOU matching threshold and the greedy matching is
provably unique.  Predictions are perturbed copies (drops, spurious
segments, class flips, erosion/dilation), and because the generator knows
every perturbation it applied, it emits the exact per-class panoptic and
relation counters an evaluator must produce.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .annotations import Instance, Relation, SceneAnnotation, serialize_scene
from .masks import BinaryMask, iou
from .metrics import AgnosticCounters, PanopticCounters, RelationCounters
from .taxonomy import DEFAULT_TAXONOMY, KIND_MATERIAL, KIND_PART, KIND_VESSEL

__all__ = [
    "EXPECTED_FORMAT",
    "ExpectedMetrics",
    "Perturbation",
    "SyntheticPlan",
    "generate_dataset",
    "generate_scene",
    "load_expected_metrics",
    "nested_demo_scene",
]

EXPECTED_FORMAT = "expected_metrics_v1"

_MIN_VESSEL = 36
_MIN_BAND_H = 6
_MAX_BAND_H = 10
_RESIZE_MIN_IOU = 0.55  # safety margin over the 0.5 matching threshold

_VESSEL_SUBS = tuple(
    c for c in DEFAULT_TAXONOMY.classes_of_kind(KIND_VESSEL) if c != KIND_VESSEL
)
_MATERIAL_SUBS = tuple(
    c for c in DEFAULT_TAXONOMY.classes_of_kind(KIND_MATERIAL) if c != "filled"
)
_PART_CLASSES = DEFAULT_TAXONOMY.classes_of_kind(KIND_PART)
_VESSEL_PROPS = ("transparent", "opaque", "semi_transparent")
_MATERIAL_PROPS = ("scattered", "on_surface")


@dataclass(frozen=True)
class Perturbation:
    """Per-kind prediction corruption probabilities."""

    drop_prob: float = 0.0
    spurious_prob: float = 0.0
    class_flip_prob: float = 0.0
    resize_prob: float = 0.0
    resize_max_px: int = 0

    def __post_init__(self) -> None:
        for name in ("drop_prob", "spurious_prob", "class_flip_prob", "resize_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.resize_max_px < 0:
            raise ValueError("resize_max_px must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "drop_prob": self.drop_prob,
            "spurious_prob": self.spurious_prob,
            "class_flip_prob": self.class_flip_prob,
            "resize_prob": self.resize_prob,
            "resize_max_px": self.resize_max_px,
        }


@dataclass(frozen=True)
class SyntheticPlan:
    scene_count: int
    image_width: int = 256
    image_height: int = 256
    vessels_per_scene: tuple[int, int] = (2, 4)
    materials_per_vessel: tuple[int, int] = (1, 2)
    nested_vessel_prob: float = 0.0
    part_prob: float = 0.0
    linked_prob: float = 0.25
    perturbations: Mapping[str, Perturbation] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "vessels_per_scene", tuple(self.vessels_per_scene))
        object.__setattr__(self, "materials_per_vessel", tuple(self.materials_per_vessel))
        object.__setattr__(
            self,
            "perturbations",
            {
                kind: spec if isinstance(spec, Perturbation) else Perturbation(**spec)
                for kind, spec in dict(self.perturbations).items()
            },
        )
        if self.scene_count < 0:
            raise ValueError("scene_count must be non-negative")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        for lo, hi in (self.vessels_per_scene, self.materials_per_vessel):
            if lo < 0 or hi < lo:
                raise ValueError("count ranges must satisfy 0 <= lo <= hi")
        if self.vessels_per_scene[0] < 1:
            raise ValueError("at least one vessel per scene is required")
        for prob in (self.nested_vessel_prob, self.part_prob, self.linked_prob):
            if not 0.0 <= prob <= 1.0:
                raise ValueError("probabilities must be in [0, 1]")
        unknown = set(self.perturbations) - {KIND_VESSEL, KIND_MATERIAL, KIND_PART}
        if unknown:
            raise ValueError(f"perturbation kinds must be instance kinds, got {sorted(unknown)}")
        grid = self._grid()
        cell = min(self.image_width // grid, self.image_height // grid)
        if cell < _MIN_VESSEL + 2 * self._margin():
            raise ValueError(
                f"image {self.image_width}x{self.image_height} is too small for "
                f"{self.vessels_per_scene[1]} vessels of side >= {_MIN_VESSEL} "
                f"with margin {self._margin()}"
            )

    def _spurious_kinds(self) -> tuple[str, ...]:
        return tuple(
            kind for kind in (KIND_VESSEL, KIND_MATERIAL, KIND_PART)
            if self.perturbations.get(kind, _NO_PERTURBATION).spurious_prob > 0
        )

    def _grid(self) -> int:
        return max(1, math.ceil(math.sqrt(self.vessels_per_scene[1] + len(self._spurious_kinds()))))

    def _margin(self) -> int:
        resize = max(
            (spec.resize_max_px for spec in self.perturbations.values()), default=0
        )
        return resize + 3

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene_count": self.scene_count,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "vessels_per_scene": list(self.vessels_per_scene),
            "materials_per_vessel": list(self.materials_per_vessel),
            "nested_vessel_prob": self.nested_vessel_prob,
            "part_prob": self.part_prob,
            "linked_prob": self.linked_prob,
            "perturbations": {k: v.to_dict() for k, v in sorted(self.perturbations.items())},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SyntheticPlan":
        known = {
            "scene_count", "image_width", "image_height", "vessels_per_scene",
            "materials_per_vessel", "nested_vessel_prob", "part_prob",
            "linked_prob", "perturbations", "seed",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown plan field(s) {sorted(unknown)}")
        return cls(**{k: v for k, v in doc.items()})

    @classmethod
    def from_json(cls, data: bytes | str) -> "SyntheticPlan":
        return cls.from_dict(json.loads(data))


_NO_PERTURBATION = Perturbation()


# ---------------------------------------------------------------------------
# shapes

@dataclass(frozen=True)
class _Shape:
    form: str  # "rect" | "ellipse"
    params: tuple[int, int, int, int]

    def mask(self, width: int, height: int) -> BinaryMask:
        if self.form == "rect":
            x0, y0, x1, y1 = self.params
            return _rect_mask(x0, y0, x1, y1, width, height)
        cx, cy, rx, ry = self.params
        return _ellipse_mask(cx, cy, rx, ry, width, height)

    def resized(self, delta: int) -> Optional["_Shape"]:
        if self.form == "rect":
            x0, y0, x1, y1 = self.params
            x0, y0, x1, y1 = x0 - delta, y0 - delta, x1 + delta, y1 + delta
            if x1 - x0 < 3 or y1 - y0 < 3:
                return None
            return _Shape("rect", (x0, y0, x1, y1))
        cx, cy, rx, ry = self.params
        rx, ry = rx + delta, ry + delta
        if rx < 2 or ry < 2:
            return None
        return _Shape("ellipse", (cx, cy, rx, ry))


def _rect_mask(x0: int, y0: int, x1: int, y1: int, width: int, height: int) -> BinaryMask:
    x0, x1 = max(x0, 0), min(x1, width)
    y0, y1 = max(y0, 0), min(y1, height)
    if x1 <= x0 or y1 <= y0:
        return BinaryMask.empty(width, height)
    rows = np.arange(y0, y1, dtype=np.int64)
    return BinaryMask.from_intervals(rows * width + x0, rows * width + x1, width, height)


def _ellipse_mask(cx: int, cy: int, rx: int, ry: int, width: int, height: int) -> BinaryMask:
    rows = np.arange(max(cy - ry, 0), min(cy + ry + 1, height), dtype=np.int64)
    t = 1.0 - ((rows - cy) / ry) ** 2
    dx = rx * np.sqrt(np.clip(t, 0.0, 1.0))
    x0 = np.maximum(np.ceil(cx - dx).astype(np.int64), 0)
    x1 = np.minimum(np.floor(cx + dx).astype(np.int64) + 1, width)
    keep = x1 > x0
    rows, x0, x1 = rows[keep], x0[keep], x1[keep]
    if rows.size == 0:
        return BinaryMask.empty(width, height)
    return BinaryMask.from_intervals(rows * width + x0, rows * width + x1, width, height)


# ---------------------------------------------------------------------------
# expectation records

@dataclass(frozen=True)
class ExpectedMetrics:
    """Counters an evaluator must reproduce exactly on a generated pair."""

    scene_count: int
    with_class: dict[str, PanopticCounters]
    agnostic: dict[str, AgnosticCounters]
    agnostic_total_fp: int
    relations: dict[str, RelationCounters]

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": EXPECTED_FORMAT,
            "scene_count": self.scene_count,
            "panoptic_with_class": {c: vars(v).copy() for c, v in sorted(self.with_class.items())},
            "panoptic_agnostic": {
                "classes": {c: vars(v).copy() for c, v in sorted(self.agnostic.items())},
                "total_fp": self.agnostic_total_fp,
            },
            "relations": {c: vars(v).copy() for c, v in sorted(self.relations.items())},
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ExpectedMetrics":
        if doc.get("format") != EXPECTED_FORMAT:
            raise ValueError(f"not an expected-metrics document (format={doc.get('format')!r})")
        return cls(
            scene_count=doc["scene_count"],
            with_class={c: PanopticCounters(**v) for c, v in doc["panoptic_with_class"].items()},
            agnostic={c: AgnosticCounters(**v) for c, v in doc["panoptic_agnostic"]["classes"].items()},
            agnostic_total_fp=doc["panoptic_agnostic"]["total_fp"],
            relations={c: RelationCounters(**v) for c, v in doc["relations"].items()},
        )


def load_expected_metrics(path) -> ExpectedMetrics:
    return ExpectedMetrics.from_dict(json.loads(Path(path).read_text("utf-8")))


def _merge(a: dict, b: Mapping) -> dict:
    out = dict(a)
    for key, value in b.items():
        out[key] = out[key] + value if key in out else value
    return {k: out[k] for k in sorted(out)}


# ---------------------------------------------------------------------------
# generation

@dataclass
class _Member:
    """One generated instance plus the geometry needed to perturb it."""

    instance: Instance
    shape: _Shape
    enclosing: tuple[str, ...]  # vessel ids this instance lies inside, innermost first


def generate_scene(plan: SyntheticPlan, index: int) -> tuple[SceneAnnotation, SceneAnnotation, ExpectedMetrics]:
    """Deterministically generate (gt, pred, expected counters) for one scene."""
    rng = np.random.default_rng([plan.seed, index])
    width, height = plan.image_width, plan.image_height
    margin = plan._margin()
    grid = plan._grid()
    cell_w, cell_h = width // grid, height // grid

    n_vessels = int(rng.integers(plan.vessels_per_scene[0], plan.vessels_per_scene[1] + 1))
    spurious_kinds = plan._spurious_kinds()
    order = rng.permutation(grid * grid)
    vessel_cells = order[:n_vessels]
    spare_cells = order[n_vessels:n_vessels + len(spurious_kinds)]

    members: list[_Member] = []
    counters = {"v": 0, "m": 0, "p": 0}

    def next_id(prefix: str) -> str:
        counters[prefix] += 1
        return f"{prefix}{counters[prefix] - 1:02d}"

    for cell in vessel_cells:
        cx0 = int(cell % grid) * cell_w
        cy0 = int(cell // grid) * cell_h
        members.extend(
            _build_vessel(rng, plan, next_id, cx0, cy0, cell_w, cell_h, margin, width, height)
        )
    top_level = [m.instance.id for m in members if m.instance.kind == KIND_VESSEL and not m.enclosing]

    relations: list[Relation] = []
    for member in members:
        for host in member.enclosing:
            relations.append(Relation("inside", member.instance.id, host))
            relations.append(Relation("contain", host, member.instance.id))
    for i, a in enumerate(top_level):
        for b in top_level[i + 1:]:
            if rng.random() < plan.linked_prob:
                relations.append(Relation("linked", a, b))
                relations.append(Relation("linked", b, a))

    gt_scene = SceneAnnotation(
        image_width=width,
        image_height=height,
        instances=tuple(m.instance for m in members),
        relations=tuple(relations),
        source_tag=f"synthetic:{plan.seed}:{index}",
    )

    pred_scene, expected = _perturb(rng, plan, gt_scene, members, spare_cells, grid, cell_w, cell_h, margin)
    return gt_scene, pred_scene, expected


def _build_vessel(rng, plan, next_id, cx0, cy0, cell_w, cell_h, margin, width, height) -> list[_Member]:
    """One vessel with its contents, confined to a grid cell."""
    avail_w, avail_h = cell_w - 2 * margin, cell_h - 2 * margin
    vw = int(rng.integers(_MIN_VESSEL, avail_w + 1))
    vh = int(rng.integers(_MIN_VESSEL, avail_h + 1))
    x0 = cx0 + margin + int(rng.integers(0, avail_w - vw + 1))
    y0 = cy0 + margin + int(rng.integers(0, avail_h - vh + 1))
    form = "rect" if rng.random() < 0.5 else "ellipse"
    if form == "rect":
        shape = _Shape("rect", (x0, y0, x0 + vw, y0 + vh))
        box = (x0 + 2, y0 + 2, x0 + vw - 2, y0 + vh - 2)
    else:
        rx, ry = vw // 2, vh // 2
        cx, cy = x0 + rx, y0 + ry
        shape = _Shape("ellipse", (cx, cy, rx, ry))
        half_w = int(rx / math.sqrt(2)) - 2
        half_h = int(ry / math.sqrt(2)) - 2
        box = (cx - half_w, cy - half_h, cx + half_w, cy + half_h)
    vid = next_id("v")
    vessel_mask = shape.mask(width, height)
    vessel = Instance(
        id=vid,
        kind=KIND_VESSEL,
        mask=vessel_mask,
        classes=DEFAULT_TAXONOMY.close({_pick(rng, _VESSEL_SUBS)}),
        properties=frozenset({_pick_weighted(rng, _VESSEL_PROPS, (0.6, 0.25, 0.15))}),
    )
    out = [_Member(vessel, shape, ())]
    out.extend(
        _fill_vessel(rng, plan, next_id, vid, vessel_mask.area, box, (vid,), width, height, allow_nesting=True)
    )
    return out


def _fill_vessel(rng, plan, next_id, vessel_id, vessel_area, box, enclosing, width, height, allow_nesting) -> list[_Member]:
    """Material bands (optionally a nested vessel or part) inside a content box."""
    bx0, by0, bx1, by1 = box
    box_w = bx1 - bx0
    out: list[_Member] = []
    resize_pad = plan._margin() - 3
    gap = 2 * resize_pad + 2
    top = by0

    nested = allow_nesting and rng.random() < plan.nested_vessel_prob
    if nested and box_w >= 24 and (by1 - by0) >= 48:
        nh = 24
        nw_cap = int(0.22 * vessel_area / nh)
        nw = min(box_w - 2, nw_cap)
        if nw >= 22:
            nx0 = bx0 + 1
            ny0 = by0 + 1
            nshape = _Shape("rect", (nx0, ny0, nx0 + nw, ny0 + nh))
            nid = next_id("v")
            nmask = nshape.mask(width, height)
            out.append(_Member(
                Instance(
                    id=nid,
                    kind=KIND_VESSEL,
                    mask=nmask,
                    classes=DEFAULT_TAXONOMY.close({_pick(rng, _VESSEL_SUBS)}),
                    properties=frozenset({_pick_weighted(rng, _VESSEL_PROPS, (0.6, 0.25, 0.15))}),
                ),
                nshape,
                enclosing,
            ))
            inner = (nx0 + 2, ny0 + 2, nx0 + nw - 2, ny0 + nh - 2)
            out.extend(_fill_vessel(
                rng, plan, next_id, nid, nmask.area, inner, (nid,) + enclosing,
                width, height, allow_nesting=False,
            ))
            top = ny0 + nh + gap
    elif not nested and rng.random() < plan.part_prob and (by1 - top) >= _MIN_BAND_H + gap + _MIN_BAND_H:
        ph = _MIN_BAND_H
        h_cap = int(0.25 * vessel_area / max(box_w - 2, 1))
        if h_cap >= ph:
            pshape = _Shape("rect", (bx0 + 1, top, bx1 - 1, top + ph))
            out.append(_Member(
                Instance(
                    id=next_id("p"),
                    kind=KIND_PART,
                    mask=pshape.mask(width, height),
                    classes=frozenset({_pick(rng, _PART_CLASSES)}),
                ),
                pshape,
                enclosing,
            ))
            top += ph + gap

    n_materials = int(rng.integers(plan.materials_per_vessel[0], plan.materials_per_vessel[1] + 1))
    area_budget = 0.38 * vessel_area
    bottom = by1
    for _ in range(n_materials):
        h = int(rng.integers(_MIN_BAND_H, _MAX_BAND_H + 1))
        h = min(h, int(0.25 * vessel_area / max(box_w - 2, 1)))
        if h < _MIN_BAND_H or bottom - h < top:
            break
        band_area = h * (box_w - 2)
        if band_area > area_budget:
            break
        area_budget -= band_area
        mshape = _Shape("rect", (bx0 + 1, bottom - h, bx1 - 1, bottom))
        props = frozenset()
        roll = rng.random()
        if roll < 0.1:
            props = frozenset({_MATERIAL_PROPS[0]})
        elif roll < 0.2:
            props = frozenset({_MATERIAL_PROPS[1]})
        out.append(_Member(
            Instance(
                id=next_id("m"),
                kind=KIND_MATERIAL,
                mask=mshape.mask(width, height),
                classes=DEFAULT_TAXONOMY.close({_pick(rng, _MATERIAL_SUBS)}),
                properties=props,
            ),
            mshape,
            enclosing,
        ))
        bottom -= h + gap
    return out


def _pick(rng, seq: Sequence[str]) -> str:
    return seq[int(rng.integers(len(seq)))]


def _pick_weighted(rng, seq: Sequence[str], weights: Sequence[float]) -> str:
    roll = rng.random()
    acc = 0.0
    for item, weight in zip(seq, weights):
        acc += weight
        if roll < acc:
            return item
    return seq[-1]


def _flip_classes(rng, instance: Instance) -> frozenset[str]:
    if instance.kind == KIND_VESSEL:
        pool = _VESSEL_SUBS
    elif instance.kind == KIND_MATERIAL:
        pool = _MATERIAL_SUBS
    else:
        pool = _PART_CLASSES
    current = instance.classes
    candidates = [c for c in pool if c not in current]
    chosen = _pick(rng, candidates)
    if instance.kind == KIND_PART:
        return frozenset({chosen})
    return DEFAULT_TAXONOMY.close({chosen})


def _resize_shape(rng, member: _Member, spec: Perturbation, width, height) -> Optional[tuple[_Shape, BinaryMask, float]]:
    """Grow or shrink, backing off until the perturbed mask stays matchable."""
    direction = -1 if rng.random() < 0.5 else 1
    k = int(rng.integers(1, spec.resize_max_px + 1))
    while k > 0:
        shape = member.shape.resized(direction * k)
        if shape is not None:
            mask = shape.mask(width, height)
            if mask.area > 0:
                pair_iou = iou(member.instance.mask, mask)
                if pair_iou is not None and pair_iou > _RESIZE_MIN_IOU:
                    return shape, mask, pair_iou
        k -= 1
    return None


_SPURIOUS_CLASSES = {
    KIND_VESSEL: "bottle",
    KIND_MATERIAL: "foam",
    KIND_PART: "label",
}


def _perturb(rng, plan, gt_scene, members, spare_cells, grid, cell_w, cell_h, margin):
    """Build the prediction scene and the exact expected counters."""
    width, height = gt_scene.image_width, gt_scene.image_height
    by_id = {m.instance.id: m for m in members}

    dropped: set[str] = set()
    pred_instances: dict[str, Instance] = {}
    pair_ious: dict[str, float] = {}

    # instances are iterated in canonical (id-sorted) order so that both the
    # random draws and the per-class IOU accumulation order are reproducible
    for instance in gt_scene.instances:
        spec = plan.perturbations.get(instance.kind, _NO_PERTURBATION)
        if rng.random() < spec.drop_prob:
            dropped.add(instance.id)
            continue
        pred = instance
        if rng.random() < spec.class_flip_prob:
            pred = replace(pred, classes=_flip_classes(rng, instance))
        pair_iou = 1.0
        if spec.resize_max_px > 0 and rng.random() < spec.resize_prob:
            resized = _resize_shape(rng, by_id[instance.id], spec, width, height)
            if resized is not None:
                _, mask, pair_iou = resized
                pred = replace(pred, mask=mask)
        pred_instances[instance.id] = pred
        pair_ious[instance.id] = pair_iou

    # spurious segments, one reserved grid cell per kind
    spurious: list[Instance] = []
    for kind, cell in zip(plan._spurious_kinds(), spare_cells):
        spec = plan.perturbations[kind]
        if rng.random() >= spec.spurious_prob:
            continue
        cx0 = int(cell % grid) * cell_w + margin
        cy0 = int(cell // grid) * cell_h + margin
        if kind == KIND_VESSEL:
            shape = _Shape("rect", (cx0, cy0, cx0 + _MIN_VESSEL, cy0 + _MIN_VESSEL))
            classes = DEFAULT_TAXONOMY.close({_SPURIOUS_CLASSES[kind]})
            free = False
        else:
            shape = _Shape("rect", (cx0, cy0, cx0 + 20, cy0 + 8))
            classes = (
                DEFAULT_TAXONOMY.close({_SPURIOUS_CLASSES[kind]})
                if kind == KIND_MATERIAL else frozenset({_SPURIOUS_CLASSES[kind]})
            )
            free = True
        spurious.append(Instance(
            id=f"s{kind[0]}00",
            kind=kind,
            mask=shape.mask(width, height),
            classes=classes,
            free_standing=free,
        ))

    # relations survive when both endpoints survive
    pred_relations = [
        r for r in gt_scene.relations
        if r.subject not in dropped and r.object not in dropped
    ]

    # content whose every enclosing vessel was dropped becomes free-standing
    inside_targets: dict[str, set[str]] = {}
    for r in pred_relations:
        if r.kind == "inside":
            inside_targets.setdefault(r.subject, set()).add(r.object)
    for iid, inst in list(pred_instances.items()):
        if inst.kind == KIND_VESSEL or inst.free_standing:
            continue
        anchored = any(
            iid2 in pred_instances and pred_instances[iid2].kind == KIND_VESSEL
            for iid2 in inside_targets.get(iid, ())
        )
        if not anchored:
            pred_instances[iid] = replace(inst, free_standing=True)

    pred_scene = SceneAnnotation(
        image_width=width,
        image_height=height,
        instances=tuple(pred_instances.values()) + tuple(spurious),
        relations=tuple(pred_relations),
        source_tag=gt_scene.source_tag,
    )

    expected = _expected_counters(gt_scene, pred_instances, pair_ious, dropped, spurious)
    return pred_scene, expected


def _expected_counters(gt_scene, pred_instances, pair_ious, dropped, spurious) -> ExpectedMetrics:
    wc_tp: dict[str, int] = {}
    wc_fp: dict[str, int] = {}
    wc_fn: dict[str, int] = {}
    wc_iou: dict[str, float] = {}
    ag: dict[str, AgnosticCounters] = {}

    for instance in gt_scene.instances:  # canonical order == ascending gt index
        gt_labels = instance.labels
        if instance.id in dropped:
            for cls in gt_labels:
                wc_fn[cls] = wc_fn.get(cls, 0) + 1
                ag[cls] = ag.get(cls, AgnosticCounters()) + AgnosticCounters(0, 1, 0.0, 1)
            continue
        pred = pred_instances[instance.id]
        pair_iou = pair_ious[instance.id]
        for cls in gt_labels:
            ag[cls] = ag.get(cls, AgnosticCounters()) + AgnosticCounters(1, 0, pair_iou, 1)
        pred_labels = pred.labels
        shared = pred_labels & gt_labels
        if shared:
            for cls in shared:
                wc_tp[cls] = wc_tp.get(cls, 0) + 1
                wc_iou[cls] = wc_iou.get(cls, 0.0) + pair_iou
            for cls in gt_labels - pred_labels:
                wc_fn[cls] = wc_fn.get(cls, 0) + 1
            for cls in pred_labels - gt_labels:
                wc_fp[cls] = wc_fp.get(cls, 0) + 1
        else:
            for cls in gt_labels:
                wc_fn[cls] = wc_fn.get(cls, 0) + 1
            for cls in pred_labels:
                wc_fp[cls] = wc_fp.get(cls, 0) + 1

    for inst in spurious:
        for cls in inst.labels:
            wc_fp[cls] = wc_fp.get(cls, 0) + 1

    with_class = {
        cls: PanopticCounters(wc_tp.get(cls, 0), wc_fp.get(cls, 0), wc_fn.get(cls, 0), wc_iou.get(cls, 0.0))
        for cls in sorted(set(wc_tp) | set(wc_fp) | set(wc_fn))
    }

    relations = _expected_relations(gt_scene, pred_instances, dropped, spurious)
    return ExpectedMetrics(
        scene_count=1,
        with_class=with_class,
        agnostic={cls: ag[cls] for cls in sorted(ag)},
        agnostic_total_fp=len(spurious),
        relations=relations,
    )


def _expected_relations(gt_scene, pred_instances, dropped, spurious) -> dict[str, RelationCounters]:
    gt_vessels = {i.id for i in gt_scene.instances if i.kind == KIND_VESSEL}
    pred_vessels = {i for i in gt_vessels if i not in dropped}
    pred_vessels |= {s.id for s in spurious if s.kind == KIND_VESSEL}
    universe = sorted(gt_vessels | pred_vessels)

    gt_triples = {
        r.as_tuple() for r in gt_scene.relations
        if r.subject in gt_vessels and r.object in gt_vessels
    }
    kept_triples = {
        t for t in gt_triples if t[1] not in dropped and t[2] not in dropped
    }

    counters: dict[str, RelationCounters] = {}
    for kind in ("inside", "contain"):
        gt_k = {(s, o) for k, s, o in gt_triples if k == kind}
        kept_k = {(s, o) for k, s, o in kept_triples if k == kind}
        counters[kind] = RelationCounters(len(kept_k), 0, len(gt_k - kept_k))
    gt_l = {frozenset((s, o)) for k, s, o in gt_triples if k == "linked"}
    kept_l = {frozenset((s, o)) for k, s, o in kept_triples if k == "linked"}
    counters["linked"] = RelationCounters(len(kept_l), 0, len(gt_l - kept_l))

    gt_related = {frozenset((s, o)) for _, s, o in gt_triples}
    pred_related = {frozenset((s, o)) for _, s, o in kept_triples}
    tp = fp = fn = 0
    for i, a in enumerate(universe):
        for b in universe[i + 1:]:
            pair = frozenset((a, b))
            gt_none = pair not in gt_related
            pred_none = pair not in pred_related
            tp += gt_none and pred_none
            fp += pred_none and not gt_none
            fn += gt_none and not pred_none
    counters["none"] = RelationCounters(tp, fp, fn)
    return {k: counters[k] for k in ("linked", "inside", "contain", "none")}


# ---------------------------------------------------------------------------
# dataset emission

def generate_dataset(plan: SyntheticPlan, out_dir) -> ExpectedMetrics:
    """Write gt/, pred/ document trees and the expected-metrics file.

    The same plan always produces byte-identical trees.
    """
    out = Path(out_dir)
    gt_dir = out / "gt"
    pred_dir = out / "pred"
    gt_dir.mkdir(parents=True, exist_ok=True)
    pred_dir.mkdir(parents=True, exist_ok=True)

    merged: Optional[ExpectedMetrics] = None
    for index in range(plan.scene_count):
        gt_scene, pred_scene, expected = generate_scene(plan, index)
        name = f"scene_{index:05d}.json"
        (gt_dir / name).write_bytes(serialize_scene(gt_scene))
        (pred_dir / name).write_bytes(serialize_scene(pred_scene))
        if merged is None:
            merged = expected
        else:
            merged = ExpectedMetrics(
                scene_count=merged.scene_count + expected.scene_count,
                with_class=_merge(merged.with_class, expected.with_class),
                agnostic=_merge(merged.agnostic, expected.agnostic),
                agnostic_total_fp=merged.agnostic_total_fp + expected.agnostic_total_fp,
                relations=_merge(merged.relations, expected.relations),
            )
    if merged is None:
        merged = ExpectedMetrics(0, {}, {}, 0, {})
    payload = json.dumps(merged.to_dict(), sort_keys=True) + "\n"
    (out / "expected_metrics.json").write_text(payload, "utf-8")
    return merged


# ---------------------------------------------------------------------------
# the canonical nesting demonstration

def nested_demo_scene(width: int = 160, height: int = 160) -> SceneAnnotation:
    """A tube holding a pipette holding blood, with transitively closed
    containment edges: the blood lies inside the tube region yet is direct
    content of the pipette only."""
    tube = Instance(
        id="tube0",
        kind=KIND_VESSEL,
        mask=_rect_mask(20, 10, 120, 140, width, height),
        classes=DEFAULT_TAXONOMY.close({"tube"}),
        properties=frozenset({"transparent"}),
    )
    pipette = Instance(
        id="pipette0",
        kind=KIND_VESSEL,
        mask=_rect_mask(40, 30, 80, 80, width, height),
        classes=DEFAULT_TAXONOMY.close({"pipette"}),
        properties=frozenset({"transparent"}),
    )
    blood = Instance(
        id="blood0",
        kind=KIND_MATERIAL,
        mask=_rect_mask(45, 55, 75, 72, width, height),
        classes=DEFAULT_TAXONOMY.close({"blood"}),
    )
    relations = []
    for subject, obj in (("pipette0", "tube0"), ("blood0", "pipette0"), ("blood0", "tube0")):
        relations.append(Relation("inside", subject, obj))
        relations.append(Relation("contain", obj, subject))
    return SceneAnnotation(
        image_width=width,
        image_height=height,
        instances=(tube, pipette, blood),
        relations=tuple(relations),
        source_tag="nested-demo",
    )
