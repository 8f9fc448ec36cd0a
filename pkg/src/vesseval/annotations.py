"""Scene annotation schema: parsing, serialization, validation, hierarchy queries.

One document describes one image: its instances (vessels, materials, parts),
each with an RLE mask, class set and property set, plus the directed
relation set (inside / contain / linked).  Documents are UTF-8 JSON; see
``serialize_scene`` for the canonical byte layout.
"""

from __future__ import annotations

import graphlib
import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Optional, Sequence

from .masks import BinaryMask
from .taxonomy import DEFAULT_TAXONOMY, INSTANCE_KINDS, KIND_PROPERTY, KIND_VESSEL, Taxonomy

__all__ = [
    "AnnotationError",
    "AnnotationSchemaError",
    "AnnotationSemanticError",
    "AnnotationSyntaxError",
    "DOCUMENT_VERSION",
    "Instance",
    "MASK_FORMAT",
    "RELATION_KINDS",
    "Relation",
    "SceneAnnotation",
    "Violation",
    "direct_content_of",
    "parse_scene",
    "serialize_scene",
    "validate_scene",
]

DOCUMENT_VERSION = "1.0"
MASK_FORMAT = "rle_v1"
RELATION_KINDS = ("inside", "contain", "linked")


class AnnotationError(Exception):
    """Base for all annotation document failures."""


class AnnotationSyntaxError(AnnotationError):
    """The document is not well-formed at the text level."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class AnnotationSchemaError(AnnotationError):
    """A required field is missing, unknown, or has the wrong shape."""

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


class AnnotationSemanticError(AnnotationError):
    """The document parsed but violates scene invariants."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"{len(self.violations)} violation(s): {lines}{more}")


@dataclass(frozen=True)
class Violation:
    """One invariant violation, with a machine-readable code and the ids involved."""

    code: str
    message: str
    ids: tuple[str, ...] = ()

    def __str__(self) -> str:
        where = f" [{', '.join(self.ids)}]" if self.ids else ""
        return f"{self.code}: {self.message}{where}"


@dataclass(frozen=True)
class Instance:
    """One annotated object: a vessel, a material phase, or a vessel part."""

    id: str
    kind: str
    mask: BinaryMask
    classes: frozenset[str]
    properties: frozenset[str] = frozenset()
    free_standing: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", frozenset(self.classes))
        object.__setattr__(self, "properties", frozenset(self.properties))

    @property
    def labels(self) -> frozenset[str]:
        """Classes and properties together; the label set used by the metrics."""
        return self.classes | self.properties


@dataclass(frozen=True)
class Relation:
    kind: str
    subject: str
    object: str

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.kind, self.subject, self.object)


@dataclass(frozen=True)
class SceneAnnotation:
    """All instances of one image plus the directed relation set."""

    image_width: int
    image_height: int
    instances: tuple[Instance, ...] = ()
    relations: tuple[Relation, ...] = ()
    source_tag: str = ""
    image_file: Optional[str] = None

    def __post_init__(self) -> None:
        # canonical order makes equality structural and serialization stable
        object.__setattr__(self, "instances", tuple(sorted(self.instances, key=lambda i: i.id)))
        object.__setattr__(self, "relations", tuple(sorted(self.relations, key=Relation.as_tuple)))

    @cached_property
    def by_id(self) -> dict[str, Instance]:
        return {inst.id: inst for inst in self.instances}

    def instance(self, instance_id: str) -> Instance:
        try:
            return self.by_id[instance_id]
        except KeyError:
            raise KeyError(f"no instance with id {instance_id!r}") from None

    def vessels(self) -> tuple[Instance, ...]:
        return tuple(i for i in self.instances if i.kind == KIND_VESSEL)

    @cached_property
    def relation_set(self) -> frozenset[tuple[str, str, str]]:
        return frozenset(r.as_tuple() for r in self.relations)


# ---------------------------------------------------------------------------
# parsing

def _require(obj: Mapping[str, Any], key: str, types, path: str):
    if key not in obj:
        raise AnnotationSchemaError(f"missing required field {key!r}", path)
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool) and bool not in _as_tuple(types):
        raise AnnotationSchemaError(
            f"field {key!r} has wrong type {type(value).__name__}", path
        )
    return value


def _as_tuple(types) -> tuple:
    return types if isinstance(types, tuple) else (types,)


def _reject_extra(obj: Mapping[str, Any], allowed: Iterable[str], path: str) -> None:
    extra = set(obj) - set(allowed)
    if extra:
        raise AnnotationSchemaError(f"unknown field(s) {sorted(extra)}", path)


def _parse_mask(obj: Any, path: str) -> BinaryMask:
    if not isinstance(obj, dict):
        raise AnnotationSchemaError("mask must be an object", path)
    _reject_extra(obj, ("format", "width", "height", "runs"), path)
    fmt = _require(obj, "format", str, path)
    if fmt != MASK_FORMAT:
        raise AnnotationSchemaError(f"unsupported mask format {fmt!r}", path)
    width = _require(obj, "width", int, path)
    height = _require(obj, "height", int, path)
    runs = _require(obj, "runs", list, path)
    try:
        return BinaryMask(width, height, tuple(runs))
    except (ValueError, TypeError) as exc:
        raise AnnotationSchemaError(f"invalid mask runs: {exc}", path) from exc


def _parse_instance(obj: Any, path: str, taxonomy: Taxonomy, unknown_classes: str) -> Instance:
    if not isinstance(obj, dict):
        raise AnnotationSchemaError("instance must be an object", path)
    _reject_extra(obj, ("id", "kind", "classes", "properties", "free_standing", "mask"), path)
    inst_id = _require(obj, "id", str, path)
    kind = _require(obj, "kind", str, path)
    if kind not in INSTANCE_KINDS:
        raise AnnotationSchemaError(f"unknown instance kind {kind!r}", path)
    classes = _require(obj, "classes", list, path)
    properties = obj.get("properties", [])
    if not isinstance(properties, list):
        raise AnnotationSchemaError("field 'properties' has wrong type", path)
    for name in list(classes) + list(properties):
        if not isinstance(name, str):
            raise AnnotationSchemaError("class and property names must be strings", path)
    free_standing = obj.get("free_standing", False)
    if not isinstance(free_standing, bool):
        raise AnnotationSchemaError("field 'free_standing' has wrong type", path)
    if unknown_classes == "warn":
        known = [c for c in classes if taxonomy.is_known(c)]
        known_props = [p for p in properties if taxonomy.is_known(p)]
        dropped = sorted(set(classes) - set(known) | set(properties) - set(known_props))
        if dropped:
            warnings.warn(
                f"instance {inst_id!r}: dropping unknown class name(s) {dropped}",
                stacklevel=3,
            )
        classes, properties = known, known_props
    mask = _parse_mask(_require(obj, "mask", dict, path), f"{path}.mask")
    return Instance(
        id=inst_id,
        kind=kind,
        mask=mask,
        classes=frozenset(classes),
        properties=frozenset(properties),
        free_standing=free_standing,
    )


def _parse_relation(obj: Any, path: str) -> Relation:
    if not isinstance(obj, dict):
        raise AnnotationSchemaError("relation must be an object", path)
    _reject_extra(obj, ("kind", "subject", "object"), path)
    kind = _require(obj, "kind", str, path)
    if kind not in RELATION_KINDS:
        raise AnnotationSchemaError(f"unknown relation kind {kind!r}", path)
    return Relation(kind, _require(obj, "subject", str, path), _require(obj, "object", str, path))


def parse_scene(
    document: bytes | str,
    *,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    unknown_classes: str = "error",
) -> SceneAnnotation:
    """Parse and fully validate one annotation document.

    Raises AnnotationSyntaxError (malformed text, with position),
    AnnotationSchemaError (missing/unknown/ill-typed field) or
    AnnotationSemanticError (invariant violations, with offending ids).
    With ``unknown_classes="warn"`` unknown class names are dropped with a
    warning instead of failing.
    """
    if unknown_classes not in ("error", "warn"):
        raise ValueError("unknown_classes must be 'error' or 'warn'")
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise AnnotationSyntaxError(f"document is not valid UTF-8: {exc}") from exc
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise AnnotationSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(data, dict):
        raise AnnotationSchemaError("document root must be an object")
    _reject_extra(data, ("version", "image", "instances", "relations", "source"), "$")
    version = _require(data, "version", str, "$")
    if version != DOCUMENT_VERSION:
        raise AnnotationSchemaError(f"unsupported document version {version!r}", "$")
    image = _require(data, "image", dict, "$")
    _reject_extra(image, ("width", "height", "file"), "$.image")
    width = _require(image, "width", int, "$.image")
    height = _require(image, "height", int, "$.image")
    image_file = image.get("file")
    if image_file is not None and not isinstance(image_file, str):
        raise AnnotationSchemaError("field 'file' has wrong type", "$.image")
    source = data.get("source", "")
    if not isinstance(source, str):
        raise AnnotationSchemaError("field 'source' has wrong type", "$")
    raw_instances = _require(data, "instances", list, "$")
    raw_relations = _require(data, "relations", list, "$")
    instances = [
        _parse_instance(obj, f"$.instances[{i}]", taxonomy, unknown_classes)
        for i, obj in enumerate(raw_instances)
    ]
    relations = [_parse_relation(obj, f"$.relations[{i}]") for i, obj in enumerate(raw_relations)]
    scene = SceneAnnotation(
        image_width=width,
        image_height=height,
        instances=tuple(instances),
        relations=tuple(relations),
        source_tag=source,
        image_file=image_file,
    )
    violations = validate_scene(scene, taxonomy=taxonomy)
    if violations:
        raise AnnotationSemanticError(violations)
    return scene


# ---------------------------------------------------------------------------
# serialization

def serialize_scene(scene: SceneAnnotation) -> bytes:
    """Byte-deterministic canonical form: sorted keys, instances by id, relations sorted."""
    doc: dict[str, Any] = {
        "version": DOCUMENT_VERSION,
        "image": {"width": scene.image_width, "height": scene.image_height},
        "instances": [
            {
                "id": inst.id,
                "kind": inst.kind,
                "classes": sorted(inst.classes),
                "properties": sorted(inst.properties),
                "free_standing": inst.free_standing,
                "mask": {
                    "format": MASK_FORMAT,
                    "width": inst.mask.width,
                    "height": inst.mask.height,
                    "runs": list(inst.mask.runs),
                },
            }
            for inst in sorted(scene.instances, key=lambda i: i.id)
        ],
        "relations": [
            {"kind": r.kind, "subject": r.subject, "object": r.object}
            for r in sorted(scene.relations, key=Relation.as_tuple)
        ],
    }
    if scene.image_file is not None:
        doc["image"]["file"] = scene.image_file
    if scene.source_tag:
        doc["source"] = scene.source_tag
    # compact separators: runs arrays dominate a document, so no pretty-printing
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# validation

def validate_scene(scene: SceneAnnotation, *, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> list[Violation]:
    """All invariant violations of a structurally well-formed scene; empty iff valid."""
    out: list[Violation] = []
    if scene.image_width <= 0 or scene.image_height <= 0:
        out.append(Violation("image-dims", "image dimensions must be positive"))
        return out

    seen: set[str] = set()
    for inst in scene.instances:
        if inst.id in seen:
            out.append(Violation("duplicate-id", "instance id used more than once", (inst.id,)))
        seen.add(inst.id)
        out.extend(_validate_instance(inst, scene, taxonomy))

    ids = {i.id for i in scene.instances}
    rel_seen: set[tuple[str, str, str]] = set()
    for rel in scene.relations:
        key = rel.as_tuple()
        if key in rel_seen:
            out.append(Violation("duplicate-relation", f"relation {key} repeated", (rel.subject, rel.object)))
            continue
        rel_seen.add(key)
        if rel.kind not in RELATION_KINDS:
            out.append(Violation("unknown-relation-kind", f"unknown relation kind {rel.kind!r}", (rel.subject, rel.object)))
            continue
        if rel.subject == rel.object:
            out.append(Violation("self-relation", "relation endpoints must differ", (rel.subject,)))
            continue
        missing = [e for e in (rel.subject, rel.object) if e not in ids]
        if missing:
            out.append(Violation("unknown-endpoint", f"relation references unknown instance id(s)", tuple(missing)))
            continue
        if rel.kind == "linked":
            nonvessels = [
                e for e in (rel.subject, rel.object)
                if scene.by_id[e].kind != KIND_VESSEL
            ]
            if nonvessels:
                out.append(Violation("linked-non-vessel", "'linked' may only relate two vessels", tuple(nonvessels)))

    triples = scene.relation_set
    for rel in scene.relations:
        if rel.subject == rel.object or rel.subject not in ids or rel.object not in ids:
            continue
        if rel.kind == "inside" and ("contain", rel.object, rel.subject) not in triples:
            out.append(Violation(
                "missing-reciprocal",
                f"inside({rel.subject},{rel.object}) has no contain({rel.object},{rel.subject})",
                (rel.subject, rel.object),
            ))
        elif rel.kind == "contain" and ("inside", rel.object, rel.subject) not in triples:
            out.append(Violation(
                "missing-reciprocal",
                f"contain({rel.subject},{rel.object}) has no inside({rel.object},{rel.subject})",
                (rel.subject, rel.object),
            ))
        elif rel.kind == "linked" and ("linked", rel.object, rel.subject) not in triples:
            out.append(Violation(
                "linked-asymmetric",
                f"linked({rel.subject},{rel.object}) has no mirrored linked({rel.object},{rel.subject})",
                (rel.subject, rel.object),
            ))

    out.extend(_validate_vessel_acyclicity(scene))
    out.extend(_validate_anchoring(scene))
    return out


def _validate_instance(inst: Instance, scene: SceneAnnotation, taxonomy: Taxonomy) -> list[Violation]:
    out: list[Violation] = []
    if inst.kind not in INSTANCE_KINDS:
        out.append(Violation("unknown-kind", f"unknown instance kind {inst.kind!r}", (inst.id,)))
        return out
    unknown = sorted(c for c in inst.classes | inst.properties if not taxonomy.is_known(c))
    if unknown:
        out.append(Violation("unknown-class", f"unknown class name(s) {unknown}", (inst.id,)))
        return out
    mismatched = sorted(c for c in inst.classes if taxonomy.kind_of(c) != inst.kind)
    if mismatched:
        out.append(Violation(
            "class-kind-mismatch",
            f"{inst.kind} instance carries non-{inst.kind} class(es) {mismatched}",
            (inst.id,),
        ))
    bad_props = sorted(p for p in inst.properties if taxonomy.kind_of(p) != KIND_PROPERTY)
    if bad_props:
        out.append(Violation("invalid-property", f"non-property name(s) in properties {bad_props}", (inst.id,)))
    missing = sorted(taxonomy.close(c for c in inst.classes if taxonomy.is_known(c)) - inst.classes)
    if missing:
        out.append(Violation(
            "taxonomy-closure",
            f"class set is missing ancestor(s) {missing}",
            (inst.id,),
        ))
    if inst.mask.width != scene.image_width or inst.mask.height != scene.image_height:
        out.append(Violation(
            "mask-dimensions",
            f"mask is {inst.mask.width}x{inst.mask.height}, scene is "
            f"{scene.image_width}x{scene.image_height}",
            (inst.id,),
        ))
    return out


def _inside_edges(scene: SceneAnnotation) -> dict[str, set[str]]:
    """subject -> set of objects it is inside of (well-formed endpoints only)."""
    edges: dict[str, set[str]] = {}
    for rel in scene.relations:
        if rel.kind == "inside" and rel.subject in scene.by_id and rel.object in scene.by_id:
            edges.setdefault(rel.subject, set()).add(rel.object)
    return edges


def _validate_vessel_acyclicity(scene: SceneAnnotation) -> list[Violation]:
    graph: dict[str, set[str]] = {}
    for subject, objects in _inside_edges(scene).items():
        if scene.by_id[subject].kind != KIND_VESSEL:
            continue
        graph[subject] = {o for o in objects if scene.by_id[o].kind == KIND_VESSEL}
    sorter = graphlib.TopologicalSorter(graph)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = tuple(dict.fromkeys(exc.args[1]))
        return [Violation("containment-cycle", "vessel inside-relation contains a cycle", cycle)]
    return []


def _validate_anchoring(scene: SceneAnnotation) -> list[Violation]:
    out = []
    edges = _inside_edges(scene)
    for inst in scene.instances:
        if inst.kind == KIND_VESSEL or inst.free_standing:
            continue
        # transitive reachability: a solid inside a liquid inside a cup is anchored
        stack, visited, anchored = [inst.id], {inst.id}, False
        while stack and not anchored:
            for target in edges.get(stack.pop(), ()):
                if scene.by_id[target].kind == KIND_VESSEL:
                    anchored = True
                    break
                if target not in visited:
                    visited.add(target)
                    stack.append(target)
        if not anchored:
            out.append(Violation(
                "unanchored-instance",
                f"{inst.kind} instance is inside no vessel and not flagged free-standing",
                (inst.id,),
            ))
    return out


# ---------------------------------------------------------------------------
# hierarchy queries

def direct_content_of(scene: SceneAnnotation, vessel_id: str) -> frozenset[str]:
    """Instances directly inside a vessel, excluding content of nested vessels.

    X is direct content of V iff inside(X, V) holds and there is no vessel
    W != V with inside(X, W) and inside(W, V).
    """
    vessel = scene.instance(vessel_id)
    if vessel.kind != KIND_VESSEL:
        raise ValueError(f"instance {vessel_id!r} is a {vessel.kind}, not a vessel")
    edges = _inside_edges(scene)
    inside_vessel = {s for s, objs in edges.items() if vessel_id in objs}
    direct = set()
    for candidate in inside_vessel:
        nested_hosts = {
            w for w in edges.get(candidate, ())
            if w != vessel_id and w in inside_vessel and scene.by_id[w].kind == KIND_VESSEL
        }
        if not nested_hosts:
            direct.add(candidate)
    return frozenset(direct)
