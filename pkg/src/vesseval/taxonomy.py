"""The closed class taxonomy for vessels, materials, parts and properties."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

__all__ = [
    "DEFAULT_TAXONOMY",
    "KIND_MATERIAL",
    "KIND_PART",
    "KIND_PROPERTY",
    "KIND_VESSEL",
    "Taxonomy",
]

KIND_VESSEL = "vessel"
KIND_MATERIAL = "material"
KIND_PART = "part"
KIND_PROPERTY = "property"

INSTANCE_KINDS = (KIND_VESSEL, KIND_MATERIAL, KIND_PART)

_VESSEL_SUBCLASSES = (
    "tube", "iv_bag", "iv_bottle", "drip_chamber", "bottle", "syringe",
    "pipette", "beaker", "bowl", "cup", "plate", "flask", "jar",
)
_MATERIAL_SUBCLASSES = (
    "liquid", "suspension", "blood", "urine", "solid", "powder",
    "granular", "foam", "gel",
)
_PART_CLASSES = ("label", "spike", "cork")
_PROPERTY_CLASSES = ("transparent", "semi_transparent", "opaque", "scattered", "on_surface")


@dataclass(frozen=True)
class Taxonomy:
    """Class names, their kinds, and the direct superclass edges.

    The default taxonomy is closed; extending it requires building a new
    Taxonomy explicitly (see :meth:`extended`).
    """

    kinds: Mapping[str, str] = field(default_factory=dict)
    parents: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, kind in self.kinds.items():
            if kind not in INSTANCE_KINDS + (KIND_PROPERTY,):
                raise ValueError(f"class {name!r} has unknown kind {kind!r}")
        for child, parents in self.parents.items():
            for parent in (child,) + tuple(parents):
                if parent not in self.kinds:
                    raise ValueError(f"parent edge references unknown class {parent!r}")

    def is_known(self, name: str) -> bool:
        return name in self.kinds

    def kind_of(self, name: str) -> str:
        try:
            return self.kinds[name]
        except KeyError:
            raise KeyError(f"unknown class name {name!r}") from None

    @cached_property
    def _ancestors(self) -> dict[str, frozenset[str]]:
        out: dict[str, frozenset[str]] = {}

        def resolve(name: str) -> frozenset[str]:
            if name not in out:
                direct = self.parents.get(name, ())
                acc: set[str] = set()
                for p in direct:
                    acc.add(p)
                    acc |= resolve(p)
                out[name] = frozenset(acc)
            return out[name]

        for name in self.kinds:
            resolve(name)
        return out

    def ancestors(self, name: str) -> frozenset[str]:
        """All transitive superclasses of a class (empty for roots)."""
        if name not in self.kinds:
            raise KeyError(f"unknown class name {name!r}")
        return self._ancestors[name]

    def close(self, names: Iterable[str]) -> frozenset[str]:
        """Add every ancestor of every given class; idempotent."""
        closed: set[str] = set()
        for name in names:
            closed.add(name)
            closed |= self.ancestors(name)
        return frozenset(closed)

    def classes_of_kind(self, kind: str) -> tuple[str, ...]:
        """Class names of one kind, in canonical display order."""
        return tuple(n for n, k in self.kinds.items() if k == kind)

    def extended(self, extra: Mapping[str, str], extra_parents: Mapping[str, Iterable[str]] | None = None) -> "Taxonomy":
        """New taxonomy with additional classes (the explicit-config escape hatch)."""
        kinds = dict(self.kinds)
        for name, kind in extra.items():
            if name in kinds:
                raise ValueError(f"class {name!r} already exists")
            kinds[name] = kind
        parents = {k: tuple(v) for k, v in self.parents.items()}
        for name, ps in (extra_parents or {}).items():
            parents[name] = tuple(ps)
        return Taxonomy(kinds, parents)


def _build_default() -> Taxonomy:
    kinds: dict[str, str] = {KIND_VESSEL: KIND_VESSEL}
    parents: dict[str, tuple[str, ...]] = {}
    for sub in _VESSEL_SUBCLASSES:
        kinds[sub] = KIND_VESSEL
        parents[sub] = (KIND_VESSEL,)
    kinds["filled"] = KIND_MATERIAL
    for sub in _MATERIAL_SUBCLASSES:
        kinds[sub] = KIND_MATERIAL
        parents[sub] = ("filled",)
    parents["blood"] = ("liquid",)
    parents["urine"] = ("liquid",)
    parents["powder"] = ("solid",)
    parents["granular"] = ("solid",)
    for name in _PART_CLASSES:
        kinds[name] = KIND_PART
    for name in _PROPERTY_CLASSES:
        kinds[name] = KIND_PROPERTY
    return Taxonomy(kinds, parents)


DEFAULT_TAXONOMY = _build_default()
