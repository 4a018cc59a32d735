"""Database schemas with statistics: relation row counts, per-attribute distinct
counts, strict JSON loading, and seeded synthetic generation.

The catalog fixes the global dimensions used by every state vector: the number
of relations (one column per relation in tree/join encodings) and the total
number of attributes (one slot per attribute in the selection encoding).
Relation and attribute order is canonical: it is the document/generation order
and defines all vector column indices.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class CatalogError(ValueError):
    """Malformed catalog document or statistics invariant violation."""


@dataclass(frozen=True)
class AttributeStats:
    name: str
    distinct_count: int

    def __post_init__(self) -> None:
        if not self.name:
            raise CatalogError("attribute name must be non-empty")
        if self.distinct_count < 1:
            raise CatalogError(
                f"attribute {self.name!r}: distinct_count must be >= 1, got {self.distinct_count}"
            )


@dataclass(frozen=True)
class RelationStats:
    name: str
    row_count: int
    attributes: tuple[AttributeStats, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise CatalogError("relation name must be non-empty")
        if self.row_count < 1:
            raise CatalogError(f"relation {self.name!r}: row_count must be >= 1")
        if not self.attributes:
            raise CatalogError(f"relation {self.name!r} must have at least one attribute")
        seen = set()
        for attr in self.attributes:
            if attr.name in seen:
                raise CatalogError(f"relation {self.name!r}: duplicate attribute {attr.name!r}")
            seen.add(attr.name)
            if attr.distinct_count > self.row_count:
                raise CatalogError(
                    f"relation {self.name!r}: attribute {attr.name!r} has "
                    f"distinct_count {attr.distinct_count} > row_count {self.row_count}"
                )

    def attribute(self, name: str) -> AttributeStats:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        raise CatalogError(f"unknown attribute {name!r} in relation {self.name!r}")


@dataclass(frozen=True)
class Catalog:
    relations: tuple[RelationStats, ...]

    def __post_init__(self) -> None:
        if len(self.relations) < 2:
            raise CatalogError("catalog must contain at least 2 relations")
        seen = set()
        for rel in self.relations:
            if rel.name in seen:
                raise CatalogError(f"duplicate relation name {rel.name!r}")
            seen.add(rel.name)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_attributes(self) -> int:
        return sum(len(rel.attributes) for rel in self.relations)

    @cached_property
    def _relation_positions(self) -> dict[str, int]:
        return {rel.name: i for i, rel in enumerate(self.relations)}

    @cached_property
    def _attribute_positions(self) -> dict[tuple[str, str], int]:
        index = {}
        pos = 0
        for rel in self.relations:
            for attr in rel.attributes:
                index[(rel.name, attr.name)] = pos
                pos += 1
        return index

    def has_relation(self, name: str) -> bool:
        return name in self._relation_positions

    def relation(self, name: str) -> RelationStats:
        try:
            return self.relations[self._relation_positions[name]]
        except KeyError:
            raise CatalogError(f"unknown relation {name!r}") from None

    def relation_index(self, name: str) -> int:
        try:
            return self._relation_positions[name]
        except KeyError:
            raise CatalogError(f"unknown relation {name!r}") from None

    def attribute_pairs(self) -> list[tuple[str, str]]:
        """All (relation, attribute) pairs in canonical order."""
        return [(rel.name, attr.name) for rel in self.relations for attr in rel.attributes]

    def distinct_count(self, relation: str, attribute: str) -> int:
        return self.relation(relation).attribute(attribute).distinct_count

    def to_json_obj(self) -> dict:
        return {
            "relations": [
                {
                    "name": rel.name,
                    "rows": rel.row_count,
                    "attributes": [
                        {"name": a.name, "distinct": a.distinct_count} for a in rel.attributes
                    ],
                }
                for rel in self.relations
            ]
        }

    def to_text(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2) + "\n"

    def fingerprint(self) -> str:
        """Stable content hash, used to pair checkpoints with their catalog."""
        canonical = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def global_attribute_index(catalog: Catalog, relation: str, attribute: str) -> int:
    """Position of (relation, attribute) in the canonical flat attribute order.

    A bijection onto [0, n_attributes): relations in catalog order, attributes
    in relation order.
    """
    if not catalog.has_relation(relation):
        raise CatalogError(f"unknown relation {relation!r}")
    try:
        return catalog._attribute_positions[(relation, attribute)]
    except KeyError:
        raise CatalogError(f"unknown attribute {attribute!r} in relation {relation!r}") from None


def _require_fields(obj: dict, required: tuple[str, ...], where: str) -> None:
    if not isinstance(obj, dict):
        raise CatalogError(f"{where}: expected an object, got {type(obj).__name__}")
    missing = [f for f in required if f not in obj]
    if missing:
        raise CatalogError(f"{where}: missing field(s) {missing}")
    unknown = [f for f in obj if f not in required]
    if unknown:
        raise CatalogError(f"{where}: unknown field(s) {unknown}")


def _require_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CatalogError(f"{where}: expected an integer, got {value!r}")
    return value


def _require_str(value, where: str) -> str:
    if not isinstance(value, str):
        raise CatalogError(f"{where}: expected a string, got {value!r}")
    return value


def load_catalog(text: str) -> Catalog:
    """Parse a catalog document.

    Format: ``{"relations": [{"name": ..., "rows": ..., "attributes":
    [{"name": ..., "distinct": ...}]}]}``. Unknown fields are rejected.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"catalog parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _require_fields(doc, ("relations",), "catalog")
    if not isinstance(doc["relations"], list):
        raise CatalogError("catalog: 'relations' must be a list")
    relations = []
    for i, rel_obj in enumerate(doc["relations"]):
        where = f"relations[{i}]"
        _require_fields(rel_obj, ("name", "rows", "attributes"), where)
        name = _require_str(rel_obj["name"], f"{where}.name")
        rows = _require_int(rel_obj["rows"], f"{where}.rows")
        if not isinstance(rel_obj["attributes"], list):
            raise CatalogError(f"{where}.attributes: expected a list")
        attrs = []
        for j, attr_obj in enumerate(rel_obj["attributes"]):
            attr_where = f"{where}.attributes[{j}]"
            _require_fields(attr_obj, ("name", "distinct"), attr_where)
            attrs.append(
                AttributeStats(
                    name=_require_str(attr_obj["name"], f"{attr_where}.name"),
                    distinct_count=_require_int(attr_obj["distinct"], f"{attr_where}.distinct"),
                )
            )
        relations.append(RelationStats(name=name, row_count=rows, attributes=tuple(attrs)))
    return Catalog(relations=tuple(relations))


def _relation_name(index: int) -> str:
    letters = string.ascii_uppercase
    if index < len(letters):
        return letters[index]
    return f"R{index}"


def generate_catalog(
    seed: int,
    n_relations: int,
    row_range: tuple[int, int],
    attrs_per_relation: tuple[int, int],
) -> Catalog:
    """Deterministically generate a synthetic catalog.

    Each relation gets a join-key-like first attribute ``id`` whose distinct
    count equals the row count; remaining attributes draw distinct counts
    uniformly from [1, row_count].
    """
    if n_relations < 2:
        raise CatalogError("n_relations must be >= 2")
    row_lo, row_hi = row_range
    attr_lo, attr_hi = attrs_per_relation
    if row_lo < 1 or row_lo > row_hi:
        raise CatalogError(f"invalid row range [{row_lo}, {row_hi}]")
    if attr_lo < 1 or attr_lo > attr_hi:
        raise CatalogError(f"invalid attribute-count range [{attr_lo}, {attr_hi}]")
    rng = np.random.default_rng(seed)
    relations = []
    for i in range(n_relations):
        rows = int(rng.integers(row_lo, row_hi + 1))
        n_attrs = int(rng.integers(attr_lo, attr_hi + 1))
        attrs = [AttributeStats(name="id", distinct_count=rows)]
        for j in range(1, n_attrs):
            attrs.append(
                AttributeStats(name=f"a{j}", distinct_count=int(rng.integers(1, rows + 1)))
            )
        relations.append(
            RelationStats(name=_relation_name(i), row_count=rows, attributes=tuple(attrs))
        )
    return Catalog(relations=tuple(relations))
