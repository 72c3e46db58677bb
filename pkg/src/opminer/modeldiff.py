"""Model versions, id-based matching, difference graphs and simple change graphs.

Two successive versions of a typed model are matched on persistent element
ids, merged into one difference graph whose labels carry preserved_/create_/
delete_ prefixes, and reduced to the simple change graph (SCG): all changed
elements plus the minimal preserved nodes needed to complete dangling changed
edges. SCG connected components are the transactions the miner consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from .graphcore import LabeledGraph, connected_components

PRESERVED = "preserved_"
CREATE = "create_"
DELETE = "delete_"
PREFIXES = (PRESERVED, CREATE, DELETE)


class ModelError(ValueError):
    """Malformed model, meta-model, or a conformance violation."""


def split_prefix(label: str) -> tuple[str, str]:
    """Split a change-graph label into (prefix, type name); error if unprefixed."""
    for prefix in PREFIXES:
        if label.startswith(prefix):
            return prefix, label[len(prefix):]
    raise ModelError(f"label {label!r} carries no change prefix")


@dataclass(frozen=True)
class EdgeType:
    name: str
    src: str
    tgt: str
    containment: bool = False


@dataclass(frozen=True)
class MetaModel:
    """Type vocabulary: node types plus typed, optionally containment, edge types."""

    node_types: frozenset[str]
    edge_types: tuple[EdgeType, ...]

    def __post_init__(self) -> None:
        names = [et.name for et in self.edge_types]
        if len(names) != len(set(names)):
            raise ModelError("duplicate edge type names")
        for et in self.edge_types:
            if et.src not in self.node_types or et.tgt not in self.node_types:
                raise ModelError(f"edge type {et.name!r} references undeclared node type")

    @cached_property
    def edge_type_map(self) -> dict[str, EdgeType]:
        return {et.name: et for et in self.edge_types}

    @cached_property
    def containment_names(self) -> frozenset[str]:
        return frozenset(et.name for et in self.edge_types if et.containment)

    def to_json(self) -> dict:
        return {
            "nodeTypes": sorted(self.node_types),
            "edgeTypes": [
                {"name": et.name, "src": et.src, "tgt": et.tgt, "containment": et.containment}
                for et in self.edge_types
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "MetaModel":
        try:
            return cls(
                frozenset(doc["nodeTypes"]),
                tuple(
                    EdgeType(e["name"], e["src"], e["tgt"], bool(e.get("containment", False)))
                    for e in doc["edgeTypes"]
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ModelError(f"invalid meta-model document: {exc}") from exc


@dataclass(frozen=True)
class ModelVersion:
    """One model snapshot: (uid, type) elements and (src, tgt, type) references."""

    elements: tuple[tuple[str, str], ...]
    references: tuple[tuple[str, str, str], ...]

    @classmethod
    def of(
        cls,
        elements: Iterable[tuple[str, str]] | Mapping[str, str],
        references: Iterable[tuple[str, str, str]] = (),
    ) -> "ModelVersion":
        if isinstance(elements, Mapping):
            elements = elements.items()
        return cls(tuple(sorted(elements)), tuple(sorted(references)))

    def __post_init__(self) -> None:
        uids = [uid for uid, _ in self.elements]
        if len(uids) != len(set(uids)):
            raise ModelError("duplicate element uid")
        declared = set(uids)
        seen = set()
        for src, tgt, etype in self.references:
            if src not in declared or tgt not in declared:
                raise ModelError(f"reference ({src},{tgt},{etype}) touches unknown element")
            if src == tgt:
                raise ModelError(f"self-reference on {src} is not supported")
            if (src, tgt, etype) in seen:
                raise ModelError(f"duplicate reference ({src},{tgt},{etype})")
            seen.add((src, tgt, etype))

    @cached_property
    def type_map(self) -> dict[str, str]:
        return dict(self.elements)

    @cached_property
    def reference_set(self) -> frozenset[tuple[str, str, str]]:
        return frozenset(self.references)

    def validate_against(self, metamodel: MetaModel) -> None:
        """Raise ModelError unless types conform and containment forms a forest."""
        for uid, typ in self.elements:
            if typ not in metamodel.node_types:
                raise ModelError(f"element {uid}: unknown type {typ!r}")
        parent: dict[str, str] = {}
        for src, tgt, etype in self.references:
            et = metamodel.edge_type_map.get(etype)
            if et is None:
                raise ModelError(f"reference type {etype!r} not in meta-model")
            if self.type_map[src] != et.src or self.type_map[tgt] != et.tgt:
                raise ModelError(
                    f"reference ({src},{tgt},{etype}) violates endpoint types "
                    f"{et.src}->{et.tgt}"
                )
            if et.containment:
                if tgt in parent:
                    raise ModelError(f"element {tgt} has two containment parents")
                parent[tgt] = src
        for uid in parent:
            hops, cur = 0, uid
            while cur in parent:
                cur = parent[cur]
                hops += 1
                if hops > len(parent):
                    raise ModelError("containment cycle detected")

    def to_json(self) -> dict:
        return {
            "elements": [{"uid": u, "type": t} for u, t in self.elements],
            "references": [{"src": s, "tgt": t, "type": y} for s, t, y in self.references],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ModelVersion":
        try:
            return cls.of(
                [(e["uid"], e["type"]) for e in doc["elements"]],
                [(r["src"], r["tgt"], r["type"]) for r in doc["references"]],
            )
        except (KeyError, TypeError) as exc:
            raise ModelError(f"invalid model document: {exc}") from exc


def save_model(model: ModelVersion, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> ModelVersion:
    with open(path, "r", encoding="utf-8") as fh:
        return ModelVersion.from_json(json.load(fh))


@dataclass(frozen=True)
class Correspondence:
    """Matched elements (by uid) and references between two versions."""

    elements: frozenset[str]
    references: frozenset[tuple[str, str, str]]


def match(old: ModelVersion, new: ModelVersion) -> Correspondence:
    """Pure uid+type matching: elements correspond iff uid and type are equal.

    References correspond iff their endpoints correspond and the type is
    equal. An element whose type changed is treated as deleted and re-created.
    """
    elements = frozenset(
        uid
        for uid, typ in old.elements
        if new.type_map.get(uid) == typ
    )
    references = frozenset(
        ref
        for ref in old.references
        if ref in set(new.references) and ref[0] in elements and ref[1] in elements
    )
    return Correspondence(elements, references)


@dataclass(frozen=True)
class ChangeGraph:
    """A difference graph or SCG plus provenance back to concrete elements.

    Node labels are <prefix><NodeType>, edge labels <prefix><EdgeType>.
    Provenance maps node id to (uid, origin) with origin in {old, new, both}.
    """

    graph: LabeledGraph
    provenance: tuple[tuple[int, tuple[str, str]], ...]

    @classmethod
    def of(cls, graph: LabeledGraph, provenance: Mapping[int, tuple[str, str]]) -> "ChangeGraph":
        cg = cls(graph, tuple(sorted(provenance.items())))
        cg._validate()
        return cg

    @cached_property
    def provenance_map(self) -> dict[int, tuple[str, str]]:
        return dict(self.provenance)

    def _validate(self) -> None:
        for nid, label in self.graph.nodes:
            split_prefix(label)
            if nid not in self.provenance_map:
                raise ModelError(f"node {nid} has no provenance entry")
        for src, dst, label in self.graph.edges:
            prefix, _ = split_prefix(label)
            for endpoint in (src, dst):
                np, _ = split_prefix(self.graph.label(endpoint))
                if {prefix, np} == {CREATE, DELETE}:
                    raise ModelError(
                        f"{prefix.rstrip('_')} edge ({src},{dst}) touches a {np}node"
                    )

    def min_uid(self) -> str:
        return min((uid for _, (uid, _) in self.provenance), default="")


def difference_graph(old: ModelVersion, new: ModelVersion) -> ChangeGraph:
    """Unified graph over both versions with preserved_/create_/delete_ labels.

    Corresponding elements appear once; every element of either version
    appears exactly once. Node ids are assigned deterministically.
    """
    corr = match(old, new)
    nodes: list[tuple[int, str]] = []
    provenance: dict[int, tuple[str, str]] = {}
    old_ids: dict[str, int] = {}
    new_ids: dict[str, int] = {}

    def add(uid: str, typ: str, prefix: str, origin: str) -> int:
        nid = len(nodes)
        nodes.append((nid, prefix + typ))
        provenance[nid] = (uid, origin)
        return nid

    for uid in sorted(corr.elements):
        nid = add(uid, old.type_map[uid], PRESERVED, "both")
        old_ids[uid] = new_ids[uid] = nid
    for uid, typ in old.elements:
        if uid not in corr.elements:
            old_ids[uid] = add(uid, typ, DELETE, "old")
    for uid, typ in new.elements:
        if uid not in corr.elements:
            new_ids[uid] = add(uid, typ, CREATE, "new")

    edges: list[tuple[int, int, str]] = []
    for src, tgt, etype in old.references:
        ref = (src, tgt, etype)
        prefix = PRESERVED if ref in corr.references else DELETE
        edges.append((old_ids[src], old_ids[tgt], prefix + etype))
    for src, tgt, etype in new.references:
        if (src, tgt, etype) not in corr.references:
            edges.append((new_ids[src], new_ids[tgt], CREATE + etype))

    return ChangeGraph.of(LabeledGraph.of(nodes, edges), provenance)


def simple_change_graph(dg: ChangeGraph) -> ChangeGraph:
    """Boundary graph of the changed elements of a difference graph.

    Keeps all create_/delete_ nodes and edges, plus exactly the preserved
    nodes needed so no changed edge dangles. Preserved edges never appear.
    """
    g = dg.graph
    changed_nodes = {n for n, l in g.nodes if not l.startswith(PRESERVED)}
    changed_edges = [e for e in g.edges if not e[2].startswith(PRESERVED)]
    boundary = {
        n for s, d, _ in changed_edges for n in (s, d) if n not in changed_nodes
    }
    keep = changed_nodes | boundary
    sub = LabeledGraph.of([(n, g.label(n)) for n in keep], changed_edges)
    return ChangeGraph.of(sub, {n: dg.provenance_map[n] for n in keep})


def change_components(cg: ChangeGraph) -> list[ChangeGraph]:
    """Connected components of a change graph, ordered by smallest provenance uid."""
    comps = []
    for comp in connected_components(cg.graph):
        ids = {n for n, _ in comp.nodes}
        comps.append(ChangeGraph.of(comp, {n: cg.provenance_map[n] for n in ids}))
    return sorted(comps, key=lambda c: c.min_uid())


def change_counts(cg: ChangeGraph) -> dict[str, int]:
    """Created/deleted/preserved element counts (nodes and edges together)."""
    counts = {"created": 0, "deleted": 0, "preserved": 0}
    for _, label in cg.graph.nodes:
        prefix, _ = split_prefix(label)
        counts[{PRESERVED: "preserved", CREATE: "created", DELETE: "deleted"}[prefix]] += 1
    for _, _, label in cg.graph.edges:
        prefix, _ = split_prefix(label)
        counts[{PRESERVED: "preserved", CREATE: "created", DELETE: "deleted"}[prefix]] += 1
    return counts
