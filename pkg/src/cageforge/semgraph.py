"""Relationship graph over annotations: automatic containment/adjacency
extraction, authored constraint arcs and the JSON graph format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .annotation import Annotation, region_boundary_edges
from .errors import (
    DanglingAnnotationRef,
    InvalidParams,
    SchemaError,
    UnknownAnnotation,
)
from .mesh import TriangleMesh


@dataclass(frozen=True)
class Relationship:
    """Arc (or hyper-arc) of the semantic graph.

    `type` is an open string set; known constraint types validate against
    the registry. `weight`/`params` are present exactly when the arc is a
    constraint.
    """

    id: int
    type: str
    is_directed: bool
    annotations: tuple
    is_constraint: bool = False
    weight: float | None = None
    params: dict | None = None

    def __post_init__(self):
        if len(self.annotations) < 2:
            raise InvalidParams("a relationship involves at least 2 annotations")
        if self.is_constraint:
            if self.weight is None or self.weight <= 0:
                raise InvalidParams("constraint weight must be positive")
        else:
            if self.weight is not None or self.params is not None:
                raise SchemaError(
                    "weight/constraint are present only when isConstraint is true"
                )


@dataclass
class RelationshipGraph:
    """Annotation ids as nodes, relationships as arcs."""

    nodes: set = field(default_factory=set)
    arcs: list = field(default_factory=list)

    def next_id(self) -> int:
        return max((r.id for r in self.arcs), default=-1) + 1


# --- constraint registry ---------------------------------------------------

def _validate_range(params: dict, type_name: str):
    for key in ("minValue", "maxValue"):
        if key not in params:
            raise InvalidParams(f"{type_name} requires {key}")
    if params["minValue"] > params["maxValue"]:
        raise InvalidParams(f"{type_name}: minValue exceeds maxValue")


def _validate_measures(params: dict, n_annotations: int, type_name: str):
    if n_annotations != 2:
        raise InvalidParams(
            "measures are constrainable only if the relationship is "
            "between 2 annotations"
        )
    for key in ("measure1", "measure2"):
        if key not in params:
            raise InvalidParams(f"{type_name} requires {key} and {key} indices")
        if not isinstance(params[key], int) or params[key] < 0:
            raise InvalidParams(f"{type_name}: {key} must be a measure index")


def _check_proportion(params, annotations):
    _validate_measures(params, len(annotations), "Proportion")
    _validate_range(params, "Proportion")
    if params["minValue"] <= 0:
        raise InvalidParams("Proportion: ratio range must be positive")


def _check_distance(params, annotations):
    if len(annotations) != 2:
        raise InvalidParams("Distance constrains exactly 2 annotations")
    _validate_range(params, "Distance")
    if params["minValue"] < 0:
        raise InvalidParams("Distance: lengths are nonnegative")


def _check_edge_strain(params, annotations):
    if len(annotations) != 2:
        raise InvalidParams("EdgeStrain constrains exactly 2 annotations")
    _validate_range(params, "EdgeStrain")
    if params["minValue"] <= 0:
        raise InvalidParams("EdgeStrain: rest-length multiples must be positive")


def _check_same_measure(params, annotations):
    _validate_measures(params, len(annotations), "SameMeasure")


def _check_closeness(params, annotations):
    target = params.get("target")
    if target is not None and len(target) != 3:
        raise InvalidParams("Closeness target must be a 3D point")


CONSTRAINT_REGISTRY = {
    "Closeness": _check_closeness,
    "EdgeStrain": _check_edge_strain,
    "Distance": _check_distance,
    "Proportion": _check_proportion,
    "SameMeasure": _check_same_measure,
}


def validate_constraint(type_name: str, params: dict, annotations) -> None:
    """Validate constraint params against the registry entry for `type`."""
    checker = CONSTRAINT_REGISTRY.get(type_name)
    if checker is None:
        raise InvalidParams(f"unknown constraint type {type_name!r}")
    checker(params or {}, annotations)


# --- structure extraction ---------------------------------------------------


def extract_structure(mesh: TriangleMesh, annotations) -> list[Relationship]:
    """Containment and adjacency arcs derived by geometric analysis.

    Region-region: directed containment on strict interior-triangle
    inclusion; undirected adjacency when interiors are disjoint but the
    boundary loops share a mesh edge. Point/line annotations participate
    in containment through their vertex sets.
    """
    regions = [a for a in annotations if a.selector == "region"]
    others = [a for a in annotations if a.selector != "region"]

    interior_vertices = {}
    boundary_edge_sets = {}
    for r in regions:
        verts = set()
        for t in r.interior:
            verts.update(int(v) for v in mesh.triangles[t])
        interior_vertices[r.id] = verts
        boundary_edge_sets[r.id] = region_boundary_edges(mesh, r.interior)

    found = []  # (type, directed, (ids...))
    for a in regions:
        for b in regions:
            if a.id == b.id:
                continue
            if b.interior < a.interior:
                found.append(("containment", True, (a.id, b.id)))
        for b in regions:
            if b.id <= a.id:
                continue
            if a.interior.isdisjoint(b.interior) and (
                boundary_edge_sets[a.id] & boundary_edge_sets[b.id]
            ):
                found.append(("adjacency", False, (a.id, b.id)))
    for a in regions:
        for o in others:
            verts = o.vertex_set()
            if verts and verts <= interior_vertices[a.id]:
                found.append(("containment", True, (a.id, o.id)))

    found.sort(key=lambda item: (item[0], item[2]))
    return [
        Relationship(id=k, type=t, is_directed=d, annotations=ids)
        for k, (t, d, ids) in enumerate(found)
    ]


def add_relationship(
    graph: RelationshipGraph,
    type_name: str,
    annotation_ids,
    is_directed: bool,
    params: dict | None = None,
    weight: float | None = None,
) -> Relationship:
    """Append an authored relationship; constraint params are validated."""
    ids = tuple(int(i) for i in annotation_ids)
    for i in ids:
        if i not in graph.nodes:
            raise UnknownAnnotation(f"annotation {i} not in graph")
    is_constraint = params is not None or weight is not None
    if is_constraint:
        if weight is None:
            weight = 1.0
        validate_constraint(type_name, params or {}, ids)
    rel = Relationship(
        id=graph.next_id(),
        type=type_name,
        is_directed=bool(is_directed),
        annotations=ids,
        is_constraint=is_constraint,
        weight=weight if is_constraint else None,
        params=dict(params) if is_constraint and params else ({} if is_constraint else None),
    )
    graph.arcs.append(rel)
    return rel


# --- JSON interchange --------------------------------------------------------


def _rel_to_json(rel: Relationship) -> dict:
    out = {
        "id": rel.id,
        "type": rel.type,
        "isDirected": rel.is_directed,
        "annotations": list(rel.annotations),
        "isConstraint": rel.is_constraint,
    }
    if rel.is_constraint:
        out["weight"] = rel.weight
        out["constraint"] = rel.params or {}
    return out


def graph_to_json(graph: RelationshipGraph) -> str:
    """Canonical serialization: schema key order, 2-space indent."""
    doc = {"relationships": [_rel_to_json(r) for r in graph.arcs]}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def write_graph(graph: RelationshipGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(graph_to_json(graph))


def read_graph(path, annotations) -> RelationshipGraph:
    """Parse a graph file; nodes are recovered from the annotation set."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    if "relationships" not in doc:
        raise SchemaError("document: missing field 'relationships'")
    known = {a.id for a in annotations}
    graph = RelationshipGraph(nodes=set(known))
    seen = set()
    for obj in doc["relationships"]:
        where = f"relationship {obj.get('id', '?')}"
        for key in ("id", "type", "isDirected", "annotations", "isConstraint"):
            if key not in obj:
                raise SchemaError(f"{where}: missing field {key!r}")
        rid = int(obj["id"])
        if rid in seen:
            raise SchemaError(f"{where}: duplicate id")
        seen.add(rid)
        is_constraint = bool(obj["isConstraint"])
        if not is_constraint and ("weight" in obj or "constraint" in obj):
            raise SchemaError(
                f"{where}: weight/constraint are present only if "
                "isConstraint is true"
            )
        ids = tuple(int(i) for i in obj["annotations"])
        for i in ids:
            if i not in known:
                raise DanglingAnnotationRef(f"{where}: unknown annotation {i}")
        weight = None
        params = None
        if is_constraint:
            if "weight" not in obj:
                raise SchemaError(f"{where}: constraint requires weight")
            weight = float(obj["weight"])
            params = dict(obj.get("constraint", {}))
            if obj["type"] in CONSTRAINT_REGISTRY:
                validate_constraint(obj["type"], params, ids)
        graph.arcs.append(
            Relationship(
                id=rid,
                type=obj["type"],
                is_directed=bool(obj["isDirected"]),
                annotations=ids,
                is_constraint=is_constraint,
                weight=weight,
                params=params,
            )
        )
    return graph


def containment_is_dag(arcs) -> bool:
    """Cycle check over the directed containment arcs."""
    adj: dict[int, list[int]] = {}
    for r in arcs:
        if r.type == "containment" and r.is_directed and len(r.annotations) == 2:
            adj.setdefault(r.annotations[0], []).append(r.annotations[1])
    state: dict[int, int] = {}

    def visit(u) -> bool:
        state[u] = 1
        for w in adj.get(u, []):
            if state.get(w) == 1:
                return False
            if state.get(w) is None and not visit(w):
                return False
        state[u] = 2
        return True

    return all(state.get(u) or visit(u) for u in list(adj))
