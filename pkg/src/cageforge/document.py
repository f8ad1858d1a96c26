"""Single-document state: one template, one optional cage/binding/session,
any number of fragments. All mutations bump the revision counter."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .annotation import Annotation, refresh_measures
from .binding import (
    CoordinateMatrix,
    apply_deformation,
    compute_gc,
    compute_mvc,
    manipulate_handles,
)
from .errors import PreconditionError
from .fitting import (
    FitOptions,
    LandmarkSet,
    SimilarityTransform,
    match_landmarks,
    nonrigid_fit,
    rigid_place,
)
from .mesh import TriangleMesh
from .semgraph import RelationshipGraph
from .solver import SolverOptions, SolverSession, build_session, solve, withdraw


@dataclass
class Fragment:
    """Secondary annotated mesh, posable onto the template."""

    mesh: TriangleMesh
    annotations: list = field(default_factory=list)

    def apply_transform(self, transform: SimilarityTransform):
        self.mesh = self.mesh.with_vertices(transform.apply(self.mesh.vertices))
        self.annotations = [
            refresh_measures(self.mesh, a) for a in self.annotations
        ]


class Document:
    """Engine-facing document: template + cage + binding + session.

    Invariants: a session implies an MVC binding; a binding implies a
    cage. The revision strictly increases on every mutation, which the
    service layer uses for optimistic concurrency.
    """

    def __init__(self):
        self.template: TriangleMesh | None = None
        self.annotations: list[Annotation] = []
        self.graph: RelationshipGraph | None = None
        self.cage: TriangleMesh | None = None
        self.cage_current: np.ndarray | None = None
        self.binding: CoordinateMatrix | None = None
        self.session: SolverSession | None = None
        self.fragments: list[Fragment] = []
        self.selection: set = set()
        self.revision = 0

    def _bump(self):
        self.revision += 1

    # -- loading ---------------------------------------------------------

    def set_template(self, mesh: TriangleMesh):
        self.template = mesh
        self.annotations = []
        self.graph = None
        self.drop_cage()
        self._bump()

    def set_annotations(self, annotations):
        if self.template is None:
            raise PreconditionError("load a template first")
        self.annotations = list(annotations)
        self._bump()

    def set_graph(self, graph: RelationshipGraph):
        self.graph = graph
        self._bump()

    def set_cage(self, cage: TriangleMesh):
        self.cage = cage
        self.cage_current = np.array(cage.vertices)
        self.binding = None
        self.drop_session()
        self.selection = set()
        self._bump()

    def drop_cage(self):
        self.cage = None
        self.cage_current = None
        self.binding = None
        self.drop_session()
        self.selection = set()

    def add_fragment(self, fragment: Fragment) -> int:
        self.fragments.append(fragment)
        self._bump()
        return len(self.fragments) - 1

    # -- binding and sessions ---------------------------------------------

    def bind(self, method: str = "mvc"):
        if self.template is None or self.cage is None:
            raise PreconditionError("binding needs a template and a cage")
        compute = {"mvc": compute_mvc, "gc": compute_gc}.get(method.lower())
        if compute is None:
            raise PreconditionError(f"unknown binding method {method!r}")
        self.binding = compute(self.template, self.cage)
        self.drop_session()
        self._bump()
        return self.binding

    def constrain(self, options: SolverOptions | None = None) -> SolverSession:
        if self.binding is None:
            raise PreconditionError("compute or load coordinates first")
        arcs = self.graph.arcs if self.graph else []
        self.session = build_session(
            self.cage, self.binding, arcs, self.annotations,
            options or SolverOptions(),
        )
        self.session.current = np.array(self.cage_current)
        self._bump()
        return self.session

    def drop_session(self):
        if self.session is not None:
            withdraw(self.session)
            self.session = None
            self._bump()

    # -- deformation --------------------------------------------------------

    def select_handles(self, vertices):
        if self.cage is None:
            raise PreconditionError("no cage loaded")
        vs = {int(v) for v in vertices}
        for v in vs:
            if not 0 <= v < self.cage.vertex_count:
                raise PreconditionError(f"cage vertex {v} out of range")
        self.selection = vs
        self._bump()
        return self.selection

    def move_handles(self, op):
        """Apply a handle op; constrained sessions solve toward the moved
        positions, otherwise the cage deforms purely geometrically."""
        if self.cage is None or self.cage_current is None:
            raise PreconditionError("no cage loaded")
        if not self.selection:
            raise PreconditionError("empty handle selection")
        moved = manipulate_handles(self.cage_current, sorted(self.selection), op)
        report = None
        if self.session is not None:
            targets = {v: moved[v] for v in sorted(self.selection)}
            self.cage_current, report = solve(self.session, targets)
        else:
            self.cage_current = moved
        self._bump()
        return self.deformed_template(), report

    def deformed_template(self) -> np.ndarray | None:
        if self.template is None:
            return None
        if self.binding is None or self.cage_current is None:
            return np.array(self.template.vertices)
        return apply_deformation(self.binding, self.cage_current)

    # -- fitting --------------------------------------------------------------

    def apply_uniform_scale(self, scale: float, center):
        """Scale template, cage, binding and cached measures together."""
        c = np.asarray(center, dtype=np.float64)

        def scaled(points):
            return c + scale * (np.asarray(points) - c)

        self.template = self.template.with_vertices(scaled(self.template.vertices))
        self.annotations = [
            refresh_measures(self.template, a) for a in self.annotations
        ]
        if self.cage is not None:
            self.cage = self.cage.with_vertices(scaled(self.cage.vertices))
            self.cage_current = scaled(self.cage_current)
        if self.binding is not None:
            self.binding.rest_cage = np.array(self.cage.vertices)
            if not self.binding.is_mvc:
                # Green face coordinates carry length units
                self.binding.face_weights = self.binding.face_weights * scale
        if self.session is not None:
            self.session.rest = np.array(self.cage.vertices)
            self.session.current = np.array(self.cage_current)
        self._bump()

    def fit_fragment(
        self,
        fragment_index: int,
        landmarks: LandmarkSet | None = None,
        options: FitOptions | None = None,
    ):
        """Rigid placement then constrained non-rigid fitting."""
        fragment = self.fragments[fragment_index]
        if landmarks is None:
            landmarks = match_landmarks(self.annotations, fragment.annotations)
        scale, pose = rigid_place(self, fragment, landmarks)
        if self.session is None:
            self.constrain()
        deformed, report = nonrigid_fit(self, fragment, options)
        self.cage_current = np.array(self.session.current)
        self._bump()
        result = {
            "templateScale": scale,
            "fragmentPose": {
                "rotation": pose.rotation.tolist(),
                "translation": pose.translation.tolist(),
            },
            "fit": report.to_json(),
        }
        return deformed, result

    # -- summaries -----------------------------------------------------------

    def summary(self) -> dict:
        def counts(mesh):
            if mesh is None:
                return None
            return {
                "vertices": mesh.vertex_count,
                "edges": len(mesh.edges),
                "triangles": mesh.triangle_count,
            }

        return {
            "revision": self.revision,
            "template": counts(self.template),
            "cage": counts(self.cage),
            "binding": None if self.binding is None else {
                "method": self.binding.method,
                "counts": list(self.binding.counts),
            },
            "session": self.session is not None and self.session.alive,
            "annotations": len(self.annotations),
            "relationships": 0 if self.graph is None else len(self.graph.arcs),
            "fragments": [counts(f.mesh) for f in self.fragments],
            "selection": sorted(self.selection),
        }
