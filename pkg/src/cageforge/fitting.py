"""Fragment-to-template placement: landmark matching, closed-form
similarity alignment, and constrained non-rigid fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binding import apply_deformation
from .errors import (
    DegenerateConfiguration,
    DuplicateTag,
    InsufficientLandmarks,
    NoCompatibleAnnotation,
    PreconditionError,
)
from .mesh import TriangleMesh
from .solver import make_closeness, solve
from .spatial import MeshDistanceQuery


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray  # (3, 3), proper
    translation: np.ndarray  # (3,)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return self.scale * p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class LandmarkSet:
    """Paired template/fragment vertices sharing a tag."""

    pairs: tuple  # of (template vertex, fragment vertex, tag)

    def __len__(self):
        return len(self.pairs)

    def template_indices(self):
        return [p[0] for p in self.pairs]

    def fragment_indices(self):
        return [p[1] for p in self.pairs]


def _tagged_points(annotations, side: str) -> dict:
    out = {}
    for ann in annotations:
        if ann.selector != "point" or not ann.points:
            continue
        if ann.tag in out:
            raise DuplicateTag(f"tag {ann.tag!r} occurs twice on the {side}")
        out[ann.tag] = int(ann.points[0])
    return out


def match_landmarks(template_annotations, fragment_annotations) -> LandmarkSet:
    """Pair point annotations by exact (case-sensitive) tag equality.

    A multi-vertex point annotation contributes its first vertex. Fewer
    than three shared tags raise InsufficientLandmarks; callers may then
    supply explicit pairs instead.
    """
    t = _tagged_points(template_annotations, "template")
    f = _tagged_points(fragment_annotations, "fragment")
    shared = sorted(set(t) & set(f))
    if len(shared) < 3:
        raise InsufficientLandmarks(len(shared))
    return LandmarkSet(pairs=tuple((t[tag], f[tag], tag) for tag in shared))


def umeyama_similarity(source, target, estimate_scale=True) -> SimilarityTransform:
    """Least-squares similarity (s, R, t) mapping source onto target.

    Reflections are excluded by the determinant-sign correction, so R is
    always a proper rotation even for mirrored configurations.
    """
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(target, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise PreconditionError("point sets must both be (n, 3)")
    if len(src) < 3:
        raise DegenerateConfiguration("need at least 3 point pairs")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    var_s = float((sc * sc).sum()) / len(src)
    sing = np.linalg.svd(sc, compute_uv=False)
    if var_s == 0 or sing[1] < 1e-12 * sing[0]:
        raise DegenerateConfiguration("source points are collinear/coincident")

    cov = dc.T @ sc / len(src)
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2, 2] = -1.0
    rotation = u @ s_fix @ vt
    scale = float(np.trace(np.diag(d) @ s_fix) / var_s) if estimate_scale else 1.0
    translation = mu_d - scale * rotation @ mu_s
    return SimilarityTransform(scale=scale, rotation=rotation,
                               translation=translation)


def landmark_rms(transform: SimilarityTransform, source, target) -> float:
    gap = transform.apply(source) - np.asarray(target, dtype=np.float64)
    return float(np.sqrt((gap * gap).sum(axis=1).mean()))


def rigid_place(template_doc, fragment, landmarks: LandmarkSet):
    """Scale the template to the fragment's size, then pose the fragment.

    The template (cage, binding and cached measures included) is scaled
    uniformly about the landmark centroid by the similarity's scale; the
    fragment is then moved rigidly onto the scaled template's landmarks,
    which reproduces the similarity-optimal landmark RMS.

    Returns (template scale applied, fragment SimilarityTransform).
    """
    t_idx = landmarks.template_indices()
    f_idx = landmarks.fragment_indices()
    t_pts = template_doc.template.vertices[t_idx]
    f_pts = fragment.mesh.vertices[f_idx]

    sim = umeyama_similarity(t_pts, f_pts)
    center = t_pts.mean(axis=0)
    template_doc.apply_uniform_scale(sim.scale, center)

    scaled_t_pts = template_doc.template.vertices[t_idx]
    pose = umeyama_similarity(f_pts, scaled_t_pts, estimate_scale=False)
    fragment.apply_transform(pose)
    return sim.scale, pose


@dataclass
class FitOptions:
    fit_weight: float = 1.0
    distance_cap_fraction: float = 0.10  # of the fragment diagonal
    normal_degrees: float = 60.0
    outer_iterations: int = 20
    energy_decrease: float = 1e-4  # relative stop threshold
    max_samples: int = 10_000


@dataclass
class FitReport:
    iterations: list = field(default_factory=list)
    converged: bool = False
    residuals: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": self.residuals,
        }


def _compatible_pairs(template_annotations, fragment_annotations):
    frag_regions = {
        a.tag: a for a in fragment_annotations if a.selector == "region"
    }
    pairs = []
    for ann in template_annotations:
        if ann.tag in frag_regions:
            pairs.append((ann, frag_regions[ann.tag]))
    if not pairs:
        raise NoCompatibleAnnotation(
            "fragment shares no region-annotation tag with the template"
        )
    return pairs


def _region_submesh(mesh: TriangleMesh, annotation):
    if annotation.selector == "region" and annotation.interior:
        tris = mesh.triangles[sorted(annotation.interior)]
        return TriangleMesh(mesh.vertices, tris)
    return mesh


def nonrigid_fit(template_doc, fragment, options: FitOptions | None = None):
    """Deform the template toward compatible fragment regions.

    Alternates capped, normal-gated nearest-surface correspondences with
    constrained solves that add each correspondence as a closeness term,
    so semantic constraints trade off against fidelity via their weights.
    Stops when the mean squared correspondence distance stops improving.
    """
    options = options or FitOptions()
    doc = template_doc
    if doc.binding is None or not doc.binding.is_mvc or doc.session is None:
        raise PreconditionError(
            "non-rigid fitting needs an MVC binding and an active session"
        )
    pairs = _compatible_pairs(doc.annotations, fragment.annotations)

    rng = np.random.default_rng(0)
    samples = []
    queries = []
    for t_ann, f_ann in pairs:
        verts = sorted(t_ann.vertex_set(doc.template))
        if len(verts) > options.max_samples:
            verts = list(rng.choice(verts, size=options.max_samples,
                                    replace=False))
        sub = _region_submesh(fragment.mesh, f_ann)
        queries.append((np.asarray(verts, dtype=np.int64),
                        MeshDistanceQuery(sub), sub))
        samples.extend(verts)
    if not samples:
        raise NoCompatibleAnnotation("compatible annotations select no vertices")

    cap = options.distance_cap_fraction * max(fragment.mesh.diagonal, 1e-30)
    cos_gate = np.cos(np.deg2rad(options.normal_degrees))
    session = doc.session
    report = FitReport()
    best_energy = np.inf
    best_state = session.current.copy()

    for it in range(options.outer_iterations):
        deformed = apply_deformation(doc.binding, session.current)
        def_mesh = TriangleMesh(deformed, doc.template.triangles)
        normals = def_mesh.vertex_normals

        rows, targets = [], []
        dists = []
        for verts, query, sub in queries:
            d, closest, tri_idx = query.query(deformed[verts])
            face_n = sub.triangle_normals[tri_idx]
            ok = (d <= cap) & (
                np.einsum("ij,ij->i", normals[verts], face_n) >= cos_gate
            )
            for v, keep, target, dist in zip(verts, ok, closest, d):
                if keep:
                    rows.append(doc.binding.vertex_weights[v])
                    targets.append(target)
                    dists.append(dist)
        count = len(rows)
        if count == 0:
            report.converged = it > 0
            break
        dists = np.asarray(dists)
        energy = float((dists**2).mean())
        report.iterations.append({
            "correspondences": count,
            "mean_distance": float(dists.mean()),
            "max_distance": float(dists.max()),
            "energy": energy,
        })
        rel_gain = (best_energy - energy) / max(best_energy, 1e-30)
        if energy < best_energy:
            best_energy = energy
            best_state = session.current.copy()
        if it > 0 and rel_gain < options.energy_decrease:
            if energy > best_energy:  # roll back a worsening step
                session.current = best_state
                report.iterations.pop()
            report.converged = True
            break

        session.set_fit_constraints([
            make_closeness(np.vstack(rows), np.vstack(targets),
                           options.fit_weight)
        ])
        _, solve_report = solve(session)
    else:
        report.converged = False

    session.set_fit_constraints([])
    if session.last_report is not None:
        report.residuals = session.last_report.entries
    return apply_deformation(doc.binding, session.current), report
