"""Batch command-line interface over the engine.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 numerical
failure. With --json, errors are emitted as machine-readable JSON on
stderr. All outputs are deterministic for fixed inputs and flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import annotation as ann_mod
from . import semgraph as graph_mod
from .binding import (
    Rotate,
    Stretch,
    Translate,
    apply_deformation,
    compute_gc,
    compute_mvc,
    read_coords,
    write_coords,
)
from .cagegen import generate_cage
from .document import Document, Fragment
from .errors import (
    DegenerateConfiguration,
    EngineError,
    NumericalBreakdown,
    SingularSystem,
)
from .fitting import FitOptions, LandmarkSet
from .mesh import TriangleMesh
from .meshio import load_mesh, save_mesh
from .slicing import approximate_medial_axis, slice_by_plane, slice_descriptors
from .solver import SolverOptions

NUMERICAL_ERRORS = (NumericalBreakdown, SingularSystem, DegenerateConfiguration)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cageforge", description=__doc__)
    p.add_argument("--json", action="store_true",
                   help="machine-readable errors on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="validate a mesh file")
    v.add_argument("mesh")

    cage = sub.add_parser("cage", help="cage operations")
    cage_sub = cage.add_subparsers(dest="cage_command", required=True,
                                   parser_class=_Parser)
    gen = cage_sub.add_parser("gen", help="generate an offset cage")
    gen.add_argument("mesh")
    gen.add_argument("--offset", type=float, default=0.55)
    gen.add_argument("--faces", type=int, default=100)
    gen.add_argument("-o", "--output", required=True)

    b = sub.add_parser("bind", help="compute barycentric coordinates")
    b.add_argument("template")
    b.add_argument("cage")
    b.add_argument("--method", choices=["mvc", "gc"], default="mvc")
    b.add_argument("-o", "--output", required=True)

    d = sub.add_parser("deform", help="apply a handle-op script")
    d.add_argument("template")
    d.add_argument("cage")
    d.add_argument("coords")
    d.add_argument("--script", required=True)
    d.add_argument("-o", "--output", required=True)

    a = sub.add_parser("annotate", help="annotation file operations")
    a_sub = a.add_subparsers(dest="annotate_command", required=True,
                             parser_class=_Parser)
    for name in ("check", "measure"):
        ap = a_sub.add_parser(name)
        ap.add_argument("mesh")
        ap.add_argument("annotations")

    g = sub.add_parser("graph", help="relationship graph operations")
    g_sub = g.add_subparsers(dest="graph_command", required=True,
                             parser_class=_Parser)
    ge = g_sub.add_parser("extract")
    ge.add_argument("mesh")
    ge.add_argument("annotations")
    ge.add_argument("-o", "--output", required=True)

    c = sub.add_parser("constrain", help="constrained deformation")
    c.add_argument("template")
    c.add_argument("cage")
    c.add_argument("coords")
    c.add_argument("--ann", help="annotation file")
    c.add_argument("--graph", help="relationship graph file")
    c.add_argument("--handles", required=True, help="pins JSON")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--report")
    c.add_argument("--iters", type=int, default=500)
    c.add_argument("--tol", type=float, default=1e-7)
    c.add_argument("--pin-weight-factor", type=float, default=1e4)

    f = sub.add_parser("fit", help="fragment fitting")
    f.add_argument("template_doc")
    f.add_argument("fragment_doc")
    f.add_argument("--landmarks")
    f.add_argument("--report")
    f.add_argument("-o", "--output")
    f.add_argument("--fit-weight", type=float, default=1.0)
    f.add_argument("--dist-cap", type=float, default=0.10)
    f.add_argument("--normal-deg", type=float, default=60.0)
    f.add_argument("--outer-iters", type=int, default=20)

    t = sub.add_parser("transfer", help="transfer annotations between meshes")
    t.add_argument("source")
    t.add_argument("annotations")
    t.add_argument("target")
    t.add_argument("-o", "--output", required=True)

    s = sub.add_parser("slice", help="slice a mesh and export descriptors")
    s.add_argument("mesh")
    s.add_argument("--plane", required=True,
                   help="nx,ny,nz,offset")
    s.add_argument("--step", type=float, default=0.0,
                   help="skeleton sampling step (0 = skip skeleton)")
    s.add_argument("--prune-deg", type=float, default=120.0)
    s.add_argument("-o", "--output")

    import os

    srv = sub.add_parser("serve", help="run the local service")
    srv.add_argument("--port", type=int,
                     default=int(os.environ.get("CAGEFORGE_PORT", "8642")))
    srv.add_argument("--host",
                     default=os.environ.get("CAGEFORGE_HOST", "127.0.0.1"))
    return p


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_op(entry: dict):
    kind = entry.get("op")
    if kind == "translate":
        return Translate(tuple(entry["vector"]))
    if kind == "rotate":
        return Rotate(tuple(entry["axis"]), np.deg2rad(entry["angle_deg"]))
    if kind == "stretch":
        return Stretch(tuple(entry["direction"]), float(entry["amount"]))
    raise EngineError(f"unknown script op {kind!r}")


def _load_doc(path) -> Document:
    spec = _read_json(path)
    doc = Document()
    doc.set_template(load_mesh(spec["mesh"]))
    if spec.get("annotations"):
        doc.set_annotations(ann_mod.read_annotations(spec["annotations"],
                                                     doc.template))
    if spec.get("cage"):
        doc.set_cage(load_mesh(spec["cage"]))
    if spec.get("coords"):
        doc.binding = read_coords(spec["coords"])
        doc.binding.attach_cage(doc.cage)
    if spec.get("graph"):
        doc.set_graph(graph_mod.read_graph(spec["graph"], doc.annotations))
    return doc


def cmd_validate(args) -> int:
    mesh = load_mesh(args.mesh)
    from .obb import compute_obb

    obb = compute_obb(mesh.vertices)
    info = {
        "vertices": mesh.vertex_count,
        "edges": len(mesh.edges),
        "triangles": mesh.triangle_count,
        "closed": mesh.is_closed,
        "components": mesh.component_count,
        "obb": {
            "center": obb.center.tolist(),
            "axes": obb.axes.tolist(),
            "halfExtents": obb.half_extents.tolist(),
        },
    }
    if mesh.is_closed:
        info["genus"] = mesh.genus()
    _dump_json(info)
    return 0


def cmd_cage_gen(args) -> int:
    mesh = load_mesh(args.mesh)
    cage = generate_cage(mesh, offset_fraction=args.offset,
                         target_faces=args.faces)
    save_mesh(cage, args.output)
    return 0


def cmd_bind(args) -> int:
    template = load_mesh(args.template)
    cage = load_mesh(args.cage)
    compute = compute_mvc if args.method == "mvc" else compute_gc
    coords = compute(template, cage)
    write_coords(coords, args.output)
    return 0


def cmd_deform(args) -> int:
    template = load_mesh(args.template)
    cage = load_mesh(args.cage)
    coords = read_coords(args.coords)
    coords.attach_cage(cage)
    script = _read_json(args.script)
    verts = np.array(cage.vertices)
    from .binding import manipulate_handles

    for entry in script:
        verts = manipulate_handles(verts, entry["selection"], _parse_op(entry))
    if np.array_equal(verts, cage.vertices):
        deformed = template.vertices  # nothing moved: skip reconstruction
    else:
        deformed = apply_deformation(coords, verts)
    save_mesh(TriangleMesh(deformed, template.triangles), args.output)
    return 0


def cmd_annotate(args) -> int:
    mesh = load_mesh(args.mesh)
    annotations = ann_mod.read_annotations(args.annotations, mesh)
    if args.annotate_command == "check":
        _dump_json({"annotations": len(annotations), "valid": True})
        return 0
    out = []
    for ann in annotations:
        for attr in ann.attributes:
            if attr.kind == "measure":
                out.append({
                    "annotation": ann.id,
                    "attribute": attr.id,
                    "name": attr.name,
                    "tool": attr.tool,
                    "value": ann_mod.evaluate_measure(mesh, attr),
                })
    _dump_json({"measures": out})
    return 0


def cmd_graph_extract(args) -> int:
    mesh = load_mesh(args.mesh)
    annotations = ann_mod.read_annotations(args.annotations, mesh)
    rels = graph_mod.extract_structure(mesh, annotations)
    graph = graph_mod.RelationshipGraph(
        nodes={a.id for a in annotations}, arcs=rels
    )
    graph_mod.write_graph(graph, args.output)
    return 0


def cmd_constrain(args) -> int:
    doc = Document()
    doc.set_template(load_mesh(args.template))
    if args.ann:
        doc.set_annotations(ann_mod.read_annotations(args.ann, doc.template))
    doc.set_cage(load_mesh(args.cage))
    doc.binding = read_coords(args.coords)
    doc.binding.attach_cage(doc.cage)
    if args.graph:
        doc.set_graph(graph_mod.read_graph(args.graph, doc.annotations))
    doc.constrain(SolverOptions(
        max_iterations=args.iters,
        tolerance=args.tol,
        pin_weight_factor=args.pin_weight_factor,
    ))
    pins = _read_json(args.handles)
    targets = {
        int(p["vertex"]): np.asarray(p["target"], dtype=np.float64)
        for p in pins.get("pins", [])
    }
    from .solver import solve

    cage_verts, report = solve(doc.session, targets)
    deformed = apply_deformation(doc.binding, cage_verts)
    save_mesh(TriangleMesh(deformed, doc.template.triangles), args.output)
    if args.report:
        _dump_json(report.to_json(), args.report)
    return 0


def cmd_fit(args) -> int:
    doc = _load_doc(args.template_doc)
    frag_spec = _read_json(args.fragment_doc)
    frag_mesh = load_mesh(frag_spec["mesh"])
    frag_anns = []
    if frag_spec.get("annotations"):
        frag_anns = ann_mod.read_annotations(frag_spec["annotations"], frag_mesh)
    fragment = Fragment(mesh=frag_mesh, annotations=frag_anns)
    idx = doc.add_fragment(fragment)

    landmarks = None
    if args.landmarks:
        data = _read_json(args.landmarks)
        landmarks = LandmarkSet(pairs=tuple(
            (int(p["template"]), int(p["fragment"]), p.get("tag", ""))
            for p in data["pairs"]
        ))
    options = FitOptions(
        fit_weight=args.fit_weight,
        distance_cap_fraction=args.dist_cap,
        normal_degrees=args.normal_deg,
        outer_iterations=args.outer_iters,
    )
    deformed, result = doc.fit_fragment(idx, landmarks, options)
    if args.report:
        _dump_json(result, args.report)
    if args.output:
        save_mesh(TriangleMesh(deformed, doc.template.triangles), args.output)
    return 0


def cmd_transfer(args) -> int:
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    annotations = ann_mod.read_annotations(args.annotations, source)
    moved = ann_mod.transfer_annotations(source, annotations, target)
    ann_mod.write_annotations(moved, args.output)
    return 0


def cmd_slice(args) -> int:
    mesh = load_mesh(args.mesh)
    parts = [float(x) for x in args.plane.split(",")]
    if len(parts) != 4:
        raise EngineError("--plane wants nx,ny,nz,offset")
    s = slice_by_plane(mesh, parts[:3], parts[3])
    out = {
        "plane": {"normal": s.normal.tolist(), "offset": s.offset},
        "loops": [lp.tolist() for lp in s.loops],
        "chains": [ch.tolist() for ch in s.chains],
    }
    if s.loops:
        out["descriptors"] = slice_descriptors(s)
        if args.step > 0:
            out["skeleton"] = [
                [list(a), list(b)]
                for a, b in approximate_medial_axis(s, args.step, args.prune_deg)
            ]
    _dump_json(out, args.output)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


_DISPATCH = {
    "validate": cmd_validate,
    "bind": cmd_bind,
    "deform": cmd_deform,
    "constrain": cmd_constrain,
    "fit": cmd_fit,
    "transfer": cmd_transfer,
    "slice": cmd_slice,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "cage":
            return cmd_cage_gen(args)
        if args.command == "annotate":
            return cmd_annotate(args)
        if args.command == "graph":
            return cmd_graph_extract(args)
        return _DISPATCH[args.command](args)
    except NUMERICAL_ERRORS as exc:
        _emit_error(args, exc)
        return 3
    except EngineError as exc:
        _emit_error(args, exc)
        return 2
    except OSError as exc:
        if getattr(args, "json", False):
            sys.stderr.write(json.dumps(
                {"error": "OSError", "message": str(exc)}) + "\n")
        else:
            sys.stderr.write(f"error: {exc}\n")
        return 2


def _emit_error(args, exc: EngineError):
    if getattr(args, "json", False):
        sys.stderr.write(json.dumps(
            {"error": exc.name, "message": str(exc)}) + "\n")
    else:
        sys.stderr.write(f"error [{exc.name}]: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
