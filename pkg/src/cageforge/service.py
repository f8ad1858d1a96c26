"""Local HTTP service exposing document state and deformation streaming.

One document per service; mutations are serialized behind a lock and
carry optimistic revision checks (409 on stale clients). A WebSocket
channel pushes the deformed template vertex buffer plus the residual
report after every accepted move, tagged with the producing revision.
"""

from __future__ import annotations

import asyncio
import base64
import json
import queue
import threading

import numpy as np
from fastapi import Body, FastAPI, Query, Response, WebSocket, WebSocketDisconnect

from . import annotation as ann_mod
from . import semgraph as graph_mod
from .binding import Rotate, Stretch, Translate, annotation_to_cage_vertices, read_coords
from .cagegen import generate_cage
from .document import Document, Fragment
from .errors import EngineError
from .fitting import FitOptions, LandmarkSet
from .mesh import TriangleMesh
from .meshio import load_mesh
from .slicing import approximate_medial_axis, slice_by_plane, slice_descriptors
from .solver import SolverOptions


def encode_vertices(vertices) -> str:
    """Vertex buffer wire format: base64 of little-endian float32 xyz."""
    return base64.b64encode(
        np.ascontiguousarray(vertices, dtype="<f4").tobytes()
    ).decode("ascii")


def decode_vertices(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 3)


class _Stream:
    """Fan-out of mutation events to websocket subscribers."""

    def __init__(self):
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, message: dict):
        with self._lock:
            for q in self._subscribers:
                q.put(message)


def _mesh_from_payload(payload: dict) -> TriangleMesh:
    if "path" in payload:
        return load_mesh(payload["path"], payload.get("format"))
    if "data" in payload:
        import tempfile

        suffix = "." + payload.get("format", "obj")
        with tempfile.NamedTemporaryFile("w", suffix=suffix, delete=False) as fh:
            fh.write(payload["data"])
            name = fh.name
        return load_mesh(name, payload.get("format"))
    raise EngineError("mesh payload needs 'path' or 'data'")


def _json_payload_to_tempfile(payload: dict) -> str:
    import tempfile

    if "path" in payload:
        return payload["path"]
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(payload["data"], fh)
        return fh.name


def _mount_ui(app: FastAPI, ui_dir) -> None:
    """Serve the browser companion at /ui when its build exists."""
    from pathlib import Path

    from fastapi.staticfiles import StaticFiles

    root = Path(ui_dir) if ui_dir else Path(__file__).resolve().parents[2] / "frontend"
    if (root / "index.html").exists() and (root / "dist").exists():
        app.mount("/ui", StaticFiles(directory=root, html=True), name="ui")


def create_app(document: Document | None = None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="cageforge", docs_url=None, redoc_url=None)
    doc = document if document is not None else Document()
    lock = threading.RLock()
    stream = _Stream()
    app.state.document = doc
    _mount_ui(app, ui_dir)

    def error_response(exc: EngineError, status=422):
        return Response(
            content=json.dumps({"error": exc.name, "message": str(exc)}),
            status_code=status,
            media_type="application/json",
        )

    @app.exception_handler(EngineError)
    async def _engine_error(_, exc: EngineError):
        return error_response(exc)

    def check_revision(payload: dict):
        expected = payload.get("revision")
        if expected is not None and int(expected) != doc.revision:
            raise _Conflict(doc.revision)

    class _Conflict(Exception):
        def __init__(self, revision):
            self.revision = revision

    @app.exception_handler(_Conflict)
    async def _conflict(_, exc: _Conflict):
        return Response(
            content=json.dumps({"error": "RevisionConflict",
                                "revision": exc.revision}),
            status_code=409,
            media_type="application/json",
        )

    def push_geometry(residuals=None):
        verts = doc.deformed_template()
        if verts is None:
            return
        message = {
            "revision": doc.revision,
            "vertices": encode_vertices(verts),
        }
        if residuals is not None:
            message["residuals"] = residuals
        stream.publish(message)

    # -- state ---------------------------------------------------------------

    @app.get("/doc")
    def get_doc():
        with lock:
            return doc.summary()

    @app.get("/template")
    def get_template():
        with lock:
            verts = doc.deformed_template()
            if verts is None:
                raise EngineError("no template loaded")
            return {
                "revision": doc.revision,
                "vertices": encode_vertices(verts),
                "triangles": doc.template.triangles.ravel().tolist(),
            }

    @app.get("/cage")
    def get_cage():
        with lock:
            if doc.cage is None:
                raise EngineError("no cage loaded")
            return {
                "revision": doc.revision,
                "vertices": encode_vertices(doc.cage_current),
                "triangles": doc.cage.triangles.ravel().tolist(),
                "selection": sorted(doc.selection),
            }

    @app.get("/annotations")
    def get_annotations():
        with lock:
            return json.loads(ann_mod.annotations_to_json(doc.annotations))

    @app.get("/graph")
    def get_graph():
        with lock:
            if doc.graph is None:
                return {"relationships": []}
            return json.loads(graph_mod.graph_to_json(doc.graph))

    # -- loading ---------------------------------------------------------------

    @app.post("/mesh")
    def post_mesh(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            doc.set_template(_mesh_from_payload(payload))
            push_geometry()
            return {"revision": doc.revision, "summary": doc.summary()}

    @app.post("/cage")
    def post_cage(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            if "generate" in payload:
                params = payload["generate"] or {}
                cage = generate_cage(
                    doc.template,
                    offset_fraction=params.get("offset", 0.55),
                    target_faces=params.get("faces", 100),
                )
            else:
                cage = _mesh_from_payload(payload)
            doc.set_cage(cage)
            return {"revision": doc.revision, "summary": doc.summary()}

    @app.post("/annotations")
    def post_annotations(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            if doc.template is None:
                raise EngineError("load a template first")
            path = _json_payload_to_tempfile(payload)
            doc.set_annotations(ann_mod.read_annotations(path, doc.template))
            return {"revision": doc.revision,
                    "annotations": len(doc.annotations)}

    @app.post("/graph")
    def post_graph(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            path = _json_payload_to_tempfile(payload)
            doc.set_graph(graph_mod.read_graph(path, doc.annotations))
            return {"revision": doc.revision,
                    "relationships": len(doc.graph.arcs)}

    @app.post("/fragments")
    def post_fragment(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            mesh = _mesh_from_payload(payload)
            anns = []
            if "annotations" in payload and payload["annotations"]:
                path = _json_payload_to_tempfile(payload["annotations"])
                anns = ann_mod.read_annotations(path, mesh)
            index = doc.add_fragment(Fragment(mesh=mesh, annotations=anns))
            return {"revision": doc.revision, "fragment": index}

    # -- binding and session -----------------------------------------------------

    @app.post("/bind")
    def post_bind(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            if "coords_path" in payload:
                binding = read_coords(payload["coords_path"])
                binding.attach_cage(doc.cage)
                doc.binding = binding
                doc.drop_session()
                doc._bump()
            else:
                doc.bind(payload.get("method", "mvc"))
            push_geometry()
            return {"revision": doc.revision,
                    "method": doc.binding.method}

    @app.post("/session")
    def post_session(payload: dict = Body(default={})):
        with lock:
            check_revision(payload)
            opts = payload.get("options") or {}
            doc.constrain(SolverOptions(
                max_iterations=opts.get("iters", 500),
                tolerance=opts.get("tol", 1e-7),
                pin_weight_factor=opts.get("pinWeightFactor", 1e4),
            ))
            return {"revision": doc.revision, "session": True}

    @app.delete("/session")
    def delete_session():
        with lock:
            doc.drop_session()
            return {"revision": doc.revision, "session": False}

    # -- handles -------------------------------------------------------------

    @app.post("/handles/select")
    def post_select(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            if "vertices" in payload:
                selection = doc.select_handles(payload["vertices"])
            elif "annotation" in payload:
                if doc.binding is None:
                    raise EngineError("bind a cage first")
                ann = next(
                    (a for a in doc.annotations
                     if a.id == int(payload["annotation"])), None)
                if ann is None:
                    raise EngineError(
                        f"unknown annotation {payload['annotation']}")
                selection = doc.select_handles(annotation_to_cage_vertices(
                    doc.binding, ann,
                    threshold=float(payload.get("threshold", 0.05)),
                    mesh=doc.template,
                ))
            else:
                raise EngineError("select payload needs vertices or annotation")
            return {"revision": doc.revision, "selection": sorted(selection)}

    @app.post("/handles/move")
    def post_move(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            op_name = payload.get("op")
            params = payload.get("params") or {}
            if op_name == "translate":
                op = Translate(tuple(params["vector"]))
            elif op_name == "rotate":
                op = Rotate(tuple(params["axis"]),
                            float(params["angle"]))
            elif op_name == "stretch":
                op = Stretch(tuple(params["direction"]),
                             float(params["amount"]))
            else:
                raise EngineError(f"unknown move op {op_name!r}")
            _, report = doc.move_handles(op)
            residuals = report.to_json() if report is not None else None
            push_geometry(residuals)
            return {
                "revision": doc.revision,
                "residuals": residuals,
            }

    # -- analysis ----------------------------------------------------------------

    @app.get("/slice")
    def get_slice(
        nx: float = Query(...), ny: float = Query(...), nz: float = Query(...),
        offset: float = Query(...),
        step: float = Query(default=0.0),
        prune: float = Query(default=120.0),
    ):
        with lock:
            if doc.template is None:
                raise EngineError("no template loaded")
            mesh = TriangleMesh(doc.deformed_template(), doc.template.triangles)
            s = slice_by_plane(mesh, (nx, ny, nz), offset)
            out = {
                "revision": doc.revision,
                "plane": {"normal": s.normal.tolist(), "offset": s.offset},
                "loops": [lp.tolist() for lp in s.loops],
                "chains": [ch.tolist() for ch in s.chains],
            }
            if s.loops:
                out["descriptors"] = slice_descriptors(s)
                if step > 0:
                    out["skeleton"] = [
                        [list(a), list(b)]
                        for a, b in approximate_medial_axis(s, step, prune)
                    ]
            return out

    @app.post("/fit")
    def post_fit(payload: dict = Body(...)):
        with lock:
            check_revision(payload)
            index = int(payload.get("fragment", 0))
            if not 0 <= index < len(doc.fragments):
                raise EngineError(f"no fragment {index}")
            landmarks = None
            if payload.get("landmarks"):
                landmarks = LandmarkSet(pairs=tuple(
                    (int(p["template"]), int(p["fragment"]), p.get("tag", ""))
                    for p in payload["landmarks"]
                ))
            opts = payload.get("options") or {}
            options = FitOptions(
                fit_weight=opts.get("fitWeight", 1.0),
                distance_cap_fraction=opts.get("distCap", 0.10),
                normal_degrees=opts.get("normalDeg", 60.0),
                outer_iterations=opts.get("outerIters", 20),
            )
            _, result = doc.fit_fragment(index, landmarks, options)
            push_geometry(result.get("fit", {}).get("residuals"))
            return {"revision": doc.revision, **result}

    # -- streaming -----------------------------------------------------------------

    @app.websocket("/stream")
    async def stream_endpoint(ws: WebSocket):
        await ws.accept()
        q = stream.subscribe()

        async def pump():
            while True:
                message = await asyncio.to_thread(q.get)
                if message is None:
                    break
                await ws.send_json(message)

        pump_task = asyncio.ensure_future(pump())
        try:
            while True:  # watch for client disconnect
                event = await ws.receive()
                if event["type"] == "websocket.disconnect":
                    break
        except WebSocketDisconnect:
            pass
        finally:
            stream.unsubscribe(q)
            q.put(None)  # unblock the pump thread
            await asyncio.gather(pump_task, return_exceptions=True)

    return app
