"""Indexed triangle mesh with adjacency, validation and edge-graph paths."""

from __future__ import annotations

import heapq
from functools import cached_property

import numpy as np

from .errors import NonManifold, PreconditionError, Unreachable


class TriangleMesh:
    """Manifold triangle mesh (optionally with boundary).

    Vertices and triangles are validated and frozen at construction; all
    derived adjacency is computed lazily and cached, so instances are safe
    to share across concurrent readers.

    Parameters
    ----------
    vertices : (n, 3) float array-like
        Vertex positions in model units.
    triangles : (m, 3) int array-like
        Counter-clockwise vertex index triples.
    """

    def __init__(self, vertices, triangles):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise PreconditionError(f"vertices must be (n, 3), got {v.shape}")
        if t.size == 0:
            t = t.reshape(0, 3)
        if t.ndim != 2 or t.shape[1] != 3:
            raise PreconditionError(f"triangles must be (m, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise PreconditionError("triangle index out of vertex range")
        degenerate = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if degenerate.any():
            bad = int(np.flatnonzero(degenerate)[0])
            raise PreconditionError(f"triangle {bad} repeats a vertex index")
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t
        self._validate_manifold()

    def _validate_manifold(self):
        counts = np.bincount(self._edge_inverse, minlength=len(self.edges))
        over = np.flatnonzero(counts > 2)
        if over.size:
            e = self.edges[over[0]]
            raise NonManifold(e, counts[over[0]])

    # --- basic queries ---------------------------------------------------

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @cached_property
    def _edge_data(self):
        # all 3m directed edges, normalized to sorted pairs
        t = self.triangles
        raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        raw = np.sort(raw, axis=1)
        edges, inverse = np.unique(raw, axis=0, return_inverse=True)
        return edges, inverse

    @property
    def edges(self):
        """Unique undirected edges as sorted (i, j) pairs, (e, 2) int array."""
        return self._edge_data[0]

    @property
    def _edge_inverse(self):
        return self._edge_data[1]

    @cached_property
    def edge_triangles(self):
        """List of triangle-index tuples per edge (length 1 or 2 each)."""
        m = self.triangle_count
        inc = [[] for _ in range(len(self.edges))]
        inv = self._edge_inverse
        for k, e in enumerate(inv):
            inc[e].append(k % m)
        return [tuple(sorted(set(i))) for i in inc]

    @cached_property
    def edge_index(self):
        """Dict mapping sorted vertex pair -> edge id."""
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    @cached_property
    def vertex_neighbors(self):
        """List of sorted neighbor-vertex arrays per vertex."""
        nbr = [set() for _ in range(self.vertex_count)]
        for a, b in self.edges:
            nbr[a].add(int(b))
            nbr[b].add(int(a))
        return [np.array(sorted(s), dtype=np.int64) for s in nbr]

    @cached_property
    def vertex_triangles(self):
        """List of triangle-index arrays per vertex."""
        inc = [[] for _ in range(self.vertex_count)]
        for k, tri in enumerate(self.triangles):
            for v in tri:
                inc[v].append(k)
        return [np.array(s, dtype=np.int64) for s in inc]

    @cached_property
    def boundary_edges(self):
        """Indices of edges bounding exactly one triangle."""
        counts = np.bincount(self._edge_inverse, minlength=len(self.edges))
        return np.flatnonzero(counts == 1)

    @property
    def is_closed(self) -> bool:
        """True when every edge bounds exactly two triangles."""
        return len(self.boundary_edges) == 0

    @cached_property
    def bounding_box(self):
        if self.vertex_count == 0:
            z = np.zeros(3)
            return z, z
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def triangle_normals(self):
        """Unit normals, (m, 3); zero rows for zero-area triangles."""
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm > 0, n / norm, 0.0)
        return unit

    @cached_property
    def triangle_areas(self):
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(n, axis=1)

    @cached_property
    def vertex_normals(self):
        """Area-weighted unit vertex normals, (n, 3)."""
        v = self.vertices
        t = self.triangles
        fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        out = np.zeros_like(v)
        for c in range(3):
            np.add.at(out, t[:, c], fn)
        norm = np.linalg.norm(out, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(norm > 0, out / norm, 0.0)

    @cached_property
    def connected_components(self):
        """Vertex component labels via edge connectivity, (n,) int array."""
        labels = np.full(self.vertex_count, -1, dtype=np.int64)
        comp = 0
        for seed in range(self.vertex_count):
            if labels[seed] >= 0:
                continue
            stack = [seed]
            labels[seed] = comp
            while stack:
                u = stack.pop()
                for w in self.vertex_neighbors[u]:
                    if labels[w] < 0:
                        labels[w] = comp
                        stack.append(int(w))
            comp += 1
        return labels

    @property
    def component_count(self) -> int:
        if self.vertex_count == 0:
            return 0
        return int(self.connected_components.max()) + 1

    def genus(self) -> int:
        """Genus of a closed mesh from the Euler characteristic."""
        if not self.is_closed:
            raise PreconditionError("genus is defined for closed meshes only")
        chi = self.vertex_count - len(self.edges) + self.triangle_count
        c = self.component_count
        g2 = 2 * c - chi
        if g2 < 0 or g2 % 2:
            raise PreconditionError(f"inconsistent Euler characteristic {chi}")
        return g2 // 2

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same connectivity, new vertex positions."""
        return TriangleMesh(vertices, self.triangles)

    def same_connectivity(self, other: "TriangleMesh") -> bool:
        return self.triangles.shape == other.triangles.shape and bool(
            (self.triangles == other.triangles).all()
        )


def shortest_edge_path(mesh: TriangleMesh, start: int, goal: int) -> list[int]:
    """Shortest vertex path along mesh edges from `start` to `goal`.

    Dijkstra with early exit: the search stops as soon as the goal vertex
    is settled. Ties in path length are broken toward smaller predecessor
    indices so results are deterministic.

    Returns the vertex index list including both endpoints.
    """
    n = mesh.vertex_count
    if not (0 <= start < n and 0 <= goal < n):
        raise PreconditionError("vertex index out of range")
    if start == goal:
        return [start]
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    dist[start] = 0.0
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, start)]
    pos = mesh.vertices
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == goal:
            break
        for w in mesh.vertex_neighbors[u]:
            if done[w]:
                continue
            nd = d + float(np.linalg.norm(pos[w] - pos[u]))
            if nd < dist[w]:
                dist[w] = nd
                pred[w] = u
                heapq.heappush(heap, (nd, int(w)))
            elif nd == dist[w] and u < pred[w]:
                pred[w] = u
    if not done[goal]:
        raise Unreachable(f"no edge path from {start} to {goal}")
    path = [goal]
    while path[-1] != start:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def path_length(mesh: TriangleMesh, path) -> float:
    """Summed Euclidean edge length along a vertex index path.

    Accumulates sequentially (edge by edge) so the result is bit-identical
    to the distance Dijkstra accumulates along the same path.
    """
    total = 0.0
    p = mesh.vertices
    for u, v in zip(path, path[1:]):
        total += float(np.linalg.norm(p[v] - p[u]))
    return total
