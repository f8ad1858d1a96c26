"""Analytic shape generators: canonical fixtures for tests, demos
and experiments (the viewer's default startup shape included)."""

import numpy as np

from .mesh import TriangleMesh


def tetrahedron(scale=1.0, center=(0.0, 0.0, 0.0)):
    """Regular tetrahedron, outward-wound, circumradius ~ scale."""
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    ) * (scale / np.sqrt(3))
    v += np.asarray(center, dtype=np.float64)
    t = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return TriangleMesh(v, t)


def cube(side=1.0, center=(0.5, 0.5, 0.5)):
    """Axis-aligned cube as 12 outward-wound triangles."""
    c = np.asarray(center, dtype=np.float64)
    h = side / 2.0
    corners = np.array(
        [
            [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
            [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
        ],
        dtype=np.float64,
    )
    v = c + h * corners
    quads = [
        (0, 3, 2, 1),  # bottom (z-)
        (4, 5, 6, 7),  # top (z+)
        (0, 1, 5, 4),  # front (y-)
        (2, 3, 7, 6),  # back (y+)
        (0, 4, 7, 3),  # left (x-)
        (1, 2, 6, 5),  # right (x+)
    ]
    t = []
    for a, b, cc, d in quads:
        t.append([a, b, cc])
        t.append([a, cc, d])
    return TriangleMesh(v, t)


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Unit icosahedron refined by midpoint subdivision + reprojection."""
    phi = (1 + np.sqrt(5)) / 2
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    t = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        v, t = _midpoint_subdivide(v, t)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v * radius + np.asarray(center, dtype=np.float64), t)


def _midpoint_subdivide(v, t):
    v = list(map(tuple, v))
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            cache[key] = len(v)
            v.append(tuple((np.array(v[i]) + np.array(v[j])) / 2))
        return cache[key]

    out = []
    for a, b, c in t:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(v, dtype=np.float64), np.array(out, dtype=np.int64)


def octasphere(subdivisions=2, radius=1.0):
    """Sphere from a subdivided octahedron; keeps an exact equator ring
    at z=0, splitting the triangles into two equal hemispheres."""
    v = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=np.float64,
    )
    t = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        v, t = _midpoint_subdivide(v, t)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v * radius, t)


def loop_subdivide(mesh: TriangleMesh) -> TriangleMesh:
    """One step of Loop subdivision (standard vertex/edge masks)."""
    v, t = mesh.vertices, mesh.triangles
    nv = len(v)
    edge_tris = {}
    for k, tri in enumerate(t):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edge_tris.setdefault(key, []).append(k)

    new_pos = {}
    edge_index = {}
    pts = list(map(np.asarray, v))
    for key, tris in edge_tris.items():
        a, b = key
        if len(tris) == 2:
            opp = []
            for k in tris:
                opp.extend(x for x in t[k] if x not in key)
            p = 0.375 * (v[a] + v[b]) + 0.125 * (v[opp[0]] + v[opp[1]])
        else:
            p = 0.5 * (v[a] + v[b])
        edge_index[key] = len(pts)
        pts.append(p)

    for i in range(nv):
        nbr = mesh.vertex_neighbors[i]
        n = len(nbr)
        beta = (0.625 - (0.375 + 0.25 * np.cos(2 * np.pi / n)) ** 2) / n
        new_pos[i] = (1 - n * beta) * v[i] + beta * v[nbr].sum(axis=0)
    for i in range(nv):
        pts[i] = new_pos[i]

    out = []
    for a, b, c in t:
        ab = edge_index[(min(a, b), max(a, b))]
        bc = edge_index[(min(b, c), max(b, c))]
        ca = edge_index[(min(c, a), max(c, a))]
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return TriangleMesh(np.array(pts), out)


def torus(major=1.0, minor=0.3, nu=32, nv=16):
    """Torus around the z-axis, outward-wound."""
    verts = []
    for i in range(nu):
        a = 2 * np.pi * i / nu
        for j in range(nv):
            b = 2 * np.pi * j / nv
            r = major + minor * np.cos(b)
            verts.append([r * np.cos(a), r * np.sin(a), minor * np.sin(b)])
    tris = []
    for i in range(nu):
        for j in range(nv):
            a00 = i * nv + j
            a01 = i * nv + (j + 1) % nv
            a10 = ((i + 1) % nu) * nv + j
            a11 = ((i + 1) % nu) * nv + (j + 1) % nv
            tris.append([a00, a10, a11])
            tris.append([a00, a11, a01])
    return TriangleMesh(np.array(verts), tris)


def grid_square(n=10, side=1.0):
    """Unit square in the z=0 plane, (n+1)^2 vertices, 2n^2 triangles."""
    xs = np.linspace(0, side, n + 1)
    verts = [[x, y, 0.0] for y in xs for x in xs]
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b = a + 1
            c = a + n + 1
            d = c + 1
            tris.append([a, b, d])
            tris.append([a, d, c])
    return TriangleMesh(np.array(verts), tris)


def box_mesh(size=(4.0, 1.0, 1.0), n=(8, 2, 2), center=(0.0, 0.0, 0.0)):
    """Rectangular box surface with subdivided faces, closed manifold."""
    sx, sy, sz = size
    nx, ny, nz = n
    c = np.asarray(center, dtype=np.float64)
    verts = {}
    points = []

    def vid(p):
        key = (round(p[0], 12), round(p[1], 12), round(p[2], 12))
        if key not in verts:
            verts[key] = len(points)
            points.append(key)
        return verts[key]

    tris = []

    def face(origin, du, dv, nu_, nv_):
        for i in range(nu_):
            for j in range(nv_):
                p00 = origin + du * (i / nu_) + dv * (j / nv_)
                p10 = origin + du * ((i + 1) / nu_) + dv * (j / nv_)
                p01 = origin + du * (i / nu_) + dv * ((j + 1) / nv_)
                p11 = origin + du * ((i + 1) / nu_) + dv * ((j + 1) / nv_)
                a, b, cc, d = vid(p00), vid(p10), vid(p11), vid(p01)
                tris.append([a, b, cc])
                tris.append([a, cc, d])

    ex = np.array([sx, 0, 0.0])
    ey = np.array([0, sy, 0.0])
    ez = np.array([0, 0, sz])
    o = c - (ex + ey + ez) / 2
    face(o, ey, ex, ny, nx)          # bottom z- (normal -z)
    face(o + ez, ex, ey, nx, ny)     # top z+
    face(o, ex, ez, nx, nz)          # front y-
    face(o + ey, ez, ex, nz, nx)     # back y+
    face(o, ez, ey, nz, ny)          # left x-
    face(o + ex, ey, ez, ny, nz)     # right x+
    return TriangleMesh(np.array(points, dtype=np.float64), tris)
