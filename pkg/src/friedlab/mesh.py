"""Structured triangulations of the benchmark polygons.

Three domains are supported: the unit square, the L-shape
``[0,1]^2 minus [0.5,1]^2`` and a regular polygon inscribed in the unit circle
(``disk_polygon``). Meshes are immutable, 0-based, with counterclockwise
triangles and boundary edges oriented so the domain lies on their left.
"""
import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BadParameter, ParseError

DOMAINS = ("square", "lshape", "disk_polygon")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with oriented boundary.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    triangles : ndarray, shape (nt, 3)
        Counterclockwise vertex indices.
    boundary_edges : ndarray, shape (nb, 2)
        Domain on the left of each directed edge.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges",
                           np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self):
        return float(np.sum(self.signed_areas))

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self):
        """Unique undirected edges ``(i, j)`` with ``i < j``, lexicographically sorted."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """Edge ids of local edges (v0v1, v1v2, v2v0) per triangle."""
        return self._edge_data[1]

    @cached_property
    def boundary_edge_ids(self):
        key = np.sort(self.boundary_edges, axis=1)
        lookup = {tuple(e): i for i, e in enumerate(self.edges)}
        return np.array([lookup[tuple(e)] for e in key], dtype=np.int64)

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.boundary_edges)

    @cached_property
    def edge_lengths(self):
        """Lengths of the boundary edges."""
        p = self.vertices[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def normals(self):
        """Outward unit normals of the boundary edges."""
        p = self.vertices[self.boundary_edges]
        t = p[:, 1] - p[:, 0]
        t = t / np.linalg.norm(t, axis=1)[:, None]
        return np.column_stack([t[:, 1], -t[:, 0]])

    @cached_property
    def hmax(self):
        p = self.vertices[self.edges]
        return float(np.max(np.linalg.norm(p[:, 1] - p[:, 0], axis=1)))

    def to_dict(self):
        return {"vertices": self.vertices.tolist(), "triangles": self.triangles.tolist(),
                "boundary_edges": self.boundary_edges.tolist()}


def _chain_loops(bedges):
    """Reorder directed boundary edges into consecutive closed loops."""
    nxt = {}
    for a, b in bedges:
        nxt[int(a)] = int(b)
    out, seen = [], set()
    for start in sorted(nxt):
        if start in seen:
            continue
        a = start
        while a not in seen and a in nxt:
            seen.add(a)
            out.append((a, nxt[a]))
            a = nxt[a]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _boundary_from_triangles(triangles):
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return _chain_loops(directed[counts[inv.ravel()] == 1])


def _compact(vertices, triangles):
    used = np.unique(triangles)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[triangles]


def _grid_mesh(n, keep_cell):
    """Triangulate the kept cells of an n x n grid on the unit square.

    Diagonals radiate from the square's centre; a second pass flips any cell
    whose triangle would have all three vertices on the boundary.
    """
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: i * (n + 1) + j  # noqa: E731
    cells = [(i, j) for i in range(n) for j in range(n) if keep_cell(i, j)]

    def split(i, j, slash):
        sw, se, ne, nw = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
        if slash:
            return [(sw, se, ne), (sw, ne, nw)]
        return [(sw, se, nw), (se, ne, nw)]

    slash = {}
    for i, j in cells:
        cx, cy = (i + 0.5) / n - 0.5, (j + 0.5) / n - 0.5
        slash[(i, j)] = cx * cy >= 0

    def build():
        return np.array([t for c in cells for t in split(*c, slash[c])], dtype=np.int64)

    tris = build()
    bverts = set(np.unique(_boundary_from_triangles(tris)).tolist())
    for c in cells:
        bad = lambda s: sum(all(v in bverts for v in t) for t in split(*c, s))  # noqa: E731
        if bad(slash[c]) > bad(not slash[c]):
            slash[c] = not slash[c]
    vertices, tris = _compact(vertices, build())
    return Mesh(vertices, tris, _boundary_from_triangles(tris))


def _disk_mesh(n_rings, sides):
    """Regular ``sides``-gon inscribed in the unit circle, built ring by ring.

    Ring ``k`` is the polygon scaled by ``k / n_rings`` with every side split
    into ``m_k = ceil(2 k sin(pi / sides))`` segments, so tangential and
    radial spacing are comparable. Consecutive rings are stitched side by
    side with a zipper; the two stitched segments are parallel, so no
    triangle degenerates.
    """
    corners = np.column_stack([np.cos(2 * np.pi * np.arange(sides) / sides),
                               np.sin(2 * np.pi * np.arange(sides) / sides)])
    chord = 2.0 * math.sin(math.pi / sides)
    m = [0] + [max(1, math.ceil(k * chord - 1e-9)) for k in range(1, n_rings + 1)]
    vertices = [np.zeros((1, 2))]
    offset = [0]
    start = 1
    for k in range(1, n_rings + 1):
        r = k / n_rings
        t = np.arange(m[k]) / m[k]
        pts = [(1 - t)[:, None] * corners[i] + t[:, None] * corners[(i + 1) % sides]
               for i in range(sides)]
        vertices.append(r * np.vstack(pts))
        offset.append(start)
        start += sides * m[k]
    vertices = np.vstack(vertices)

    def ring_vertex(k, side, j):
        if k == 0:
            return 0
        return offset[k] + (side * m[k] + j) % (sides * m[k])

    tris = []
    for k in range(1, n_rings + 1):
        mi, mo = m[k - 1], m[k]
        for s in range(sides):
            a = b = 0
            while a < mi or b < mo:
                # advance whichever ring has the next point at the smaller parameter
                take_outer = a == mi or (b < mo and (b + 1) * mi <= (a + 1) * mo)
                ia = ring_vertex(k - 1, s, a)
                ob = ring_vertex(k, s, b)
                if take_outer:
                    tris.append((ia, ob, ring_vertex(k, s, b + 1)))
                    b += 1
                else:
                    tris.append((ia, ob, ring_vertex(k - 1, s, a + 1)))
                    a += 1
    tris = np.array(tris, dtype=np.int64)
    return Mesh(vertices, tris, _boundary_from_triangles(tris))


def generate(domain, h, sides=16):
    """Structured mesh of a benchmark domain with edge lengths ``<= 2 h``.

    Parameters
    ----------
    domain : {"square", "lshape", "disk_polygon"}
    h : float
        Target mesh size: the number of cells per unit length is ``ceil(1/h)``
        (rounded up to even for the L-shape so the notch is resolved).
    sides : int
        Polygon sides for ``disk_polygon``; at least 6.
    """
    try:
        h = float(h)
    except (TypeError, ValueError):
        raise BadParameter(f"h must be a number, got {h!r}") from None
    if not h > 0 or not math.isfinite(h):
        raise BadParameter(f"h must be positive, got {h}")
    n = max(1, math.ceil(1.0 / h - 1e-9))
    if domain == "square":
        return _grid_mesh(n, lambda i, j: True)
    if domain == "lshape":
        n = 2 * max(1, math.ceil(0.5 / h - 1e-9))
        half = n // 2
        return _grid_mesh(n, lambda i, j: not (i >= half and j >= half))
    if domain == "disk_polygon":
        if int(sides) != sides or sides < 6:
            raise BadParameter(f"disk_polygon needs sides >= 6, got {sides}")
        return _disk_mesh(n, int(sides))
    raise BadParameter(f"unknown domain {domain!r}; expected one of {DOMAINS}")


def refine(mesh):
    """Uniform red refinement.

    Every triangle is split into four through its edge midpoints. The
    children of triangle ``t`` are ``4t .. 4t+3`` (three corner children in
    vertex order, then the middle one). New vertices are appended in edge-id
    order after the old ones.
    """
    nv = mesh.n_vertices
    edges = mesh.edges
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    te = mesh.triangle_edges + nv
    t = mesh.triangles
    m01, m12, m20 = te[:, 0], te[:, 1], te[:, 2]
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    mid_of = mesh.boundary_edge_ids + nv
    b = mesh.boundary_edges
    bedges = np.stack([np.column_stack([b[:, 0], mid_of]),
                       np.column_stack([mid_of, b[:, 1]])], axis=1).reshape(-1, 2)
    return Mesh(vertices, children, bedges)


def validate(mesh, tol=1e-12):
    """List every violated mesh invariant (empty list when valid)."""
    problems = []
    nv = mesh.n_vertices
    for name, arr in (("triangles", mesh.triangles), ("boundary_edges", mesh.boundary_edges)):
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            problems.append(f"{name}: vertex index out of range")
    if problems:
        return problems
    scale = max(mesh.hmax, 1e-300) ** 2 if mesh.n_triangles else 1.0
    for i in np.flatnonzero(mesh.signed_areas <= tol * scale):
        problems.append(f"negative-area: triangle {i} has signed area {mesh.signed_areas[i]:.3e}")

    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    owner = np.tile(np.arange(len(t)), 3)
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    free = {tuple(directed[i]): owner[i] for i in np.flatnonzero(counts[inv] == 1)}
    free_undirected = {tuple(sorted(e)): e for e in free}
    listed = set()
    centroids = mesh.vertices[t].mean(axis=1)
    for idx, (a, b) in enumerate(mesh.boundary_edges):
        e = (int(a), int(b))
        und = tuple(sorted(e))
        listed.add(und)
        if und not in free_undirected:
            problems.append(f"boundary edge {idx} {e} does not belong to exactly one triangle")
            continue
        if e not in free:
            problems.append(f"normal-orientation: boundary edge {idx} {e} has the domain on its right")
            continue
        mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        if np.dot(mesh.normals[idx], mid - centroids[free[e]]) <= 0:
            problems.append(f"normal-orientation: boundary edge {idx} fails the centroid test")
    for und in free_undirected:
        if und not in listed:
            problems.append(f"edge {und} lies on one triangle only but is not a boundary edge")
    outdeg = np.bincount(mesh.boundary_edges[:, 0], minlength=nv)
    indeg = np.bincount(mesh.boundary_edges[:, 1], minlength=nv)
    if np.any(outdeg != indeg) or np.any(outdeg > 1):
        problems.append("boundary edges do not form closed simple loops")
    if len(mesh.boundary_edges):
        closure = np.sum(mesh.edge_lengths[:, None] * mesh.normals, axis=0)
        if np.linalg.norm(closure) > 1e-10 * np.sum(mesh.edge_lengths):
            problems.append(f"boundary not closed: sum of L*nu = {closure.tolist()}")
    return problems


def boundary_measure(mesh):
    return float(np.sum(mesh.edge_lengths))


def euler_characteristic(mesh):
    return mesh.n_vertices - len(mesh.edges) + mesh.n_triangles


def _fmt(x):
    return format(float(x), ".17g")


def dumps(mesh):
    """JSON text of a mesh; coordinates carry 17 significant digits."""
    lines = ["{", '  "vertices": [']
    v = [f"    [{_fmt(x)}, {_fmt(y)}]" for x, y in mesh.vertices]
    lines.append(",\n".join(v))
    lines.append("  ],")
    lines.append('  "triangles": [')
    lines.append(",\n".join(f"    [{a}, {b}, {c}]" for a, b, c in mesh.triangles))
    lines.append("  ],")
    lines.append('  "boundary_edges": [')
    lines.append(",\n".join(f"    [{a}, {b}]" for a, b in mesh.boundary_edges))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(line for line in lines if line) + "\n"


def fingerprint(mesh):
    """SHA-256 of the canonical JSON text."""
    return hashlib.sha256(dumps(mesh).encode()).hexdigest()


def save(mesh, path):
    with open(path, "w") as fh:
        fh.write(dumps(mesh))


def _int_rows(data, key, width):
    rows = data[key]
    if not isinstance(rows, list):
        raise ParseError(f"{key}: expected a list, got {type(rows).__name__}")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != width:
            raise ParseError(f"{key}[{i}]: expected a list of {width} integers")
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, int):
                raise ParseError(f"{key}[{i}][{j}]: expected integer index, got {x!r}")
        out.append(row)
    return np.array(out, dtype=np.int64).reshape(-1, width)


def loads(text):
    """Parse mesh JSON. Raises :class:`ParseError` with line or field details."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseError("top level: expected a JSON object")
    for key in ("vertices", "triangles", "boundary_edges"):
        if key not in data:
            raise ParseError(f"missing key {key!r}")
    verts = data["vertices"]
    if not isinstance(verts, list):
        raise ParseError("vertices: expected a list")
    for i, row in enumerate(verts):
        if not isinstance(row, list) or len(row) != 2:
            raise ParseError(f"vertices[{i}]: expected [x, y]")
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ParseError(f"vertices[{i}][{j}]: expected a number, got {x!r}")
    vertices = np.array(verts, dtype=float).reshape(-1, 2)
    return Mesh(vertices, _int_rows(data, "triangles", 3), _int_rows(data, "boundary_edges", 2))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
