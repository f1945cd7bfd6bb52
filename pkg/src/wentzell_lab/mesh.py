"""Triangulations of 2D polygonal domains with labeled boundary edges.

The mesh carries everything the boundary-value machinery needs: the planar
triangulation of the domain, the boundary polyline with its 1D (arc-length)
measure, and per-edge arc labels so boundary coefficients can be specified
side by side.
"""

from dataclasses import dataclass
from math import pi

import numpy as np

__all__ = [
    "MeshError",
    "MeshFormatError",
    "MeshValidationError",
    "TriMesh",
    "MeshQualityReport",
    "generate_rectangle",
    "generate_lshape",
    "read_mesh",
    "write_mesh",
    "quality_report",
]


class MeshError(ValueError):
    """Base class for mesh construction/ingestion failures."""


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshValidationError(MeshError):
    """Mesh data is structurally inconsistent."""


def _triangle_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    u = p1 - p0
    v = p2 - p0
    return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def _directed_boundary_edges(triangles):
    """Boundary edges as directed pairs (domain on the left), via incidence.

    Raises MeshValidationError if an undirected edge appears in more than two
    triangles or twice with the same orientation.
    """
    directed = {}
    for t, tri in enumerate(triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b))
            if key in directed:
                raise MeshValidationError(
                    f"edge {key} appears twice with the same orientation "
                    f"(triangle {directed[key]} and {t})"
                )
            directed[key] = t
    boundary = []
    for (a, b), t in directed.items():
        if (b, a) in directed:
            continue
        boundary.append((a, b))
    return boundary


class TriMesh:
    """Immutable planar triangulation with marked, labeled boundary edges.

    Parameters
    ----------
    vertices : (n, 2) float array
        Vertex coordinates.
    triangles : (m, 3) int array
        Vertex indices per triangle, counterclockwise.
    boundary_edges : (k, 2) int array, optional
        Directed boundary edges (domain on the left). Extracted from edge
        incidence when omitted.
    boundary_labels : sequence of str, optional
        Arc label per boundary edge. Defaults to one label per boundary loop.
    """

    def __init__(self, vertices, triangles, boundary_edges=None,
                 boundary_labels=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshValidationError("vertices must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshValidationError("triangles must be an (m, 3) array")
        n = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= n):
            raise MeshValidationError("triangle refers to a nonexistent vertex")

        areas = _triangle_areas(self.vertices, self.triangles)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshValidationError(
                f"triangle {bad} is degenerate or clockwise (area {areas[bad]:.3e})"
            )
        self.areas = areas

        extracted = _directed_boundary_edges(self.triangles)
        extracted_set = {frozenset(e) for e in extracted}
        if boundary_edges is None:
            edges = extracted
            if boundary_labels is None:
                labels = self._loop_labels(edges)
            else:
                labels = list(boundary_labels)
        else:
            edges = [(int(a), int(b)) for a, b in np.asarray(boundary_edges)]
            given = {frozenset(e) for e in edges}
            if given != extracted_set:
                raise MeshValidationError(
                    "listed boundary edges do not match the triangulation's "
                    "boundary (edge incidence)"
                )
            # reorient to run CCW (domain on the left), as extracted
            oriented = {frozenset(e): e for e in extracted}
            edges = [oriented[frozenset(e)] for e in edges]
            if boundary_labels is None:
                labels = ["boundary"] * len(edges)
            else:
                labels = list(boundary_labels)
        if len(labels) != len(edges):
            raise MeshValidationError("one label per boundary edge required")

        self.boundary_edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_labels = np.array(labels, dtype=object)
        self.boundary_nodes = np.unique(self.boundary_edges)
        self.n_boundary_loops = self._count_loops()

        for arr in (self.vertices, self.triangles, self.boundary_edges,
                    self.areas):
            arr.flags.writeable = False

    # -- derived geometry ---------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def area(self):
        return float(self.areas.sum())

    def boundary_lengths(self):
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return np.hypot(*(b - a).T)

    def perimeter(self):
        return float(self.boundary_lengths().sum())

    def boundary_normals(self):
        """Outward unit normal per boundary edge (edges run CCW)."""
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        d = b - a
        lengths = np.hypot(d[:, 0], d[:, 1])
        return np.column_stack((d[:, 1], -d[:, 0])) / lengths[:, None]

    def boundary_midpoints(self):
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return 0.5 * (a + b)

    def arc_labels(self):
        """Distinct arc labels in first-appearance order."""
        seen = []
        for lab in self.boundary_labels:
            if lab not in seen:
                seen.append(lab)
        return seen

    def boundary_loops(self):
        """Boundary vertex cycles, one list per connected boundary component."""
        succ = {}
        for a, b in self.boundary_edges:
            if int(a) in succ:
                raise MeshValidationError(
                    f"boundary vertex {a} has two outgoing boundary edges"
                )
            succ[int(a)] = int(b)
        loops = []
        remaining = dict(succ)
        while remaining:
            start = next(iter(remaining))
            loop = [start]
            cur = remaining.pop(start)
            while cur != start:
                loop.append(cur)
                if cur not in remaining:
                    raise MeshValidationError(
                        "boundary edges do not close into loops"
                    )
                cur = remaining.pop(cur)
            loops.append(loop)
        return loops

    def _count_loops(self):
        return len(self.boundary_loops())

    def _loop_labels(self, edges):
        succ = {int(a): (int(b), i) for i, (a, b) in enumerate(edges)}
        labels = [None] * len(edges)
        remaining = set(succ)
        loop_no = 0
        while remaining:
            start = next(iter(remaining))
            cur = start
            while True:
                remaining.discard(cur)
                nxt, idx = succ[cur]
                labels[idx] = f"loop{loop_no}"
                cur = nxt
                if cur == start:
                    break
            loop_no += 1
        return labels


@dataclass(frozen=True)
class MeshQualityReport:
    max_angle: float        # radians
    is_nonobtuse: bool
    h_max: float            # longest edge
    h_min: float            # shortest edge


def quality_report(mesh):
    """Per-triangle angle and edge-length statistics.

    ``is_nonobtuse`` gates the discrete maximum principle: together with mass
    lumping it makes the stiffness matrix an M-matrix.
    """
    p = [mesh.vertices[mesh.triangles[:, i]] for i in range(3)]
    max_angle = 0.0
    edge_lengths = []
    for i in range(3):
        a, b, c = p[i], p[(i + 1) % 3], p[(i + 2) % 3]
        u = b - a
        v = c - a
        nu = np.hypot(u[:, 0], u[:, 1])
        nv = np.hypot(v[:, 0], v[:, 1])
        cosang = np.clip((u * v).sum(axis=1) / (nu * nv), -1.0, 1.0)
        max_angle = max(max_angle, float(np.arccos(cosang).max()))
        edge_lengths.append(nu)
    lengths = np.concatenate(edge_lengths)
    return MeshQualityReport(
        max_angle=max_angle,
        is_nonobtuse=max_angle <= pi / 2 + 1e-12,
        h_max=float(lengths.max()),
        h_min=float(lengths.min()),
    )


def _cell_triangles(idx, i, j):
    """Two CCW triangles for grid cell (i, j), diagonal alternating by parity.

    Splitting each rectangular cell along a diagonal yields only right
    triangles, hence a non-obtuse mesh.
    """
    a = idx(i, j)
    b = idx(i + 1, j)
    c = idx(i + 1, j + 1)
    d = idx(i, j + 1)
    if (i + j) % 2 == 0:
        return [(a, b, c), (a, c, d)]
    return [(a, b, d), (b, c, d)]


def generate_rectangle(width, height, nx, ny):
    """Structured triangulation of [0, width] x [0, height].

    ``nx * ny`` rectangular cells, each split along one diagonal with the
    diagonal direction alternating checkerboard-fashion; all triangles are
    right triangles. Boundary arcs are labeled ``bottom``, ``right``,
    ``top``, ``left``.
    """
    if not (width > 0 and height > 0):
        raise ValueError("width and height must be positive")
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack((xx.ravel(), yy.ravel()))

    def idx(i, j):
        return j * (nx + 1) + i

    triangles = []
    for j in range(ny):
        for i in range(nx):
            triangles.extend(_cell_triangles(idx, i, j))

    edges = []
    labels = []
    for i in range(nx):
        edges.append((idx(i, 0), idx(i + 1, 0)))
        labels.append("bottom")
    for j in range(ny):
        edges.append((idx(nx, j), idx(nx, j + 1)))
        labels.append("right")
    for i in range(nx, 0, -1):
        edges.append((idx(i, ny), idx(i - 1, ny)))
        labels.append("top")
    for j in range(ny, 0, -1):
        edges.append((idx(0, j), idx(0, j - 1)))
        labels.append("left")

    return TriMesh(vertices, np.array(triangles), np.array(edges), labels)


def generate_lshape(n):
    """Structured triangulation of the L-shape [0,1]^2 minus [1/2,1]^2.

    3 n^2 square cells of side 1/(2n), each split along an alternating
    diagonal. Area 3/4, perimeter 4, a single boundary loop. Arc labels:
    ``bottom``, ``right``, ``notch_h``, ``notch_v``, ``top``, ``left``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    m = 2 * n
    xs = np.linspace(0.0, 1.0, m + 1)
    grid_idx = -np.ones((m + 1, m + 1), dtype=np.int64)
    vertices = []

    def keep_vertex(i, j):
        # drop vertices strictly inside the removed quadrant
        return not (i > n and j > n)

    for j in range(m + 1):
        for i in range(m + 1):
            if keep_vertex(i, j):
                grid_idx[i, j] = len(vertices)
                vertices.append((xs[i], xs[j]))

    def idx(i, j):
        return int(grid_idx[i, j])

    triangles = []
    for j in range(m):
        for i in range(m):
            if i >= n and j >= n:
                continue
            triangles.extend(_cell_triangles(idx, i, j))

    mesh = TriMesh(np.array(vertices), np.array(triangles))
    mids = mesh.boundary_midpoints()
    labels = []
    tol = 1e-12
    for x, y in mids:
        if abs(y) <= tol:
            labels.append("bottom")
        elif abs(x - 1.0) <= tol:
            labels.append("right")
        elif abs(y - 0.5) <= tol and x >= 0.5 - tol:
            labels.append("notch_h")
        elif abs(x - 0.5) <= tol and y >= 0.5 - tol:
            labels.append("notch_v")
        elif abs(y - 1.0) <= tol:
            labels.append("top")
        elif abs(x) <= tol:
            labels.append("left")
        else:
            raise MeshValidationError(f"boundary edge at ({x}, {y}) off the L outline")
    return TriMesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, labels)


def read_mesh(path):
    """Read a ``wmesh 1`` text mesh.

    Format (whitespace separated, ``#`` starts a comment):
    header line ``wmesh 1``; ``v x y`` per vertex; ``t i j k`` per CCW
    triangle (0-based); optional ``b i j label`` per boundary edge. When no
    ``b`` records are present the boundary is extracted from edge incidence
    and labeled per loop.
    """
    vertices = []
    triangles = []
    edges = []
    labels = []
    saw_header = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if not saw_header:
                if tokens != ["wmesh", "1"]:
                    raise MeshFormatError("expected header 'wmesh 1'", lineno)
                saw_header = True
                continue
            kind = tokens[0]
            try:
                if kind == "v":
                    if len(tokens) != 3:
                        raise MeshFormatError("vertex needs 2 coordinates", lineno)
                    vertices.append((float(tokens[1]), float(tokens[2])))
                elif kind == "t":
                    if len(tokens) != 4:
                        raise MeshFormatError("triangle needs 3 indices", lineno)
                    triangles.append(tuple(int(t) for t in tokens[1:4]))
                elif kind == "b":
                    if len(tokens) != 4:
                        raise MeshFormatError("boundary edge needs 2 indices and a label", lineno)
                    edges.append((int(tokens[1]), int(tokens[2])))
                    labels.append(tokens[3])
                else:
                    raise MeshFormatError(f"unknown record '{kind}'", lineno)
            except (ValueError, OverflowError) as exc:
                if isinstance(exc, MeshError):
                    raise
                raise MeshFormatError(f"cannot parse: {exc}", lineno) from exc
    if not saw_header:
        raise MeshFormatError("empty file, expected header 'wmesh 1'", line=1)
    if not triangles:
        raise MeshFormatError("mesh contains no triangles", line=1)
    if edges:
        return TriMesh(np.array(vertices), np.array(triangles),
                       np.array(edges), labels)
    return TriMesh(np.array(vertices), np.array(triangles))


def write_mesh(mesh, path, header_lines=()):
    """Write a mesh in the ``wmesh 1`` format, bit-exactly deterministically.

    Floats are rendered with 17 significant digits so a read/write round trip
    reproduces the coordinates exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("wmesh 1\n")
        for x, y in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")
        for (i, j), lab in zip(mesh.boundary_edges, mesh.boundary_labels):
            fh.write(f"b {i} {j} {lab}\n")
