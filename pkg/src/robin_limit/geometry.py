"""Model domains, P1 triangulations and the plain-text mesh format.

Three mesh generators are provided:

* rectangles get a structured grid, each cell split along its
  lower-left/upper-right diagonal;
* convex polygons are fanned from the vertex centroid and every sector is
  subdivided uniformly, so neighbouring sectors share nodes on their rays;
* disks start from a hexagonal fan whose ring ``j`` carries ``6 j`` nodes
  spread evenly in angle, so the boundary is an inscribed regular polygon.

Meshes are immutable.  ``refine`` performs uniform red refinement and, for
disk-origin meshes, pushes the new boundary midpoints out onto the circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "Interval",
    "Rectangle",
    "Disk",
    "Polygon",
    "DomainSpec",
    "TriMesh",
    "MeshError",
    "MeshFormatError",
    "build_mesh",
    "refine",
    "save_mesh",
    "load_mesh",
    "domain_area",
    "domain_perimeter",
]


class MeshError(ValueError):
    """Invalid domain or mesh topology."""


class MeshFormatError(MeshError):
    """Unparseable mesh file."""


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise MeshError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class Interval:
    """The interval (0, length)."""

    length: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "length", _positive("length", self.length))


@dataclass(frozen=True)
class Rectangle:
    """The rectangle (0, l) x (0, L)."""

    l: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "l", _positive("l", self.l))
        object.__setattr__(self, "L", _positive("L", self.L))


@dataclass(frozen=True)
class Disk:
    """The disk of radius ``R`` centred at the origin."""

    R: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "R", _positive("R", self.R))


@dataclass(frozen=True)
class Polygon:
    """A convex polygon given by counterclockwise vertices.

    Re-entrant corners are rejected: the eigenfunction normal derivatives the
    toolkit integrates are only guaranteed square integrable on convex sets.
    """

    vertices: tuple

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(pts) < 3:
            raise MeshError("polygon needs at least 3 vertices")
        arr = np.asarray(pts)
        if not np.all(np.isfinite(arr)):
            raise MeshError("polygon vertices must be finite")
        nxt = np.roll(arr, -1, axis=0)
        edges = nxt - arr
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        scale = lengths.max()
        if np.any(lengths <= 1e-12 * scale):
            raise MeshError("degenerate polygon: repeated vertex")
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(cross <= 1e-12 * scale**2):
            if np.all(cross <= 1e-12 * scale**2):
                raise MeshError("degenerate polygon: vertices must be counterclockwise with nonzero area")
            raise MeshError("polygon must be convex (re-entrant or straight corner found)")
        # total turning of a convex ccw loop is exactly one revolution
        ang = np.arctan2(edges[:, 1], edges[:, 0])
        turn = np.mod(np.roll(ang, -1) - ang, 2 * np.pi).sum()
        if abs(turn - 2 * np.pi) > 1e-8:
            raise MeshError("polygon is self-intersecting")
        object.__setattr__(self, "vertices", pts)


DomainSpec = Union[Interval, Rectangle, Disk, Polygon]


def domain_area(domain: DomainSpec) -> float:
    """Exact |Omega| (length for an interval)."""
    if isinstance(domain, Interval):
        return domain.length
    if isinstance(domain, Rectangle):
        return domain.l * domain.L
    if isinstance(domain, Disk):
        return math.pi * domain.R**2
    v = np.asarray(domain.vertices)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def domain_perimeter(domain: DomainSpec) -> float:
    """Exact |boundary| (number of endpoints, 2, for an interval)."""
    if isinstance(domain, Interval):
        return 2.0
    if isinstance(domain, Rectangle):
        return 2.0 * (domain.l + domain.L)
    if isinstance(domain, Disk):
        return 2.0 * math.pi * domain.R
    v = np.asarray(domain.vertices)
    d = np.roll(v, -1, axis=0) - v
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """P1 triangulation with a marked, counterclockwise boundary loop.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    boundary_edges : (E, 2) int array, oriented so the domain is on the left
    markers : (E,) int array identifying the side each edge lies on
    circle : radius of the exact circle the boundary approximates, or None
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    markers: np.ndarray
    circle: Optional[float] = None
    h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "markers", _frozen(self.markers, np.int64).reshape(-1))
        _validate(self)
        e = self.edges()
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        object.__setattr__(self, "h", float(np.hypot(d[:, 0], d[:, 1]).max()))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        """Lengths of the boundary edges."""
        d = self.nodes[self.boundary_edges[:, 1]] - self.nodes[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def boundary_loop(self) -> np.ndarray:
        """Boundary node indices in loop order, starting at the first edge."""
        succ = dict(self.boundary_edges.tolist())
        start = int(self.boundary_edges[0, 0])
        loop = [start]
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            cur = succ[cur]
        return np.asarray(loop, dtype=np.int64)

    def boundary_nodes(self) -> np.ndarray:
        return self.boundary_loop()

    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_edges.ravel()] = False
        return np.flatnonzero(mask)

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.markers, other.markers)
            and self.circle == other.circle
        )

    __hash__ = None


def _validate(mesh: TriMesh) -> None:
    n = len(mesh.nodes)
    if n == 0:
        raise MeshError("no nodes")
    if len(mesh.triangles) == 0:
        raise MeshError("no triangles")
    if len(mesh.boundary_edges) == 0:
        raise MeshError("no boundary edges")
    if len(mesh.markers) != len(mesh.boundary_edges):
        raise MeshError("one marker per boundary edge required")
    for name, idx in (("triangle", mesh.triangles), ("boundary edge", mesh.boundary_edges)):
        if idx.min() < 0 or idx.max() >= n:
            raise MeshError(f"{name} references a node index outside [0, {n})")
    if np.any(mesh.markers < 0):
        raise MeshError("boundary markers must be non-negative")
    area = mesh.areas()
    if np.any(area <= 0.0):
        k = int(np.argmin(area))
        raise MeshError(f"triangle {k} has non-positive signed area {area[k]:.3e}")

    # directed half-edges: an edge owned by exactly one triangle is a boundary edge
    t = mesh.triangles
    half = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(half, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    if np.any(cnt > 2):
        raise MeshError("non-manifold edge shared by more than two triangles")
    free = {tuple(e) for e in half[cnt[inv] == 1].tolist()}
    given = [tuple(e) for e in mesh.boundary_edges.tolist()]
    if len(set(given)) != len(given):
        raise MeshError("duplicate boundary edge")
    if set(given) != free:
        raise MeshError("boundary edges must be exactly the counterclockwise edges owned by one triangle")

    succ = {}
    for a, b in given:
        if a in succ:
            raise MeshError(f"boundary node {a} starts two boundary edges")
        succ[a] = b
    start = given[0][0]
    seen = 1
    cur = succ[start]
    while cur != start:
        if cur not in succ or seen > len(given):
            raise MeshError("boundary edges do not form a closed loop")
        cur = succ[cur]
        seen += 1
    if seen != len(given):
        raise MeshError("boundary edges form more than one loop")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _free_edges(triangles: np.ndarray) -> np.ndarray:
    t = triangles
    half = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    _, inv, cnt = np.unique(np.sort(half, axis=1), axis=0, return_inverse=True, return_counts=True)
    return half[cnt[inv.reshape(-1)] == 1]


def _loop_order(edges: np.ndarray) -> np.ndarray:
    succ = {int(a): int(b) for a, b in edges}
    start = min(succ)
    out = []
    cur = start
    while True:
        out.append((cur, succ[cur]))
        cur = succ[cur]
        if cur == start:
            break
    return np.asarray(out, dtype=np.int64)


def _rectangle_mesh(dom: Rectangle, h_target: float) -> TriMesh:
    nx = max(1, math.ceil(dom.l / h_target - 1e-12))
    ny = max(1, math.ceil(dom.L / h_target - 1e-12))
    xs = np.linspace(0.0, dom.l, nx + 1)
    ys = np.linspace(0.0, dom.L, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    tris = np.empty((2 * a.size, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])

    edges = _loop_order(_free_edges(tris))
    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    tol = 1e-9 * max(dom.l, dom.L)
    markers = np.select(
        [mid[:, 1] < tol, mid[:, 0] > dom.l - tol, mid[:, 1] > dom.L - tol],
        [0, 1, 2],
        default=3,
    )
    return TriMesh(nodes, tris, edges, markers)


def _sector_fan(center, verts, n, node_at):
    """Uniformly subdivided fan of triangles (center, v_k, v_{k+1}).

    ``node_at(k, j, i)`` returns the coordinates of the node on layer ``j``
    (0 = center, n = boundary) at position ``i`` in ``0..j`` of sector ``k``.
    Position ``j`` of sector ``k`` coincides with position 0 of sector ``k+1``.
    """
    nsec = len(verts)
    ids = {}
    nodes = [center]
    ids[(0, 0)] = 0
    # ring j holds nsec * j distinct nodes, indexed by r = k * j + i (mod nsec * j)
    for j in range(1, n + 1):
        for k in range(nsec):
            for i in range(j):
                ids[(j, k * j + i)] = len(nodes)
                nodes.append(node_at(k, j, i))

    def nid(k, j, i):
        if j == 0:
            return 0
        return ids[(j, (k * j + i) % (nsec * j))]

    tris = []
    for k in range(nsec):
        for j in range(n):
            for i in range(j + 1):
                tris.append((nid(k, j, i), nid(k, j + 1, i), nid(k, j + 1, i + 1)))
                if i < j:
                    tris.append((nid(k, j, i), nid(k, j + 1, i + 1), nid(k, j, i + 1)))
    boundary = []
    markers = []
    for k in range(nsec):
        for i in range(n):
            boundary.append((nid(k, n, i), nid(k, n, i + 1)))
            markers.append(k)
    return np.asarray(nodes), np.asarray(tris), np.asarray(boundary), np.asarray(markers)


def _polygon_mesh(dom: Polygon, h_target: float) -> TriMesh:
    v = np.asarray(dom.vertices)
    c = v.mean(axis=0)
    nxt = np.roll(v, -1, axis=0)
    longest = max(
        np.linalg.norm(v - c, axis=1).max(),
        np.linalg.norm(nxt - v, axis=1).max(),
    )
    n = max(1, math.ceil(longest / h_target - 1e-12))

    def node_at(k, j, i):
        p, q = v[k], nxt[k]
        return c + (j / n) * ((p - c) + (i / j) * (q - p))

    nodes, tris, edges, markers = _sector_fan(c, list(v), n, node_at)
    return TriMesh(nodes, tris, edges, markers)


def _disk_mesh(dom: Disk, h_target: float) -> TriMesh:
    R = dom.R
    n = max(1, math.ceil(R / h_target - 1e-12))
    while 2.0 * R * math.sin(math.pi / (6 * n)) > h_target:
        n += 1
    verts = [(math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)) for k in range(6)]

    def node_at(k, j, i):
        theta = (k + i / j) * math.pi / 3.0
        r = R * j / n
        return (r * math.cos(theta), r * math.sin(theta))

    nodes, tris, edges, _ = _sector_fan((0.0, 0.0), verts, n, node_at)
    return TriMesh(nodes, tris, edges, np.zeros(len(edges), dtype=np.int64), circle=R)


def build_mesh(domain: DomainSpec, h_target: float) -> TriMesh:
    """Triangulate a 2D model domain with maximal edge length near ``h_target``.

    Parameters
    ----------
    domain : Rectangle, Disk or Polygon
    h_target : float
        Target edge length.  The returned mesh has ``h <= 1.5 * h_target``.

    Returns
    -------
    TriMesh
    """
    h_target = _positive("h_target", h_target)
    if isinstance(domain, Interval):
        raise MeshError("1D intervals are handled by the exact backend and are never meshed")
    if isinstance(domain, Rectangle):
        return _rectangle_mesh(domain, h_target)
    if isinstance(domain, Disk):
        return _disk_mesh(domain, h_target)
    if isinstance(domain, Polygon):
        return _polygon_mesh(domain, h_target)
    raise MeshError(f"unsupported domain {domain!r}")


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement: every triangle is split into four."""
    t = mesh.triangles
    edges = mesh.edges()
    nn = mesh.n_nodes
    lookup = {(int(a), int(b)): nn + k for k, (a, b) in enumerate(edges)}
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])

    def mid(a, b):
        return np.fromiter(
            (lookup[(x, y) if x < y else (y, x)] for x, y in zip(a.tolist(), b.tolist())),
            dtype=np.int64,
            count=len(a),
        )

    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    tris = np.vstack(
        [
            np.column_stack([a, ab, ca]),
            np.column_stack([ab, b, bc]),
            np.column_stack([ca, bc, c]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    be = mesh.boundary_edges
    bm = mid(be[:, 0], be[:, 1])
    new_edges = np.empty((2 * len(be), 2), dtype=np.int64)
    new_edges[0::2] = np.column_stack([be[:, 0], bm])
    new_edges[1::2] = np.column_stack([bm, be[:, 1]])
    new_markers = np.repeat(mesh.markers, 2)

    nodes = np.vstack([mesh.nodes, mids])
    if mesh.circle is not None:
        p = nodes[bm]
        nodes[bm] = p * (mesh.circle / np.hypot(p[:, 0], p[:, 1]))[:, None]
    return TriMesh(nodes, tris, new_edges, new_markers, circle=mesh.circle)


# ---------------------------------------------------------------------------
# text IO
# ---------------------------------------------------------------------------


def save_mesh(mesh: TriMesh, path: Union[str, Path]) -> None:
    """Write ``mesh`` in the ``v``/``t``/``e`` record format."""
    lines = ["# robin-limit mesh"]
    if mesh.circle is not None:
        lines.append(f"# circle {mesh.circle!r}")
    lines += [f"v {x:.17g} {y:.17g}" for x, y in mesh.nodes.tolist()]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"e {i} {j} {m}" for (i, j), m in zip(mesh.boundary_edges.tolist(), mesh.markers.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_ints(parts: Sequence[str], lineno: int, count: int) -> list:
    if len(parts) != count:
        raise MeshFormatError(f"line {lineno}: expected {count} integers, got {len(parts)}")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise MeshFormatError(f"line {lineno}: expected integers, got {' '.join(parts)!r}") from None
    return vals


def load_mesh(path: Union[str, Path]) -> TriMesh:
    """Read a mesh written by :func:`save_mesh` and validate its topology."""
    nodes, tris, edges, markers = [], [], [], []
    tri_lines, edge_lines = [], []
    circle = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                words = line[1:].split()
                if len(words) == 2 and words[0] == "circle":
                    try:
                        circle = float(words[1])
                    except ValueError:
                        raise MeshFormatError(f"line {lineno}: bad circle radius {words[1]!r}") from None
                continue
            tag, *parts = line.split()
            if tag == "v":
                if len(parts) != 2:
                    raise MeshFormatError(f"line {lineno}: vertex needs 2 coordinates")
                try:
                    nodes.append((float(parts[0]), float(parts[1])))
                except ValueError:
                    raise MeshFormatError(f"line {lineno}: bad coordinate in {line!r}") from None
            elif tag == "t":
                tris.append(_parse_ints(parts, lineno, 3))
                tri_lines.append(lineno)
            elif tag == "e":
                i, j, m = _parse_ints(parts, lineno, 3)
                edges.append((i, j))
                markers.append(m)
                edge_lines.append(lineno)
            else:
                raise MeshFormatError(f"line {lineno}: unknown record type {tag!r}")
    if not nodes:
        raise MeshFormatError("no nodes")
    n = len(nodes)
    for rows, lines, what in ((tris, tri_lines, "triangle"), (edges, edge_lines, "edge")):
        for row, lineno in zip(rows, lines):
            bad = [i for i in row if not 0 <= i < n]
            if bad:
                raise MeshFormatError(f"line {lineno}: {what} references missing node {bad[0]} (have {n} nodes)")
    try:
        return TriMesh(np.asarray(nodes), np.asarray(tris), np.asarray(edges), np.asarray(markers), circle=circle)
    except MeshError as exc:
        raise MeshFormatError(f"{path}: topology validation failed: {exc}") from None
