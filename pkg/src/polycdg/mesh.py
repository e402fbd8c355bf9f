"""Convex polytopal meshes of the unit square.

Two deterministic families are provided:

* ``forward-slash-triangles`` -- the unit square cut into an N x N grid of
  squares (N = 2**(level-1)), each square split by the diagonal running from
  its lower-right to its upper-left corner.  Level 1 is the square split by
  the diagonal from (1,0) to (0,1); each refinement step quarters every
  triangle, so a level holds 2*4**(level-1) congruent cells.
* ``cut-corner-polygons`` -- an N x N grid (N = 2**level) whose squares have
  every corner sitting at an interior grid vertex cut off at 1/4 of the side
  length.  The four cut triangles around an interior vertex merge into a
  diamond cell, so the mesh mixes truncated squares (pentagons through
  octagons) with diamonds.  All cells are convex.

Cells store a counterclockwise vertex loop; every edge records the cell on
its left (the one that lists the edge in loop direction), the cell on its
right (``None`` on the boundary), and the unit normal pointing out of the
left cell.  Which side of an interior edge is "left" is an artifact of cell
numbering and never carries meaning downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FAMILY_TRIANGULAR = "forward-slash-triangles"
FAMILY_POLYGONAL = "cut-corner-polygons"
FAMILY_CUSTOM = "custom"

_MESH_MAGIC = "polycdg-mesh"
_MESH_VERSION = "v1"

GEOM_TOL = 1e-12


class MeshError(ValueError):
    """Raised for invalid mesh construction arguments or malformed topology."""


class MeshParseError(MeshError):
    """Raised when a mesh file cannot be parsed; carries the offending line."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Edge:
    id: int
    v0: int
    v1: int
    cell_left: int
    cell_right: int | None  # None <=> boundary edge
    length: float
    normal: tuple[float, float]  # unit, outward from cell_left

    @property
    def boundary(self) -> bool:
        return self.cell_right is None


@dataclass(frozen=True)
class Cell:
    id: int
    vertices: tuple[int, ...]  # counterclockwise loop
    edges: tuple[int, ...]  # edge ids, loop order (edge m joins vertex m to m+1)
    centroid: tuple[float, float]  # area centroid
    diameter: float  # max pairwise vertex distance
    area: float
    n_boundary_edges: int

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def is_triangle(self) -> bool:
        return len(self.vertices) == 3


@dataclass
class Mesh:
    vertices: list[Vertex]
    edges: list[Edge]
    cells: list[Cell]
    level: int
    family: str

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def coords(self) -> np.ndarray:
        """Vertex coordinates as an (n_vertices, 2) array (cached)."""
        arr = self.__dict__.get("_coords")
        if arr is None:
            arr = np.array([(v.x, v.y) for v in self.vertices], dtype=float)
            self.__dict__["_coords"] = arr
        return arr

    def cell_points(self, cell: Cell | int) -> np.ndarray:
        if isinstance(cell, int):
            cell = self.cells[cell]
        return self.coords[list(cell.vertices)]

    def edge_points(self, edge: Edge | int) -> np.ndarray:
        if isinstance(edge, int):
            edge = self.edges[edge]
        return self.coords[[edge.v0, edge.v1]]

    def neighbors(self, cell: Cell | int) -> list[int | None]:
        """Adjacent cell id across each edge of the loop (None on boundary)."""
        if isinstance(cell, int):
            cell = self.cells[cell]
        out: list[int | None] = []
        for eid in cell.edges:
            e = self.edges[eid]
            out.append(e.cell_right if e.cell_left == cell.id else e.cell_left)
        return out

    def h_max(self) -> float:
        return max(c.diameter for c in self.cells)


def _shoelace(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(points: np.ndarray, signed_area: float) -> tuple[float, float]:
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = float(np.dot(x + xn, cross)) / (6.0 * signed_area)
    cy = float(np.dot(y + yn, cross)) / (6.0 * signed_area)
    return (cx, cy)


def build_mesh(
    coords: Sequence[Sequence[float]] | np.ndarray,
    loops: Iterable[Sequence[int]],
    level: int,
    family: str,
) -> Mesh:
    """Assemble a Mesh from vertex coordinates and per-cell vertex loops.

    Edges are discovered from the loops: the first cell listing an edge
    becomes its left cell (the stored direction), the second its right cell.
    Geometry (areas, centroids, diameters, normals) is computed here; loops
    are expected counterclockwise but orientation is *not* enforced -- a
    clockwise loop yields a mesh that validate() flags.
    """
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise MeshError("coords must be an (n, 2) array")
    vertices = [Vertex(i, float(p[0]), float(p[1])) for i, p in enumerate(pts)]

    loops = [tuple(int(v) for v in loop) for loop in loops]
    for ci, loop in enumerate(loops):
        if len(loop) < 3:
            raise MeshError(f"cell {ci}: needs at least 3 vertices")
        if len(set(loop)) != len(loop):
            raise MeshError(f"cell {ci}: repeated vertex in loop")
        if any(v < 0 or v >= len(vertices) for v in loop):
            raise MeshError(f"cell {ci}: vertex id out of range")

    # Edge discovery keyed on the unordered vertex pair.
    edge_of: dict[tuple[int, int], int] = {}
    e_v0: list[int] = []
    e_v1: list[int] = []
    e_left: list[int] = []
    e_right: list[int | None] = []
    cell_edges: list[list[int]] = []
    for ci, loop in enumerate(loops):
        eids = []
        for m in range(len(loop)):
            a, b = loop[m], loop[(m + 1) % len(loop)]
            key = (a, b) if a < b else (b, a)
            eid = edge_of.get(key)
            if eid is None:
                eid = len(e_v0)
                edge_of[key] = eid
                e_v0.append(a)
                e_v1.append(b)
                e_left.append(ci)
                e_right.append(None)
            else:
                if e_right[eid] is not None:
                    raise MeshError(f"edge {key} referenced by more than two cells")
                e_right[eid] = ci
            eids.append(eid)
        cell_edges.append(eids)

    edges = []
    for eid in range(len(e_v0)):
        p0 = pts[e_v0[eid]]
        p1 = pts[e_v1[eid]]
        d = p1 - p0
        length = float(np.hypot(d[0], d[1]))
        if length <= 0.0:
            raise MeshError(f"edge {eid}: zero length")
        # Outward from the left cell: rotate the CCW direction clockwise.
        normal = (float(d[1] / length), float(-d[0] / length))
        edges.append(Edge(eid, e_v0[eid], e_v1[eid], e_left[eid], e_right[eid], length, normal))

    cells = []
    for ci, loop in enumerate(loops):
        cpts = pts[list(loop)]
        signed = _shoelace(cpts)
        area = abs(signed)
        if area <= 0.0:
            raise MeshError(f"cell {ci}: degenerate (zero area)")
        centroid = _polygon_centroid(cpts, signed)
        diam = 0.0
        for i in range(len(loop)):
            dx = cpts[i + 1 :, 0] - cpts[i, 0]
            dy = cpts[i + 1 :, 1] - cpts[i, 1]
            if dx.size:
                diam = max(diam, float(np.max(dx * dx + dy * dy)))
        nb = sum(1 for eid in cell_edges[ci] if edges[eid].cell_right is None)
        cells.append(
            Cell(ci, loop, tuple(cell_edges[ci]), centroid, math.sqrt(diam), area, nb)
        )

    return Mesh(vertices, edges, cells, level, family)


def gen_triangular(level: int) -> Mesh:
    """Uniform forward-slash triangulation of the unit square.

    Level l has N = 2**(l-1) squares per side, each split by the diagonal
    from its lower-right to its upper-left corner: 2*4**(l-1) cells total.
    """
    if not isinstance(level, int) or not 1 <= level <= 12:
        raise MeshError(f"triangular level must be an int in [1, 12], got {level!r}")
    n = 2 ** (level - 1)
    xs = [i / n for i in range(n + 1)]
    coords = [(xs[i], xs[j]) for j in range(n + 1) for i in range(n + 1)]

    def vid(i: int, j: int) -> int:
        return j * (n + 1) + i

    loops = []
    for j in range(n):
        for i in range(n):
            loops.append((vid(i, j), vid(i + 1, j), vid(i, j + 1)))
            loops.append((vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return build_mesh(coords, loops, level, FAMILY_TRIANGULAR)


def gen_polygonal(level: int) -> Mesh:
    """Cut-corner polygonal mesh: truncated squares plus diamonds.

    Start from the uniform N x N grid (N = 2**level).  Every square corner
    located at an interior grid vertex is cut off at 1/4 of the side length;
    the four cut triangles around each interior vertex form a diamond cell.
    Cell count is N**2 + (N-1)**2 (level 1: 4 truncated squares + 1 diamond).
    """
    if not isinstance(level, int) or not 1 <= level <= 10:
        raise MeshError(f"polygonal level must be an int in [1, 10], got {level!r}")
    n = 2 ** level
    unit = 1.0 / (4 * n)  # all coordinates are multiples of h/4

    key_to_id: dict[tuple[int, int], int] = {}
    coords: list[tuple[float, float]] = []

    def vid(key: tuple[int, int]) -> int:
        i = key_to_id.get(key)
        if i is None:
            i = len(coords)
            key_to_id[key] = i
            coords.append((key[0] * unit, key[1] * unit))
        return i

    def interior(gi: int, gj: int) -> bool:
        return 1 <= gi <= n - 1 and 1 <= gj <= n - 1

    # Square corner order SW, SE, NE, NW with incoming/outgoing lattice steps.
    corner_steps = (
        ((0, -1), (1, 0)),  # SW: arrive going -y, leave going +x
        ((1, 0), (0, 1)),
        ((0, 1), (-1, 0)),
        ((-1, 0), (0, -1)),
    )
    loops = []
    for j in range(n):
        for i in range(n):
            gcorners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
            loop = []
            for (gi, gj), (d_in, d_out) in zip(gcorners, corner_steps):
                base = (4 * gi, 4 * gj)
                if interior(gi, gj):
                    loop.append(vid((base[0] - d_in[0], base[1] - d_in[1])))
                    loop.append(vid((base[0] + d_out[0], base[1] + d_out[1])))
                else:
                    loop.append(vid(base))
            loops.append(loop)
    for j in range(1, n):
        for i in range(1, n):
            cx, cy = 4 * i, 4 * j
            loops.append(
                [vid((cx + 1, cy)), vid((cx, cy + 1)), vid((cx - 1, cy)), vid((cx, cy - 1))]
            )
    return build_mesh(coords, loops, level, FAMILY_POLYGONAL)


def _on_unit_square_boundary(p0: np.ndarray, p1: np.ndarray) -> bool:
    for axis in (0, 1):
        for side in (0.0, 1.0):
            if abs(p0[axis] - side) <= GEOM_TOL and abs(p1[axis] - side) <= GEOM_TOL:
                return True
    return False


def validate(mesh: Mesh) -> list[str]:
    """Check all mesh invariants; return a list of violation strings.

    An empty list means the mesh is valid.  Each violation names the entity
    and the rule it breaks; the checks are independent, so one bad cell can
    produce several entries.
    """
    out: list[str] = []
    pts = mesh.coords

    for v in mesh.vertices:
        if not (math.isfinite(v.x) and math.isfinite(v.y)):
            out.append(f"vertex {v.id}: non-finite coordinates")
        elif not (-GEOM_TOL <= v.x <= 1 + GEOM_TOL and -GEOM_TOL <= v.y <= 1 + GEOM_TOL):
            out.append(f"vertex {v.id}: outside the unit square")

    for c in mesh.cells:
        loop = np.array(c.vertices)
        cpts = pts[loop]
        signed = _shoelace(cpts)
        if signed <= 0.0:
            out.append(
                f"cell {c.id}: vertex loop not counterclockwise (signed area {signed:.3g})"
            )
        else:
            # Convexity and simplicity: every consecutive cross product positive.
            m = len(loop)
            for i in range(m):
                a = cpts[(i + 1) % m] - cpts[i]
                b = cpts[(i + 2) % m] - cpts[(i + 1) % m]
                if a[0] * b[1] - a[1] * b[0] <= 0.0:
                    out.append(f"cell {c.id}: not convex at loop position {(i + 1) % m}")
                    break
            if abs(abs(signed) - c.area) > GEOM_TOL * max(1.0, c.area):
                out.append(f"cell {c.id}: stored area {c.area:.17g} mismatches loop")
            cen = _polygon_centroid(cpts, signed)
            if math.hypot(cen[0] - c.centroid[0], cen[1] - c.centroid[1]) > GEOM_TOL:
                out.append(f"cell {c.id}: stored centroid mismatches loop")
            diam = max(
                math.dist(cpts[i], cpts[k]) for i in range(m) for k in range(i + 1, m)
            )
            if abs(diam - c.diameter) > GEOM_TOL:
                out.append(f"cell {c.id}: stored diameter mismatches loop")
        nb = sum(1 for eid in c.edges if mesh.edges[eid].boundary)
        if nb != c.n_boundary_edges:
            out.append(f"cell {c.id}: stored boundary-edge count mismatches edges")
        if nb > 2:
            out.append(f"cell {c.id}: more than two boundary edges ({nb})")

    referenced: dict[int, int] = {}
    for c in mesh.cells:
        for eid in c.edges:
            referenced[eid] = referenced.get(eid, 0) + 1

    for e in mesh.edges:
        p0, p1 = pts[e.v0], pts[e.v1]
        length = math.dist(p0, p1)
        if length <= 0.0:
            out.append(f"edge {e.id}: zero length")
            continue
        if abs(length - e.length) > GEOM_TOL:
            out.append(f"edge {e.id}: stored length mismatches endpoints")
        nrm = ((p1[1] - p0[1]) / length, (p0[0] - p1[0]) / length)
        if math.hypot(nrm[0] - e.normal[0], nrm[1] - e.normal[1]) > 1e-10:
            out.append(f"edge {e.id}: stored normal mismatches endpoints")
        expected_refs = 1 if e.boundary else 2
        if referenced.get(e.id, 0) != expected_refs:
            out.append(
                f"edge {e.id}: referenced by {referenced.get(e.id, 0)} cells, "
                f"expected {expected_refs}"
            )
        if e.boundary and not _on_unit_square_boundary(p0, p1):
            out.append(f"edge {e.id}: boundary edge not on the unit-square boundary")

        def _consecutive(ci: int, a: int, b: int) -> bool:
            loop = mesh.cells[ci].vertices
            m = len(loop)
            return any(loop[i] == a and loop[(i + 1) % m] == b for i in range(m))

        if not _consecutive(e.cell_left, e.v0, e.v1):
            out.append(f"edge {e.id}: direction inconsistent with left cell loop")
        if e.cell_right is not None and not _consecutive(e.cell_right, e.v1, e.v0):
            out.append(f"edge {e.id}: direction inconsistent with right cell loop")

    total_area = sum(c.area for c in mesh.cells)
    if abs(total_area - 1.0) > 1e-12:
        out.append(f"mesh: cell areas sum to {total_area:.17g}, expected 1")
    euler = mesh.n_vertices - mesh.n_edges + mesh.n_cells
    if euler != 1:
        out.append(f"mesh: Euler characteristic v - e + c = {euler}, expected 1")
    return out


def write_mesh(mesh: Mesh, path: str) -> None:
    """Write the text format: header, vertex block, cell block.

    Coordinates are printed with 17 significant digits so floats round-trip
    exactly.  Edges are not stored; read_mesh recomputes them.
    """
    lines = [f"{_MESH_MAGIC} {_MESH_VERSION} {mesh.family} {mesh.level}"]
    lines.append(f"vertices {mesh.n_vertices}")
    for v in mesh.vertices:
        lines.append(f"{v.id} {v.x:.17g} {v.y:.17g}")
    lines.append(f"cells {mesh.n_cells}")
    for c in mesh.cells:
        lines.append(f"{c.id} {c.n_vertices} " + " ".join(str(v) for v in c.vertices))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path: str) -> Mesh:
    """Parse the text format written by write_mesh; edges are rebuilt."""
    with open(path) as fh:
        raw = fh.read().splitlines()

    def tokens(line_no: int) -> list[str]:
        if line_no > len(raw):
            raise MeshParseError(line_no, "unexpected end of file")
        return raw[line_no - 1].split()

    head = tokens(1)
    if len(head) != 4 or head[0] != _MESH_MAGIC or head[1] != _MESH_VERSION:
        raise MeshParseError(1, f"expected '{_MESH_MAGIC} {_MESH_VERSION} <family> <level>'")
    family = head[2]
    try:
        level = int(head[3])
    except ValueError:
        raise MeshParseError(1, f"bad level {head[3]!r}") from None

    ln = 2
    head = tokens(ln)
    if len(head) != 2 or head[0] != "vertices":
        raise MeshParseError(ln, "expected 'vertices <count>'")
    try:
        n_vertices = int(head[1])
    except ValueError:
        raise MeshParseError(ln, f"bad vertex count {head[1]!r}") from None

    coords = []
    for i in range(n_vertices):
        ln += 1
        t = tokens(ln)
        if len(t) != 3:
            raise MeshParseError(ln, "expected 'id x y'")
        try:
            vid, x, y = int(t[0]), float(t[1]), float(t[2])
        except ValueError:
            raise MeshParseError(ln, f"bad vertex record {raw[ln - 1]!r}") from None
        if vid != i:
            raise MeshParseError(ln, f"vertex id {vid}, expected {i} (ids must be dense)")
        coords.append((x, y))

    ln += 1
    head = tokens(ln)
    if len(head) != 2 or head[0] != "cells":
        raise MeshParseError(ln, "expected 'cells <count>'")
    try:
        n_cells = int(head[1])
    except ValueError:
        raise MeshParseError(ln, f"bad cell count {head[1]!r}") from None

    loops = []
    for i in range(n_cells):
        ln += 1
        t = tokens(ln)
        if len(t) < 2:
            raise MeshParseError(ln, "expected 'id k v0 ... v{k-1}'")
        try:
            cid, nv = int(t[0]), int(t[1])
            loop = [int(s) for s in t[2:]]
        except ValueError:
            raise MeshParseError(ln, f"bad cell record {raw[ln - 1]!r}") from None
        if cid != i:
            raise MeshParseError(ln, f"cell id {cid}, expected {i} (ids must be dense)")
        if len(loop) != nv:
            raise MeshParseError(ln, f"cell {cid} lists {len(loop)} vertices, declared {nv}")
        if any(v < 0 or v >= n_vertices for v in loop):
            raise MeshParseError(ln, f"cell {cid} references an unknown vertex")
        loops.append(loop)

    if any(raw[i].split() for i in range(ln, len(raw))):
        raise MeshParseError(ln + 1, "trailing content after cell block")
    try:
        return build_mesh(coords, loops, level, family)
    except MeshError as exc:
        raise MeshParseError(ln, f"mesh does not assemble: {exc}") from exc
