"""Polygonal meshes: ingestion, generators, topology and orientation.

Conventions used throughout the package:

* ``(a, b)^perp := (-b, a)``;
* the edge tangent ``t_E`` points from the lower to the higher global
  vertex id, and ``n_E := t_E^perp``;
* ``omega[cell, edge] in {-1, +1}`` is such that ``omega * n_E`` points out
  of the cell.

Cells are simple polygons stored as counterclockwise vertex loops; clockwise
input loops are reversed with a warning.  Hanging nodes must appear as
collinear vertices of the long cell, which keeps the mesh edge-conforming.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for malformed or inconsistent mesh input."""


def perp(v):
    """Rotation by +90 degrees: (a, b) -> (-b, a)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class Mesh:
    """Immutable polygonal mesh with derived edge topology and orientations."""

    vertices: np.ndarray            # (nv, 2)
    cells: tuple                    # ccw vertex loops, tuple of tuples
    edges: np.ndarray               # (ne, 2) vertex ids, lower id first
    cell_edges: tuple               # per cell: tuple of (edge_id, omega)
    edge_cells: tuple               # per edge: tuple of incident cell ids
    tangents: np.ndarray            # (ne, 2) unit t_E
    normals: np.ndarray             # (ne, 2) n_E = t_E^perp
    edge_lengths: np.ndarray        # (ne,)
    boundary_edges: np.ndarray      # (ne,) bool
    boundary_vertices: np.ndarray   # (nv,) bool
    cell_centers: np.ndarray        # (nc, 2) interior points with inscribed ball
    cell_diameters: np.ndarray      # (nc,) max pairwise vertex distance
    cell_areas: np.ndarray          # (nc,)
    inscribed_radii: np.ndarray     # (nc,)
    centroids: np.ndarray           # (nc, 2)
    convex_flags: np.ndarray = field(repr=False, default=None)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def h(self):
        return float(self.cell_diameters.max())

    def cell_vertices(self, c):
        return self.vertices[list(self.cells[c])]


def _polygon_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, p3, p4):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _is_simple(pts):
    n = len(pts)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, pts[j], pts[(j + 1) % n]):
                return False
    return True


def _is_convex(pts, tol):
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cross < -tol:
            return False
    return True


def _point_in_polygon(p, pts):
    inside = False
    n = len(pts)
    x, y = p
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            if x < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def _dist_to_boundary(p, pts):
    """Distance from an interior point to the polygon boundary (segments)."""
    n = len(pts)
    d = np.inf
    for i in range(n):
        a = pts[i]
        b = pts[(i + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            continue
        t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
        d = min(d, float(np.linalg.norm(a + t * ab - p)))
    return d


def _inscribed_point(pts):
    """Interior point with a large inscribed ball.

    Starts from the centroid and refines by two levels of grid search for
    the Chebyshev center; the centroid wins ties so convex cells where the
    search cannot improve keep it.
    """
    area = _polygon_area(pts)
    cx = np.sum((pts[:, 0] + np.roll(pts[:, 0], -1))
                * (pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]))
    cy = np.sum((pts[:, 1] + np.roll(pts[:, 1], -1))
                * (pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]))
    centroid = np.array([cx, cy]) / (6.0 * area)

    def radius(p):
        if not _point_in_polygon(p, pts):
            return -np.inf
        return _dist_to_boundary(p, pts)

    best_p = centroid
    best_r = radius(centroid)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    ngrid = 9
    for level in range(2):
        if level == 0:
            xs = lo[0] + (np.arange(1, ngrid + 1) / (ngrid + 1)) * span[0]
            ys = lo[1] + (np.arange(1, ngrid + 1) / (ngrid + 1)) * span[1]
            step = span / (ngrid + 1)
        else:
            xs = best_p[0] + step[0] * np.linspace(-1.0, 1.0, ngrid)
            ys = best_p[1] + step[1] * np.linspace(-1.0, 1.0, ngrid)
            step = step * (2.0 / (ngrid - 1))
        for y in ys:
            for x in xs:
                r = radius(np.array([x, y]))
                if r > best_r + 1e-13 * max(span[0], span[1]):
                    best_r = r
                    best_p = np.array([x, y])
    if not np.isfinite(best_r):
        raise MeshError("no interior point found for a cell; polygon may be degenerate")
    return best_p, best_r


def _build(vertices, loops, check_duplicates=True):
    """Derive topology, orientations and geometry from vertex loops."""
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (n, 2) array")
    if check_duplicates:
        order = np.lexsort((vertices[:, 1], vertices[:, 0]))
        sv = vertices[order]
        for i in range(len(sv) - 1):
            j = i + 1
            while j < len(sv) and sv[j, 0] - sv[i, 0] <= 1e-12:
                if abs(sv[j, 1] - sv[i, 1]) <= 1e-12:
                    raise MeshError(
                        f"duplicate vertices {order[i]} and {order[j]} within 1e-12")
                j += 1

    norm_loops = []
    for ci, loop in enumerate(loops):
        loop = list(int(v) for v in loop)
        if len(loop) < 3:
            raise MeshError(f"cell {ci} has fewer than 3 vertices")
        if len(set(loop)) != len(loop):
            raise MeshError(f"cell {ci} repeats a vertex")
        pts = vertices[loop]
        area = _polygon_area(pts)
        if area < 0:
            warnings.warn(f"cell {ci} given clockwise; reversing", stacklevel=3)
            loop = loop[::-1]
            pts = vertices[loop]
            area = -area
        if area <= 0:
            raise MeshError(f"cell {ci} has non-positive area")
        if not _is_simple(pts):
            raise MeshError(f"cell {ci} is not a simple polygon")
        norm_loops.append(tuple(loop))

    edge_ids = {}
    edge_list = []
    cell_edges = []
    edge_cells = {}
    for ci, loop in enumerate(norm_loops):
        ces = []
        n = len(loop)
        for i in range(n):
            a, b = loop[i], loop[(i + 1) % n]
            key = (min(a, b), max(a, b))
            if key not in edge_ids:
                edge_ids[key] = len(edge_list)
                edge_list.append(key)
            eid = edge_ids[key]
            # ccw traversal direction d: outward normal is -d^perp; omega is
            # the sign making omega * n_E point outward
            d = vertices[b] - vertices[a]
            outward = np.array([d[1], -d[0]])
            t = vertices[key[1]] - vertices[key[0]]
            n_e = np.array([-t[1], t[0]])
            omega = 1 if float(n_e @ outward) > 0 else -1
            ces.append((eid, omega))
            edge_cells.setdefault(eid, []).append((ci, omega))
        cell_edges.append(tuple(ces))

    ne = len(edge_list)
    edges = np.array(edge_list, dtype=np.int64).reshape(ne, 2)
    for eid, incid in edge_cells.items():
        if len(incid) > 2:
            raise MeshError(f"edge {eid} shared by more than two cells")
        if len(incid) == 2 and incid[0][1] + incid[1][1] != 0:
            raise MeshError(f"edge {eid} traversed with inconsistent orientations")

    tvec = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    lengths = np.linalg.norm(tvec, axis=1)
    if np.any(lengths <= 0):
        raise MeshError("zero-length edge")
    tangents = tvec / lengths[:, None]
    normals = perp(tangents)

    boundary_edges = np.array([len(edge_cells[e]) == 1 for e in range(ne)])
    boundary_vertices = np.zeros(len(vertices), dtype=bool)
    for e in np.flatnonzero(boundary_edges):
        boundary_vertices[edges[e, 0]] = True
        boundary_vertices[edges[e, 1]] = True

    nc = len(norm_loops)
    areas = np.empty(nc)
    diams = np.empty(nc)
    centers = np.empty((nc, 2))
    radii = np.empty(nc)
    centroids = np.empty((nc, 2))
    convex = np.empty(nc, dtype=bool)
    for ci, loop in enumerate(norm_loops):
        pts = vertices[list(loop)]
        areas[ci] = _polygon_area(pts)
        diff = pts[:, None, :] - pts[None, :, :]
        diams[ci] = np.sqrt((diff**2).sum(-1)).max()
        centers[ci], radii[ci] = _inscribed_point(pts)
        cxcy, _ = _centroid(pts)
        centroids[ci] = cxcy
        convex[ci] = _is_convex(pts, 1e-12 * diams[ci] ** 2)

    for ci in range(nc):
        s = np.zeros(2)
        for eid, omega in cell_edges[ci]:
            s += omega * lengths[eid] * normals[eid]
        if np.linalg.norm(s) > 1e-12 * diams[ci]:
            raise MeshError(f"cell {ci} violates the closed-polygon identity")

    for arr in (vertices, edges, tangents, normals, lengths, boundary_edges,
                boundary_vertices, centers, diams, areas, radii, centroids, convex):
        arr.setflags(write=False)
    return Mesh(
        vertices=vertices, cells=tuple(norm_loops), edges=edges,
        cell_edges=tuple(cell_edges),
        edge_cells=tuple(tuple(c for c, _ in edge_cells[e]) for e in range(ne)),
        tangents=tangents, normals=normals, edge_lengths=lengths,
        boundary_edges=boundary_edges, boundary_vertices=boundary_vertices,
        cell_centers=centers, cell_diameters=diams, cell_areas=areas,
        inscribed_radii=radii, centroids=centroids, convex_flags=convex,
    )


def _centroid(pts):
    area = _polygon_area(pts)
    cross = pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]
    cx = np.sum((pts[:, 0] + np.roll(pts[:, 0], -1)) * cross)
    cy = np.sum((pts[:, 1] + np.roll(pts[:, 1], -1)) * cross)
    return np.array([cx, cy]) / (6.0 * area), area


def load_mesh(data):
    """Build a mesh from the JSON format {"vertices": [[x,y],..], "cells": [[v..],..]}."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise MeshError(f"malformed mesh JSON: {exc}") from exc
    if not isinstance(data, dict) or "vertices" not in data or "cells" not in data:
        raise MeshError("mesh JSON must contain 'vertices' and 'cells'")
    return _build(data["vertices"], data["cells"])


def canonical_json(mesh):
    """Canonical serialization: input order kept, floats at 17 significant digits."""
    parts = ['{"vertices": [']
    parts.append(", ".join(
        f"[{v[0]:.17g}, {v[1]:.17g}]" for v in mesh.vertices))
    parts.append('], "cells": [')
    parts.append(", ".join(
        "[" + ", ".join(str(v) for v in loop) + "]" for loop in mesh.cells))
    parts.append("]}")
    return "".join(parts)


def generate_cartesian(n):
    """n x n grid of unit-square cells scaled to [0,1]^2."""
    if n < 1:
        raise MeshError("subdivision count must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = [(x, y) for y in xs for x in xs]
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            cells.append((v00, v00 + 1, v00 + n + 2, v00 + n + 1))
    return _build(np.array(verts), cells, check_duplicates=False)


def generate_hexagonal(n):
    """Hexagon-dominant tiling of [0,1]^2, clipped convex cells at the boundary.

    Interior cells are regular hexagons; cells cut by the square boundary
    become convex quads/pentagons.  Shared vertices come from one global
    lattice, so the mesh is edge-conforming by construction.
    """
    if n < 1:
        raise MeshError("resolution must be >= 1")
    # column pitch 1/n; rows rescaled so the top and bottom boundaries cut
    # hexagon rows exactly in half (pentagons/quads, never slivers)
    m = max(int(round(2 * n / np.sqrt(3.0))), 1)
    ux = 1.0 / (2 * n)
    uy = 1.0 / (3 * m)
    # pointy-top hexagon: integer lattice offsets of vertices around a center
    offsets = [(1, -1), (1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2)]
    raw_cells = []
    for row in range(0, m + 1):
        for col in range(-1, n + 1):
            cxi = 2 * col + (row & 1)
            cyi = 3 * row
            hexagon = [((cxi + dx) * ux, (cyi + dy) * uy) for dx, dy in offsets]
            clipped = _clip_to_unit_square(hexagon)
            if clipped is not None:
                raw_cells.append(clipped)
    return _weld(raw_cells, tol=1e-9 * min(ux, uy))


def _clip_to_unit_square(poly):
    """Sutherland-Hodgman clipping against [0,1]^2; None if (almost) empty."""
    def clip(pts, inside, intersect):
        out = []
        n = len(pts)
        for i in range(n):
            cur, nxt = pts[i], pts[(i + 1) % n]
            cin, nin = inside(cur), inside(nxt)
            if cin:
                out.append(cur)
                if not nin:
                    out.append(intersect(cur, nxt))
            elif nin:
                out.append(intersect(cur, nxt))
        return out

    def make_axis(axis, bound, keep_low):
        def inside(p):
            return p[axis] >= bound - 1e-15 if keep_low else p[axis] <= bound + 1e-15

        def intersect(p, q):
            t = (bound - p[axis]) / (q[axis] - p[axis])
            r = [0.0, 0.0]
            r[axis] = bound
            r[1 - axis] = p[1 - axis] + t * (q[1 - axis] - p[1 - axis])
            return tuple(r)

        return inside, intersect

    pts = list(poly)
    for axis, bound, keep_low in ((0, 0.0, True), (0, 1.0, False),
                                  (1, 0.0, True), (1, 1.0, False)):
        inside, intersect = make_axis(axis, bound, keep_low)
        pts = clip(pts, inside, intersect)
        if len(pts) < 3:
            return None
    cleaned = []
    for p in pts:
        if not cleaned or np.hypot(p[0] - cleaned[-1][0], p[1] - cleaned[-1][1]) > 1e-13:
            cleaned.append(p)
    if len(cleaned) >= 2 and np.hypot(cleaned[0][0] - cleaned[-1][0],
                                      cleaned[0][1] - cleaned[-1][1]) <= 1e-13:
        cleaned.pop()
    if len(cleaned) < 3:
        return None
    if abs(_polygon_area(np.array(cleaned))) < 1e-14:
        return None
    return cleaned


def _weld(raw_cells, tol):
    """Merge near-identical vertices of a cell soup and build the mesh."""
    pts = np.array([p for cell in raw_cells for p in cell])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    canon = -np.ones(len(pts), dtype=np.int64)
    uniq = []
    for idx in order:
        p = pts[idx]
        found = -1
        for u in range(len(uniq) - 1, -1, -1):
            q = uniq[u]
            if p[0] - q[0] > tol:
                break
            if abs(p[1] - q[1]) <= tol and abs(p[0] - q[0]) <= tol:
                found = u
                break
        if found < 0:
            uniq.append(p)
            found = len(uniq) - 1
        canon[idx] = found
    # renumber unique vertices by first appearance in the cell soup
    first_seen = {}
    remap = {}
    k = 0
    for u in canon:
        if u not in first_seen:
            first_seen[u] = True
            remap[u] = k
            k += 1
    verts = np.empty((k, 2))
    for u, new in remap.items():
        verts[new] = uniq[u]
    cells = []
    pos = 0
    for cell in raw_cells:
        loop = []
        for _ in cell:
            loop.append(remap[canon[pos]])
            pos += 1
        dedup = [loop[i] for i in range(len(loop)) if loop[i] != loop[(i - 1) % len(loop)]]
        if len(dedup) >= 3:
            cells.append(tuple(dedup))
    return _build(verts, cells, check_duplicates=False)


def perturb(mesh, amplitude, seed):
    """Displace interior vertices by a deterministic random offset.

    Offsets are capped at amplitude * (local min edge length) / 2 and halved
    up to five times when a displacement would break convexity or simplicity
    of an incident cell; the vertex stays put if all retries fail.
    """
    if not 0.0 <= amplitude <= 0.3:
        raise MeshError("perturbation amplitude must lie in [0, 0.3]")
    verts = np.array(mesh.vertices)
    local_min_edge = np.full(mesh.n_vertices, np.inf)
    for e in range(mesh.n_edges):
        a, b = mesh.edges[e]
        le = mesh.edge_lengths[e]
        local_min_edge[a] = min(local_min_edge[a], le)
        local_min_edge[b] = min(local_min_edge[b], le)
    vertex_cells = [[] for _ in range(mesh.n_vertices)]
    for ci, loop in enumerate(mesh.cells):
        for v in loop:
            vertex_cells[v].append(ci)

    rng = np.random.default_rng(seed)
    for v in range(mesh.n_vertices):
        draw = rng.uniform(-1.0, 1.0, 2)
        if mesh.boundary_vertices[v]:
            continue
        cap = amplitude * local_min_edge[v] / 2.0
        offset = draw * (cap / np.sqrt(2.0))
        old = verts[v].copy()
        for _ in range(5):
            verts[v] = old + offset
            ok = True
            for ci in vertex_cells[v]:
                pts = verts[list(mesh.cells[ci])]
                if _polygon_area(pts) <= 0 or not _is_simple(pts) \
                        or not _is_convex(pts, 1e-12 * mesh.cell_diameters[ci] ** 2):
                    ok = False
                    break
            if ok:
                break
            offset = offset / 2.0
        else:
            verts[v] = old
    out = _build(verts, [list(c) for c in mesh.cells], check_duplicates=False)
    for ci in range(out.n_cells):
        if out.cell_areas[ci] <= 0 or not _is_simple(out.cell_vertices(ci)):
            raise MeshError(f"perturbation broke cell {ci}")
    return out


@dataclass(frozen=True)
class RegularityReport:
    """Shape-regularity diagnostics of a mesh."""

    inscribed_ratio: np.ndarray     # per cell, inscribed radius / diameter
    min_inscribed_ratio: float
    min_edge_ratio: float           # min over cells of (shortest edge / diameter)
    max_vertex_valence: int
    edges_per_cell: np.ndarray
    nonconvex_cells: tuple


def regularity_report(mesh):
    nc = mesh.n_cells
    ratio = mesh.inscribed_radii / mesh.cell_diameters
    edge_ratio = np.inf
    epc = np.empty(nc, dtype=np.int64)
    for ci in range(nc):
        epc[ci] = len(mesh.cell_edges[ci])
        emin = min(mesh.edge_lengths[e] for e, _ in mesh.cell_edges[ci])
        edge_ratio = min(edge_ratio, emin / mesh.cell_diameters[ci])
    valence = np.zeros(mesh.n_vertices, dtype=np.int64)
    for a, b in mesh.edges:
        valence[a] += 1
        valence[b] += 1
    return RegularityReport(
        inscribed_ratio=ratio,
        min_inscribed_ratio=float(ratio.min()),
        min_edge_ratio=float(edge_ratio),
        max_vertex_valence=int(valence.max()),
        edges_per_cell=epc,
        nonconvex_cells=tuple(int(c) for c in np.flatnonzero(~mesh.convex_flags)),
    )


def cell_geometry(mesh, cell):
    """(x_C, h_C, area, ordered edge list with omega) for one cell."""
    if not 0 <= cell < mesh.n_cells:
        raise MeshError(f"invalid cell id {cell}")
    return (mesh.cell_centers[cell], float(mesh.cell_diameters[cell]),
            float(mesh.cell_areas[cell]), list(mesh.cell_edges[cell]))
