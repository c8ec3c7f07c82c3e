"""Quadrature rules on polygonal cells and straight edges.

Cell rules triangulate the polygon (fan from an interior point, with an
ear-clipping fallback for cells that are not star-shaped from it) and place
a conical-product Gauss rule on each triangle.  Edge rules are mapped
Gauss-Legendre.  Every rule can self-check its own exactness against a
boundary-integral (Green's theorem) oracle that only relies on 1d Gauss
rules.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from . import kernels


@dataclass(frozen=True)
class Quadrature:
    """Points, weights and guaranteed polynomial exactness degree of a rule."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        return self.weights @ values


def gauss_legendre_1d(npts):
    """Nodes/weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(npts)


def edge_rule(p0, p1, degree):
    """Gauss-Legendre rule on the segment p0-p1 exact up to ``degree``."""
    npts = (degree + 2) // 2
    x, w = gauss_legendre_1d(max(npts, 1))
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.linalg.norm(p1 - p0))
    t = (x + 1.0) / 2.0
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    return Quadrature(pts, w * (length / 2.0), degree)


def _triangle_rule(degree):
    """Conical-product rule on the reference triangle, positive weights."""
    n = max((degree + 2) // 2, 1)
    xg, wg = gauss_legendre_1d(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    # map to [0, 1]; the Jacobi direction carries the (1 - xi) metric factor
    xi = (xj + 1.0) / 2.0
    wxi = wj / 4.0
    eta = (xg + 1.0) / 2.0
    weta = wg / 2.0
    U = np.repeat(xi, n)
    V = np.tile(eta, n) * (1.0 - U)
    W = np.repeat(wxi, n) * np.tile(weta, n)
    return np.column_stack([U, V]), W


def _fan_triangles(verts, center):
    nv = len(verts)
    tris = []
    for i in range(nv):
        tris.append((center, verts[i], verts[(i + 1) % nv]))
    return tris


def _signed_area(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _ear_clip(verts):
    """Triangulate a simple ccw polygon by ear clipping.

    Vertices on an ear's closed boundary block it (conservative), and
    collinear vertices are dropped without emitting degenerate triangles.
    """
    span = max(np.ptp([v[0] for v in verts]), np.ptp([v[1] for v in verts]))
    eps = 1e-12 * span**2
    idx = list(range(len(verts)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(verts) ** 2:
            raise ValueError("ear clipping failed: polygon may not be simple")
        nn = len(idx)
        clipped = False
        for j in range(nn):
            a, b, c = idx[(j - 1) % nn], idx[j], idx[(j + 1) % nn]
            pa, pb, pc = verts[a], verts[b], verts[c]
            area = _signed_area(pa, pb, pc)
            if abs(area) <= eps:
                if float((pb - pa) @ (pc - pb)) > 0:  # b between a and c
                    idx.pop(j)
                    clipped = True
                    break
                continue
            if area < 0.0:
                continue
            ok = True
            for m in idx:
                if m in (a, b, c):
                    continue
                if _point_in_closed_triangle(verts[m], pa, pb, pc, eps):
                    ok = False
                    break
            if ok:
                tris.append((pa, pb, pc))
                idx.pop(j)
                clipped = True
                break
        if not clipped:
            raise ValueError("ear clipping failed: polygon may not be simple")
    if _signed_area(verts[idx[0]], verts[idx[1]], verts[idx[2]]) > eps:
        tris.append((verts[idx[0]], verts[idx[1]], verts[idx[2]]))
    return tris


def _point_in_closed_triangle(p, a, b, c, eps):
    d1 = _signed_area(p, a, b)
    d2 = _signed_area(p, b, c)
    d3 = _signed_area(p, c, a)
    return (d1 >= -eps) and (d2 >= -eps) and (d3 >= -eps)


def cell_rule(verts, center, degree):
    """Quadrature on a simple ccw polygon, exact up to ``degree``.

    Fans from ``center`` when the polygon is star-shaped from it, otherwise
    falls back to ear clipping.
    """
    verts = [np.asarray(v, dtype=float) for v in verts]
    center = np.asarray(center, dtype=float)
    scale = max(np.linalg.norm(v - center) for v in verts)
    tris = _fan_triangles(verts, center)
    areas = [_signed_area(*t) for t in tris]
    if min(areas) <= 1e-12 * scale**2:
        tris = _ear_clip(verts)
        areas = [_signed_area(*t) for t in tris]
    ref_pts, ref_w = _triangle_rule(degree)
    pts = []
    wts = []
    for (a, b, c), area in zip(tris, areas):
        a = np.asarray(a)
        jac = np.stack([np.asarray(b) - a, np.asarray(c) - a])
        pts.append(a[None, :] + ref_pts @ jac)
        wts.append(ref_w * (2.0 * area))
    return Quadrature(np.vstack(pts), np.concatenate(wts), degree)


def polygon_monomial_integrals(verts, center, scale, degmax):
    """Exact integrals of scaled monomials over a polygon via Green's theorem.

    Independent of :func:`cell_rule`: each cell integral is reduced to edge
    integrals of 1d polynomials, evaluated with Gauss-Legendre rules of
    known-sufficient degree.  Returns a vector indexed like
    :func:`monomial_exponents`.
    """
    from .polyspace import monomial_exponents

    ex, ey = monomial_exponents(degmax + 1)
    verts = np.asarray(verts, dtype=float)
    nv = len(verts)
    # integrals of x^(a+1) y^b * n_x over the boundary, degree a+b+1 per edge
    vals = np.zeros(ex.shape[0])
    x1, w1 = gauss_legendre_1d((degmax + 3) // 2)
    t = (x1 + 1.0) / 2.0
    for i in range(nv):
        p0, p1 = verts[i], verts[(i + 1) % nv]
        d = p1 - p0
        length = np.linalg.norm(d)
        if length == 0.0:
            continue
        nx = d[1] / length
        pts = p0[None, :] + t[:, None] * d[None, :]
        xs = (pts[:, 0] - center[0]) / scale
        ys = (pts[:, 1] - center[1]) / scale
        mono = kernels.monomial_values(xs, ys, ex, ey)
        vals += (w1 * (length / 2.0) * nx) @ mono
    out = np.zeros(((degmax + 1) * (degmax + 2)) // 2)
    exs, eys = monomial_exponents(degmax)
    for m, (a, b) in enumerate(zip(exs, eys)):
        src = np.flatnonzero((ex == a + 1) & (ey == b))[0]
        out[m] = scale * vals[src] / (a + 1)
    return out


def validate_cell_rule(rule, verts, center, scale, rtol=1e-12):
    """Check positivity, area and monomial exactness of a cell rule."""
    if np.any(rule.weights <= 0.0):
        raise ValueError("cell quadrature produced non-positive weights")
    area = abs(_polygon_area(verts))
    if abs(rule.weights.sum() - area) > 1e-13 * max(area, 1.0):
        raise ValueError("cell quadrature weights do not sum to the area")
    from .polyspace import monomial_exponents

    ex, ey = monomial_exponents(rule.degree)
    xs = (rule.points[:, 0] - center[0]) / scale
    ys = (rule.points[:, 1] - center[1]) / scale
    approx = rule.weights @ kernels.monomial_values(xs, ys, ex, ey)
    exact = polygon_monomial_integrals(verts, center, scale, rule.degree)
    if np.max(np.abs(approx - exact)) > rtol * max(area, 1.0):
        raise ValueError("cell quadrature failed the monomial exactness check")


def _polygon_area(verts):
    verts = np.asarray(verts, dtype=float)
    x = verts[:, 0]
    y = verts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
