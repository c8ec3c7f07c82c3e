"""Quadrature exactness against closed forms and the boundary-integral oracle."""

import numpy as np
import pytest

from polystokes import quadrature as quad

SQUARE = [np.array([0.0, 0.0]), np.array([1.0, 0.0]),
          np.array([1.0, 1.0]), np.array([0.0, 1.0])]


def test_edge_rule_point_count():
    # Gauss-Legendre: degree 3 needs 2 points
    r = quad.edge_rule([0.0, 0.0], [1.0, 0.0], 3)
    assert len(r.weights) == 2
    assert abs(r.weights.sum() - 1.0) < 1e-15


def test_edge_rule_exactness():
    r = quad.edge_rule([0.2, -0.1], [0.9, 0.4], 7)
    length = np.hypot(0.7, 0.5)
    s = np.linalg.norm(r.points - np.array([0.2, -0.1]), axis=1)
    for d in range(8):
        exact = length ** (d + 1) / (d + 1)
        assert abs(r.weights @ s**d - exact) < 1e-13 * max(exact, 1.0)


def test_unit_square_x2y2():
    r = quad.cell_rule(SQUARE, np.array([0.5, 0.5]), 4)
    val = r.weights @ (r.points[:, 0] ** 2 * r.points[:, 1] ** 2)
    assert abs(val - 1.0 / 9.0) < 1e-13


def test_triangle_area_from_weights():
    tri = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    r = quad.cell_rule(tri, np.array([0.25, 0.25]), 3)
    assert abs(r.weights.sum() - 0.5) < 1e-14
    assert np.all(r.weights > 0)


@pytest.mark.parametrize("degree", [2, 5, 8, 12])
def test_polygon_rule_against_green_oracle(degree):
    rng = np.random.default_rng(3)
    # random convex polygon around the origin
    ang = np.sort(rng.uniform(0, 2 * np.pi, 6))
    rad = rng.uniform(0.5, 1.0, 6)
    verts = [np.array([np.cos(a), np.sin(a)]) * r for a, r in zip(ang, rad)]
    center = np.mean(verts, axis=0)
    scale = 2.0
    rule = quad.cell_rule(verts, center, degree)
    quad.validate_cell_rule(rule, verts, center, scale)


def test_nonconvex_cell_falls_back_to_ear_clipping():
    # L-shaped polygon is not star-shaped from its centroid region corner
    verts = [np.array(p, dtype=float) for p in
             [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]]
    center = np.array([1.5, 1.5])  # outside the L
    rule = quad.cell_rule(verts, center, 3)
    assert abs(rule.weights.sum() - 3.0) < 1e-12
    assert np.all(rule.weights > 0)


def test_weights_positive_high_degree():
    r = quad.cell_rule(SQUARE, np.array([0.5, 0.5]), 14)
    assert np.all(r.weights > 0)
    assert abs(r.weights.sum() - 1.0) < 1e-13
