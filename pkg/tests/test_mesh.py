"""Mesh ingestion, generators, orientation invariants, regularity."""

import json

import numpy as np
import pytest

import polystokes as ps
from polystokes.mesh import MeshError, canonical_json

UNIT_SQUARE = {"vertices": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
               "cells": [[0, 1, 2, 3]]}


def check_invariants(mesh):
    for ci in range(mesh.n_cells):
        s = np.zeros(2)
        for e, om in mesh.cell_edges[ci]:
            s += om * mesh.edge_lengths[e] * mesh.normals[e]
        assert np.linalg.norm(s) <= 1e-12 * mesh.cell_diameters[ci]
    for e in range(mesh.n_edges):
        incid = [om for ci in mesh.edge_cells[e]
                 for ee, om in mesh.cell_edges[ci] if ee == e]
        assert len(incid) in (1, 2)
        if len(incid) == 2:
            assert incid[0] + incid[1] == 0
    # tangent from lower to higher vertex id
    for e in range(mesh.n_edges):
        a, b = mesh.edges[e]
        assert a < b
        t = (mesh.vertices[b] - mesh.vertices[a])
        t = t / np.linalg.norm(t)
        assert np.allclose(t, mesh.tangents[e])


def test_unit_square_load():
    m = ps.load_mesh(json.dumps(UNIT_SQUARE))
    assert m.n_cells == 1 and m.n_edges == 4 and m.n_vertices == 4
    assert m.boundary_edges.all()
    check_invariants(m)


def test_cartesian_2x2_counts():
    m = ps.generate_cartesian(2)
    assert m.n_cells == 4 and m.n_edges == 12 and m.n_vertices == 9
    assert int(m.boundary_edges.sum()) == 8
    assert int((~m.boundary_edges).sum()) == 4
    check_invariants(m)


def test_cartesian_4_euler_and_h():
    m = ps.generate_cartesian(4)
    assert (m.n_vertices - m.n_edges + m.n_cells) == 1
    assert m.n_cells == 16 and m.n_edges == 40 and m.n_vertices == 25
    m8 = ps.generate_cartesian(8)
    assert abs(m8.h - np.sqrt(2) / 8) < 1e-15


def test_clockwise_input_is_normalized():
    cw = {"vertices": UNIT_SQUARE["vertices"], "cells": [[3, 2, 1, 0]]}
    with pytest.warns(UserWarning):
        m = ps.load_mesh(json.dumps(cw))
    m2 = ps.load_mesh(json.dumps(UNIT_SQUARE))
    assert canonical_json(m) == canonical_json(m2)


def test_malformed_inputs():
    with pytest.raises(MeshError):
        ps.load_mesh(b"{not json")
    with pytest.raises(MeshError):
        ps.load_mesh(json.dumps({"vertices": [[0, 0]]}))
    dup = {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1], [1.0, 0.0]],
           "cells": [[0, 1, 2, 3]]}
    with pytest.raises(MeshError):
        ps.load_mesh(json.dumps(dup))
    bowtie = {"vertices": [[0, 0], [1, 1], [1, 0], [0, 1]],
              "cells": [[0, 1, 2, 3]]}
    with pytest.raises(MeshError):
        ps.load_mesh(json.dumps(bowtie))


def test_canonical_roundtrip_idempotent():
    m = ps.perturb(ps.generate_cartesian(3), 0.15, 5)
    s1 = canonical_json(m)
    s2 = canonical_json(ps.load_mesh(s1))
    assert s1 == s2


def test_hexagonal_properties(mesh_hexa3):
    m = mesh_hexa3
    assert abs(m.cell_areas.sum() - 1.0) <= 1e-12
    check_invariants(m)
    # interior cells (no boundary vertex) are hexagons
    for ci, loop in enumerate(m.cells):
        if not any(m.boundary_vertices[v] for v in loop):
            assert len(loop) == 6
    rep = ps.regularity_report(m)
    assert not rep.nonconvex_cells


def test_perturb_determinism_and_identity(mesh_cart4):
    p1 = ps.perturb(mesh_cart4, 0.2, 7)
    p2 = ps.perturb(mesh_cart4, 0.2, 7)
    assert canonical_json(p1) == canonical_json(p2)
    p0 = ps.perturb(mesh_cart4, 0.0, 7)
    assert np.array_equal(p0.vertices, mesh_cart4.vertices)
    p3 = ps.perturb(mesh_cart4, 0.2, 8)
    assert canonical_json(p3) != canonical_json(p1)


def test_perturb_keeps_cells_valid():
    m = ps.perturb(ps.generate_cartesian(8), 0.2, 1)
    assert (m.cell_areas > 0).all()
    check_invariants(m)
    # boundary vertices fixed
    m0 = ps.generate_cartesian(8)
    bnd = m0.boundary_vertices
    assert np.array_equal(m.vertices[bnd], m0.vertices[bnd])


def test_amplitude_out_of_range(mesh_cart4):
    with pytest.raises(MeshError):
        ps.perturb(mesh_cart4, 0.5, 1)


def test_regularity_square():
    m = ps.generate_cartesian(1)
    rep = ps.regularity_report(m)
    assert abs(rep.min_inscribed_ratio - 0.5 / np.sqrt(2)) < 1e-12
    # scaling invariance across the family
    rep4 = ps.regularity_report(ps.generate_cartesian(4))
    assert abs(rep4.min_inscribed_ratio - rep.min_inscribed_ratio) < 1e-12


def test_regularity_perturbed_not_better(mesh_cart4, mesh_pert4):
    r0 = ps.regularity_report(mesh_cart4).min_inscribed_ratio
    r1 = ps.regularity_report(mesh_pert4).min_inscribed_ratio
    assert r1 <= r0 + 1e-12


def test_cell_geometry():
    m = ps.generate_cartesian(1)
    xc, h, area, edges = ps.cell_geometry(m, 0)
    assert np.allclose(xc, [0.5, 0.5])
    assert abs(h - np.sqrt(2)) < 1e-15
    assert abs(area - 1.0) < 1e-15
    assert len(edges) == 4
    with pytest.raises(MeshError):
        ps.cell_geometry(m, 5)


def test_cell_geometry_triangle():
    tri = {"vertices": [[0, 0], [1, 0], [0, 1]], "cells": [[0, 1, 2]]}
    m = ps.load_mesh(json.dumps(tri))
    xc, h, area, _ = ps.cell_geometry(m, 0)
    assert abs(h - np.sqrt(2)) < 1e-15
    assert abs(area - 0.5) < 1e-15


def test_hexagon_center_inside(mesh_hexa3):
    from polystokes.mesh import _point_in_polygon

    for ci in range(mesh_hexa3.n_cells):
        pts = mesh_hexa3.cell_vertices(ci)
        assert _point_in_polygon(mesh_hexa3.cell_centers[ci], pts)


def test_generator_rejects_zero():
    with pytest.raises(MeshError):
        ps.generate_cartesian(0)
    with pytest.raises(MeshError):
        ps.generate_hexagonal(0)


def test_collinear_hanging_node_accepted():
    # nonconforming refinement written conformingly: the long edge is split
    mesh = {
        "vertices": [[0, 0], [1, 0], [2, 0], [2, 1], [1, 1], [0, 1],
                     [0.0, 0.5], [2.0, 0.5]],
        "cells": [[0, 1, 4, 5], [1, 2, 7, 3, 4]],
    }
    m = ps.load_mesh(json.dumps(mesh))
    assert m.n_cells == 2
    check_invariants(m)
