"""Dof layouts, interpolators and their projection properties."""

import json

import numpy as np
import pytest

import polystokes as ps
from polystokes.polyspace import dim_poly
from polystokes.spaces import DiscreteSpaces, DofVector, dof_map
from conftest import get_spaces


def test_dof_counts():
    m4 = ps.generate_cartesian(2)
    assert dof_map(m4, 1, "pressure").total == 4 * 3 == 12
    m1 = ps.generate_cartesian(1)
    assert dof_map(m1, 0, "velocity").total == 4 * 2 + 4 * 2 + 0 == 16
    assert dof_map(m1, 1, "stream").total == 4 * 3 + 4 * 3 + 1 == 25
    # tensor block sizes
    dm = dof_map(m1, 1, "tensor")
    assert dm.eblock == 2 * 3 and dm.cblock == 13


def test_numbering_layout():
    m = ps.generate_cartesian(2)
    dm = dof_map(m, 1, "velocity")
    assert dm.vertex_dofs(0)[0] == 0
    assert dm.edge_dofs(0)[0] == m.n_vertices * 2
    assert dm.cell_block(0)[0] == m.n_vertices * 2 + m.n_edges * 4
    idx = dm.cell_dofs(m, 0)
    assert len(idx) == len(set(idx.tolist()))
    assert len(idx) == 4 * 2 + 4 * 4 + (dim_poly(1) - 1 + dim_poly(0))


def test_restriction_roundtrip(mesh_cart2):
    spaces = get_spaces(("cartesian", 2), 1)
    dm = spaces.dofmap("velocity")
    rng = np.random.default_rng(0)
    dv = DofVector("velocity", 1, rng.standard_normal(dm.total))
    scattered = np.full(dm.total, np.nan)
    for c in range(mesh_cart2.n_cells):
        idx = spaces.local_dofs("velocity", c)
        scattered[idx] = spaces.restrict(dv, c)
    assert np.array_equal(scattered, dv.data)


def test_stream_constant_interpolation():
    spaces = get_spaces(("cartesian", 2), 1)
    one = spaces.interpolate_stream(lambda p: np.ones(len(p)),
                                    lambda p: np.zeros((len(p), 2)))
    dm = spaces.dofmap("stream")
    for v in range(spaces.mesh.n_vertices):
        d = one.data[dm.vertex_dofs(v)]
        assert d[0] == 1.0 and d[1] == 0.0 and d[2] == 0.0
    for e in range(spaces.mesh.n_edges):
        d = one.data[dm.edge_dofs(e)]
        # interior moments of the constant against the orthonormal modes
        # j >= 1 vanish; rotation moments vanish
        assert np.abs(d[1:]).max() < 1e-13


def test_edge_trace_reconstruction_exact():
    # a degree-(k+1) global polynomial reproduces its own edge trace
    k = 1
    spaces = get_spaces(("perturbed", 4), k)
    mesh = spaces.mesh

    def v(p):
        return p[:, 0] ** 2 - 0.3 * p[:, 0] * p[:, 1] + 0.1 * p[:, 1]

    def gv(p):
        return np.stack([2 * p[:, 0] - 0.3 * p[:, 1],
                         -0.3 * p[:, 0] + 0.1 * np.ones(len(p))], axis=-1)

    dv = spaces.interpolate_stream(v, gv)
    from polystokes.operators import stream_trace_modal

    dm = spaces.dofmap("stream")
    for e in range(mesh.n_edges):
        ectx = spaces.edges[e]
        a, b = mesh.edges[e]
        cols = np.concatenate([dm.vertex_dofs(a), dm.vertex_dofs(b),
                               dm.edge_dofs(e)])
        modal = stream_trace_modal(ectx, k) @ dv.data[cols]
        vals = ectx.eval_modal(modal[None, :])[0]
        assert np.abs(vals - v(ectx.quad.points)).max() < 1e-12


def test_stream_moments_against_independent_quadrature():
    spaces = get_spaces(("cartesian", 2), 2)
    mesh = spaces.mesh
    dv = spaces.interpolate_stream(
        lambda p: np.sin(p[:, 0]),
        lambda p: np.stack([np.cos(p[:, 0]), np.zeros(len(p))], axis=-1))
    dm = spaces.dofmap("stream")
    x, w = np.polynomial.legendre.leggauss(20)
    for e in range(mesh.n_edges):
        ectx = spaces.edges[e]
        t = (x + 1) / 2
        pts = ectx.pa[None, :] + t[:, None] * (ectx.pb - ectx.pa)[None, :]
        s = ((pts - ectx.mid) @ ectx.tangent) / ectx.length
        from polystokes import kernels

        psi = kernels.powers_1d(s, ectx.degmax) @ ectx.onb.T
        mom = psi[:, : spaces.k].T @ (w * ectx.length / 2 * np.sin(pts[:, 0]))
        got = dv.data[dm.edge_dofs(e)][: spaces.k]
        assert np.abs(got - mom).max() < 1e-12


def test_velocity_cell_projections_centered_square():
    square = {"vertices": [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
              "cells": [[0, 1, 2, 3]]}
    mesh = ps.load_mesh(json.dumps(square))
    spaces = DiscreteSpaces(mesh, 1)
    w = lambda p: np.stack([p[:, 1], -p[:, 0]], axis=-1)
    dv = spaces.interpolate_velocity(w)
    dm = spaces.dofmap("velocity")
    cell = dv.data[dm.cell_block(0)]
    ng = dim_poly(1) - 1
    assert np.abs(cell[:ng]).max() < 1e-13      # gradient part vanishes
    assert np.abs(cell[ng:]).max() > 1e-3       # Koszul complement part does not


def test_tensor_interpolation():
    spaces = get_spaces(("cartesian", 2), 1)
    mesh = spaces.mesh
    k = spaces.k
    dm = spaces.dofmap("tensor")
    ident = lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)).copy()
    dv = spaces.interpolate_tensor(ident)
    # edge part of the identity is t_E
    for e in range(mesh.n_edges):
        d = dv.data[dm.edge_dofs(e)].reshape(k + 2, 2)
        ectx = spaces.edges[e]
        want0 = ectx.psi_at_quad[:, : k + 2].T @ (ectx.quad.weights[:, None]
                                                  * np.tile(ectx.tangent, (len(ectx.quad.weights), 1)))
        assert np.abs(d - want0).max() < 1e-13
    # trace mean is preserved (the identity is in the cell space)
    for c, ctx in enumerate(spaces.cells):
        coeffs = dv.data[dm.cell_block(c)]
        amb = np.einsum("m...x,m->...x", ctx.basis("RTb", k + 1).coeffs, coeffs)
        tr = ctx.trace(amb[None, ...])[0]
        assert abs(float(tr @ ctx.mono_int) - 2 * ctx.area) < 1e-13


def test_tensor_idempotence_on_members(rng):
    spaces = get_spaces(("perturbed", 4), 1)
    ctx = spaces.cells[3]
    k = spaces.k
    member = ctx.basis("RTb", k + 1).coeffs[5]

    def W(pts):
        return ctx.eval_members(member[None, ...], points=np.asarray(pts))[0]

    got = ctx.project("RTb", k + 1, W(ctx.quad.points))
    want = np.zeros(ctx.basis("RTb", k + 1).dim)
    want[5] = 1.0
    assert np.abs(got - want).max() < 1e-11


def test_pressure_interpolation():
    spaces = get_spaces(("cartesian", 2), 1)
    dm = spaces.dofmap("pressure")
    one = spaces.interpolate_pressure(lambda p: np.ones(len(p)))
    for c, ctx in enumerate(spaces.cells):
        d = one.data[dm.cell_block(c)]
        assert abs(d[0] - np.sqrt(ctx.area)) < 1e-14
        assert np.abs(d[1:]).max() < 1e-13
    # exponential moments against an independent rule
    e = spaces.interpolate_pressure(lambda p: np.exp(p[:, 0]))
    ctx = spaces.cells[0]
    from polystokes.quadrature import cell_rule

    rule = cell_rule(ctx.verts, ctx.center, ctx.quad_degree + 6)
    vals = np.exp(rule.points[:, 0])
    P = ctx.basis("P", 1).coeffs
    mom = np.einsum("mqa,q->m",
                    ctx.eval_members(P, points=rule.points)[..., None], rule.weights * vals)
    assert np.abs(e.data[dm.cell_block(0)] - mom).max() < 1e-11


def test_edge_unisolvence():
    spaces = get_spaces(("perturbed", 4), 2)
    for ectx in spaces.edges:
        for deg in (spaces.k + 1, spaces.k + 2):
            T = ectx.pc_transform(deg)
            assert np.linalg.cond(T) < 1e6


def test_dofvector_serialization(tmp_path):
    dv = DofVector("pressure", 2, np.linspace(0, 1, 7))
    path = tmp_path / "vec.f64"
    ps.save_dofvector(path, dv)
    back = ps.load_dofvector(path)
    assert back.kind == "pressure" and back.k == 2
    assert np.array_equal(back.data, dv.data)
