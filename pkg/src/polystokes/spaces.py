"""Degree-of-freedom layouts and interpolators for the four discrete spaces.

The complex couples four spaces:

* ``stream``:   scalar trace + rotation dofs (vertex values and rotations,
  edge traces and tangential-rotation moments, cell moments);
* ``velocity``: vector-valued space with continuous edge traces and cell
  components along the gradient subspace and its Koszul complement;
* ``tensor``:   matrix-valued space hosting reconstructed Jacobians (edge
  tangential traces and a cell Raviart-Thomas-like component);
* ``pressure``: broken polynomials of degree k.

Global numbering is deterministic: all vertex blocks, then all edge
blocks, then all cell blocks, each in entity-id order.  Field callbacks
are vectorized: they take an (n, 2) array of points and return (n,),
(n, 2) or (n, 2, 2) arrays.
"""

import json
from dataclasses import dataclass

import numpy as np

from .mesh import perp
from .polyspace import CellContext, EdgeContext, dim_poly, space_dimension

KINDS = ("stream", "velocity", "tensor", "pressure")


def block_sizes(kind, k):
    """(vertex, edge, cell) dof-block sizes for one space kind."""
    if kind == "stream":
        return 3, 2 * k + 1, dim_poly(k - 1)
    if kind == "velocity":
        return 2, 2 * (k + 1), dim_poly(k) - 1 + dim_poly(k - 1)
    if kind == "tensor":
        return 0, 2 * (k + 2), space_dimension("RTb", k + 1)
    if kind == "pressure":
        return 0, 0, dim_poly(k)
    raise ValueError(f"unknown space kind {kind!r}")


@dataclass(frozen=True)
class DofMap:
    """Global numbering of one discrete space over a mesh."""

    kind: str
    k: int
    n_vertices: int
    n_edges: int
    n_cells: int
    vblock: int
    eblock: int
    cblock: int

    @property
    def total(self):
        return (self.n_vertices * self.vblock + self.n_edges * self.eblock
                + self.n_cells * self.cblock)

    def vertex_dofs(self, v):
        return np.arange(v * self.vblock, (v + 1) * self.vblock)

    def edge_dofs(self, e):
        base = self.n_vertices * self.vblock
        return np.arange(base + e * self.eblock, base + (e + 1) * self.eblock)

    def cell_block(self, c):
        base = self.n_vertices * self.vblock + self.n_edges * self.eblock
        return np.arange(base + c * self.cblock, base + (c + 1) * self.cblock)

    def cell_dofs(self, mesh, c):
        """Global dofs of one cell in canonical local order.

        Local order: vertex blocks along the cell loop, then edge blocks
        along the loop, then the cell block.
        """
        parts = [self.vertex_dofs(v) for v in mesh.cells[c]]
        parts += [self.edge_dofs(e) for e, _ in mesh.cell_edges[c]]
        parts.append(self.cell_block(c))
        return np.concatenate(parts)

    def boundary_dofs(self, mesh, edge_ids=None):
        """Dofs attached to the given boundary edges (default: all of them)."""
        if edge_ids is None:
            edge_ids = np.flatnonzero(mesh.boundary_edges)
        out = []
        seen_v = set()
        for e in edge_ids:
            out.append(self.edge_dofs(int(e)))
            for v in mesh.edges[int(e)]:
                if v not in seen_v:
                    seen_v.add(v)
                    out.append(self.vertex_dofs(int(v)))
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(out))


def dof_map(mesh, k, kind):
    vb, eb, cb = block_sizes(kind, k)
    return DofMap(kind, k, mesh.n_vertices, mesh.n_edges, mesh.n_cells, vb, eb, cb)


@dataclass
class DofVector:
    """Coefficients of one discrete field."""

    kind: str
    k: int
    data: np.ndarray

    def copy(self):
        return DofVector(self.kind, self.k, self.data.copy())


def save_dofvector(path, dv):
    """Flat float64 payload next to a JSON header sidecar."""
    np.asarray(dv.data, dtype=np.float64).tofile(path)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"kind": dv.kind, "k": dv.k, "length": len(dv.data)}, fh)


def load_dofvector(path):
    with open(str(path) + ".json") as fh:
        head = json.load(fh)
    data = np.fromfile(path, dtype=np.float64)
    if len(data) != head["length"]:
        raise ValueError("dof vector payload does not match its header")
    return DofVector(head["kind"], head["k"], data)


class DiscreteSpaces:
    """Mesh + degree bundle: per-entity contexts and dof maps.

    Contexts are pure functions of (mesh, entity, k); construction loops
    over entities and the result is immutable.
    """

    def __init__(self, mesh, k, validate_quadrature=False):
        self.mesh = mesh
        self.k = int(k)
        self.edges = [EdgeContext(mesh, e, k) for e in range(mesh.n_edges)]
        self.cells = [CellContext(mesh, c, k, validate=validate_quadrature)
                      for c in range(mesh.n_cells)]
        self._dofmaps = {}

    def dofmap(self, kind):
        if kind not in self._dofmaps:
            self._dofmaps[kind] = dof_map(self.mesh, self.k, kind)
        return self._dofmaps[kind]

    # ------------------------------------------------------------------
    def interpolate_stream(self, v, grad_v):
        """Interpolate a C^1 scalar field; needs an explicit gradient callback."""
        k = self.k
        dm = self.dofmap("stream")
        out = np.zeros(dm.total)
        pts = self.mesh.vertices
        vals = np.asarray(v(pts), dtype=float)
        grads = np.asarray(grad_v(pts), dtype=float)
        rots = -perp(grads)  # VROT v = (d_y v, -d_x v) = -perp(grad v)
        for vid in range(self.mesh.n_vertices):
            out[dm.vertex_dofs(vid)] = [vals[vid], rots[vid, 0], rots[vid, 1]]
        for e, ectx in enumerate(self.edges):
            q = ectx.quad
            fv = np.asarray(v(q.points), dtype=float)
            fg = np.asarray(grad_v(q.points), dtype=float)
            frot = -perp(fg)
            mom_v = ectx.psi_at_quad[:, :k].T @ (q.weights * fv) if k > 0 \
                else np.zeros(0)
            mom_t = ectx.psi_at_quad[:, :k + 1].T @ (q.weights * (frot @ ectx.tangent))
            out[dm.edge_dofs(e)] = np.concatenate([mom_v, mom_t])
        for c, ctx in enumerate(self.cells):
            fv = np.asarray(v(ctx.quad.points), dtype=float)
            out[dm.cell_block(c)] = ctx.project("P", k - 1, fv)
        return DofVector("stream", k, out)

    def interpolate_velocity(self, w):
        """Interpolate a continuous vector field."""
        k = self.k
        dm = self.dofmap("velocity")
        out = np.zeros(dm.total)
        vals = np.asarray(w(self.mesh.vertices), dtype=float)
        for vid in range(self.mesh.n_vertices):
            out[dm.vertex_dofs(vid)] = vals[vid]
        for e, ectx in enumerate(self.edges):
            q = ectx.quad
            fw = np.asarray(w(q.points), dtype=float)
            mom = ectx.psi_at_quad[:, :k + 1].T @ (q.weights[:, None] * fw)
            out[dm.edge_dofs(e)] = mom.reshape(-1)  # interleaved (moment, component)
        for c, ctx in enumerate(self.cells):
            fw = np.asarray(w(ctx.quad.points), dtype=float)
            g = ctx.project("G", k - 1, fw)
            gc = ctx.project("Gc", k, fw)
            out[dm.cell_block(c)] = np.concatenate([g, gc])
        return DofVector("velocity", k, out)

    def interpolate_tensor(self, W):
        """Interpolate a continuous matrix field."""
        k = self.k
        dm = self.dofmap("tensor")
        out = np.zeros(dm.total)
        for e, ectx in enumerate(self.edges):
            q = ectx.quad
            fW = np.asarray(W(q.points), dtype=float)
            wt = fW @ ectx.tangent
            mom = ectx.psi_at_quad[:, :k + 2].T @ (q.weights[:, None] * wt)
            out[dm.edge_dofs(e)] = mom.reshape(-1)
        for c, ctx in enumerate(self.cells):
            fW = np.asarray(W(ctx.quad.points), dtype=float)
            out[dm.cell_block(c)] = ctx.project("RTb", k + 1, fW)
        return DofVector("tensor", k, out)

    def interpolate_pressure(self, q):
        k = self.k
        dm = self.dofmap("pressure")
        out = np.zeros(dm.total)
        for c, ctx in enumerate(self.cells):
            fq = np.asarray(q(ctx.quad.points), dtype=float)
            out[dm.cell_block(c)] = ctx.project("P", k, fq)
        return DofVector("pressure", k, out)

    # ------------------------------------------------------------------
    def local_dofs(self, kind, cell):
        return self.dofmap(kind).cell_dofs(self.mesh, cell)

    def restrict(self, dv, cell):
        """Local dof values of a global vector on one cell."""
        return dv.data[self.local_dofs(dv.kind, cell)]
