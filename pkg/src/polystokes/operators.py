"""Discrete differential operators of the 2d complex.

Stream -> velocity (rot), velocity -> tensor (Jacobian reconstruction with
its potential), velocity -> pressure (divergence).  All sign conventions
follow the integration-by-parts identity

    int_C VROT q . w  =  int_C q ROT w  +  sum_E omega_CE int_E q (w . t_E)

with ROT w := d1 w2 - d2 w1 and VROT q := (d2 q, -d1 q), which is locked in
by the constant-kernel and polynomial-consistency tests.  ``flip_vrot``
deliberately breaks the convention in the edge rotation (negative control
for the complex property check).
"""

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .polyspace import dim_poly
from .spaces import block_sizes


def _edge_layout_cols(kind, k):
    """Number of columns of the per-edge operator block [A dofs, B dofs, edge dofs]."""
    vb, eb, _ = block_sizes(kind, k)
    return 2 * vb + eb


def stream_trace_modal(ectx, k):
    """Map per-edge stream dofs to modal coefficients of the scalar edge trace.

    Returns (k+2, ncols) over columns [vertexA(3), vertexB(3), edge(2k+1)];
    vertex A is the lower global id (the tangent origin).
    """
    ncols = _edge_layout_cols("stream", k)
    S = np.zeros((k + 2, ncols))
    S[0, 0] = 1.0
    S[1, 3] = 1.0
    for j in range(k):
        S[2 + j, 6 + j] = 1.0
    return ectx.pc_transform(k + 1) @ S


def rot_edge_matrix(ectx, k, flip_vrot=False):
    """Edge rotation: stream edge dofs -> modal coefficients of w_E.

    w_E is the degree-(k+2) vector polynomial with endpoint values equal to
    the vertex rotation dofs and moments

        pi^k(w_E) = srdof * t_E - v_E' * n_E ,

    the minus sign being forced by VROT v . n_E = -d_t v.  Output shape
    (2, k+3, ncols) over the stream per-edge layout.
    """
    ncols = _edge_layout_cols("stream", k)
    vmodal = stream_trace_modal(ectx, k)
    vpad = np.vstack([vmodal, np.zeros((1, ncols))])
    vprime = ectx.deriv @ vpad
    sign = 1.0 if flip_vrot else -1.0
    T2 = ectx.pc_transform(k + 2)
    out = np.zeros((2, k + 3, ncols))
    for c in range(2):
        dofs = np.zeros((k + 3, ncols))
        dofs[0, 1 + c] = 1.0
        dofs[1, 4 + c] = 1.0
        for j in range(k + 1):
            dofs[2 + j, 6 + k + j] += ectx.tangent[c]
            dofs[2 + j, :] += sign * ectx.normal[c] * vprime[j, :]
        out[c] = T2 @ dofs
    return out


def velocity_edge_modal(ectx, k):
    """Velocity edge dofs -> modal coefficients of the vector edge trace.

    Shape (2, k+3, ncols) over columns [vertexA(2), vertexB(2), moments
    interleaved (j, component)].
    """
    ncols = _edge_layout_cols("velocity", k)
    T2 = ectx.pc_transform(k + 2)
    out = np.zeros((2, k + 3, ncols))
    for c in range(2):
        S = np.zeros((k + 3, ncols))
        S[0, c] = 1.0
        S[1, 2 + c] = 1.0
        for j in range(k + 1):
            S[2 + j, 4 + 2 * j + c] = 1.0
        out[c] = T2 @ S
    return out


def tgrad_edge_matrix(ectx, k, recon=None):
    """Arclength derivative of the velocity edge trace, modal degree k+1.

    Shape (2, k+2, ncols); exact since the trace is a polynomial.
    """
    if recon is None:
        recon = velocity_edge_modal(ectx, k)
    out = np.zeros((2, k + 2, recon.shape[2]))
    for c in range(2):
        out[c] = (ectx.deriv @ recon[c])[: k + 2, :]
    return out


class LocalOperators:
    """All per-cell operator matrices over canonical local dof layouts."""

    def __init__(self, spaces, cell, flip_vrot=False):
        self.spaces = spaces
        self.cell = cell
        self.k = spaces.k
        self.ctx = spaces.cells[cell]
        self.flip_vrot = flip_vrot
        mesh = spaces.mesh
        self.loop = mesh.cells[cell]
        self.nv = len(self.loop)
        self.edge_uses = []
        for i, (eid, omega) in enumerate(mesh.cell_edges[cell]):
            ectx = spaces.edges[eid]
            a = int(mesh.edges[eid][0])
            b = int(mesh.edges[eid][1])
            self.edge_uses.append((eid, omega, ectx, self.loop.index(a), self.loop.index(b)))

    # ------------------------------------------------------------------
    # local layout helpers
    def nloc(self, kind):
        vb, eb, cb = block_sizes(kind, self.k)
        return self.nv * (vb + eb) + cb

    def _edge_cols(self, kind, i):
        """Local columns of the per-edge layout [A block, B block, edge block]."""
        vb, eb, _ = block_sizes(kind, self.k)
        _, _, _, ia, ib = self.edge_uses[i]
        cols = [ia * vb + j for j in range(vb)]
        cols += [ib * vb + j for j in range(vb)]
        base = self.nv * vb + i * eb
        cols += [base + j for j in range(eb)]
        return np.array(cols, dtype=np.int64)

    def cell_block_cols(self, kind):
        vb, eb, cb = block_sizes(kind, self.k)
        return np.arange(self.nv * (vb + eb), self.nv * (vb + eb) + cb)

    # ------------------------------------------------------------------
    @cached_property
    def vel_edge_recon(self):
        """Per local edge: velocity dofs -> modal trace, scattered to local columns."""
        k = self.k
        n = self.nloc("velocity")
        out = []
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            blk = velocity_edge_modal(ectx, k)
            full = np.zeros((2, k + 3, n))
            full[:, :, self._edge_cols("velocity", i)] = blk
            out.append(full)
        return out

    @cached_property
    def stream_edge_rot(self):
        k = self.k
        n = self.nloc("stream")
        out = []
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            blk = rot_edge_matrix(ectx, k, self.flip_vrot)
            full = np.zeros((2, k + 3, n))
            full[:, :, self._edge_cols("stream", i)] = blk
            out.append(full)
        return out

    @cached_property
    def stream_trace(self):
        k = self.k
        n = self.nloc("stream")
        out = []
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            blk = stream_trace_modal(ectx, k)
            full = np.zeros((k + 2, n))
            full[:, self._edge_cols("stream", i)] = blk
            out.append(full)
        return out

    def _edge_values(self, modal_ops, ectx):
        """Modal operator (2, nmodes, n) -> values at edge quadrature (nq, 2, n)."""
        nmodes = modal_ops.shape[1]
        psi = ectx.psi_at_quad[:, :nmodes]
        return np.einsum("qm,cmn->qcn", psi, modal_ops)

    # ------------------------------------------------------------------
    @cached_property
    def rot_cell_field(self):
        """Full vector reconstruction R_C: stream dofs -> coefficients in P^k(C)^2.

        Defined by testing against every vector polynomial of degree k with
        the cell moment and the edge tangential traces.
        """
        ctx = self.ctx
        k = self.k
        n = self.nloc("stream")
        W = ctx.basis("Pvec", k).coeffs
        rhs = np.zeros((W.shape[0], n))
        rotW = ctx.rot(W)
        cellcols = self.cell_block_cols("stream")
        if len(cellcols):
            Pm1 = ctx.basis("P", k - 1).coeffs
            rhs[:, cellcols] = ctx.inner(Pm1, rotW).T
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            wvals = ctx.eval_members(W, points=ectx.quad.points)
            wt = wvals @ ectx.tangent
            vvals = ectx.psi_at_quad[:, : k + 2] @ self.stream_trace[i]
            rhs += omega * np.einsum("mq,q,qn->mn", wt, ectx.quad.weights, vvals)
        return rhs  # coefficients in the orthonormal Pvec(k) basis

    @cached_property
    def rot_cell_parts(self):
        """(G-part, Gc-part) of the projected cell rotation."""
        ctx = self.ctx
        k = self.k
        W = ctx.basis("Pvec", k).coeffs
        amb = np.einsum("m...x,mn->n...x", W, self.rot_cell_field)
        g = ctx.solve_gram("G", k - 1, ctx.inner(ctx.basis("G", k - 1).coeffs, amb))
        gc = ctx.solve_gram("Gc", k, ctx.inner(ctx.basis("Gc", k).coeffs, amb))
        return g, gc

    @cached_property
    def rot_local(self):
        """Local rotation operator: stream dofs -> velocity dofs."""
        k = self.k
        out = np.zeros((self.nloc("velocity"), self.nloc("stream")))
        for iv in range(self.nv):
            for c in range(2):
                out[2 * iv + c, 3 * iv + 1 + c] = 1.0
        vb, eb, _ = block_sizes("velocity", k)
        for i in range(self.nv):
            modal = self.stream_edge_rot[i]
            base = self.nv * vb + i * eb
            for j in range(k + 1):
                for c in range(2):
                    out[base + 2 * j + c, :] = modal[c, j, :]
        g, gc = self.rot_cell_parts
        cellcols = self.cell_block_cols("velocity")
        out[cellcols, :] = np.vstack([g, gc])
        return out

    # ------------------------------------------------------------------
    @cached_property
    def tgrad(self):
        """Jacobian reconstruction: velocity dofs -> RTb^{k+1} coefficients.

        Solved against the full (non-orthogonal) RTb Gram matrix; the
        boundary term pairs the edge traces with the matrix normal traces.
        """
        ctx = self.ctx
        k = self.k
        n = self.nloc("velocity")
        V = ctx.basis("RTb", k + 1).coeffs
        sl_rbc, sl_rb, sl_r0, sl_r1 = ctx.rtb_slices(k + 1)
        rhs = np.zeros((V.shape[0], n))
        cellcols = self.cell_block_cols("velocity")
        ng = dim_poly(k) - 1
        gcols = cellcols[:ng]
        gccols = cellcols[ng:]
        if V[sl_rbc].shape[0] and len(gccols):
            div_rbc = ctx.tdiv(V[sl_rbc])
            rhs[sl_rbc.start: sl_rbc.stop, gccols] = -ctx.inner(
                div_rbc, ctx.basis("Gc", k).coeffs)
        if V[sl_rb].shape[0] and len(gcols):
            div_rb = ctx.tdiv(V[sl_rb])
            rhs[sl_rb.start: sl_rb.stop, gcols] = -ctx.inner(
                div_rb, ctx.basis("G", k - 1).coeffs)
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            Vvals = ctx.eval_members(V, points=ectx.quad.points)
            Vn = Vvals @ ectx.normal
            wvals = self._edge_values(self.vel_edge_recon[i], ectx)
            rhs += omega * np.einsum("mqc,q,qcn->mn", Vn, ectx.quad.weights, wvals)
        return ctx.solve_gram("RTb", k + 1, rhs)

    @cached_property
    def potential(self):
        """Velocity dofs -> coefficients of the degree-(k+1) vector potential.

        Tested against single-row matrices with rows in the Koszul
        complement of degree k+2; well-posed by the row-wise divergence
        isomorphism.
        """
        ctx = self.ctx
        k = self.k
        n = self.nloc("velocity")
        Rc = ctx.basis("Rc", k + 2).coeffs
        nrc = Rc.shape[0]
        P1 = ctx.basis("P", k + 1).coeffs
        divRc = ctx.dx(Rc[:, 0, :]) + ctx.dy(Rc[:, 1, :])
        Dmat = ctx.inner(P1, divRc)  # (dim P^{k+1}, nrc), square
        V = ctx.basis("RTb", k + 1).coeffs
        npk1 = P1.shape[0]
        out = np.zeros((2 * npk1, n))
        for row in range(2):
            Vi = np.zeros((nrc, 2, 2, ctx.nmono))
            Vi[:, row, :, :] = Rc
            CG = ctx.inner(Vi, V)
            rhs = -CG @ self.tgrad
            for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
                rvals = ctx.eval_members(Rc, points=ectx.quad.points)
                rn = rvals @ ectx.normal
                wvals = self._edge_values(self.vel_edge_recon[i], ectx)
                rhs += omega * np.einsum("mq,q,qn->mn", rn, ectx.quad.weights,
                                         wvals[:, row, :])
            coeffs = np.linalg.solve(Dmat.T, rhs)
            out[row::2, :] = coeffs
        return out

    @cached_property
    def divergence(self):
        """Velocity dofs -> P^k coefficients; the trace of the Jacobian."""
        ctx = self.ctx
        V = ctx.basis("RTb", self.k + 1).coeffs
        Tmat = ctx.inner(ctx.basis("P", self.k).coeffs, ctx.trace(V))
        return Tmat @ self.tgrad

    @cached_property
    def divergence_ibp(self):
        """Divergence by the integration-by-parts formula (cross-check)."""
        ctx = self.ctx
        k = self.k
        n = self.nloc("velocity")
        P = ctx.basis("P", k).coeffs
        out = np.zeros((P.shape[0], n))
        gradP = ctx.grad(P)
        cellcols = self.cell_block_cols("velocity")
        ng = dim_poly(k) - 1
        gcols = cellcols[:ng]
        if len(gcols):
            out[:, gcols] = -ctx.inner(gradP, ctx.basis("G", k - 1).coeffs)
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            pvals = ctx.eval_members(P, points=ectx.quad.points)
            wvals = self._edge_values(self.vel_edge_recon[i], ectx)
            wn = np.einsum("qcn,c->qn", wvals, ectx.normal)
            out += omega * np.einsum("mq,q,qn->mn", pvals, ectx.quad.weights, wn)
        return out

    @cached_property
    def tgrad_edges(self):
        """Per local edge: velocity dofs -> modal coefficients of the edge Jacobian."""
        k = self.k
        out = []
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.edge_uses):
            full = np.zeros((2, k + 2, self.nloc("velocity")))
            for c in range(2):
                full[c] = (ectx.deriv @ self.vel_edge_recon[i][c])[: k + 2, :]
            out.append(full)
        return out

    @cached_property
    def tensor_of_velocity(self):
        """Velocity dofs -> local tensor dofs (edge Jacobians then cell Jacobian)."""
        k = self.k
        vb, eb, cb = block_sizes("tensor", k)
        out = np.zeros((self.nloc("tensor"), self.nloc("velocity")))
        for i in range(self.nv):
            modal = self.tgrad_edges[i]
            base = i * eb
            for j in range(k + 2):
                for c in range(2):
                    out[base + 2 * j + c, :] = modal[c, j, :]
        out[self.cell_block_cols("tensor"), :] = self.tgrad
        return out


def build_local_operators(spaces, flip_vrot=False):
    return [LocalOperators(spaces, c, flip_vrot=flip_vrot)
            for c in range(spaces.mesh.n_cells)]


def global_operator(spaces, which, flip_vrot=False, local_ops=None):
    """Assemble a global sparse operator between the discrete spaces.

    ``which`` is one of ``rot`` (stream -> velocity), ``tgrad`` (velocity ->
    tensor) or ``div`` (velocity -> pressure).  Rows attached to shared
    entities are written once per owning entity, so assembly is
    deterministic and conflict-free.
    """
    mesh = spaces.mesh
    k = spaces.k
    if local_ops is None:
        local_ops = build_local_operators(spaces, flip_vrot=flip_vrot)
    elif local_ops:
        flip_vrot = local_ops[0].flip_vrot
    rows, cols, vals = [], [], []

    def put(r_idx, c_idx, block):
        r, c = np.broadcast_arrays(np.asarray(r_idx)[:, None], np.asarray(c_idx)[None, :])
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.asarray(block).ravel())

    if which == "rot":
        dm_in = spaces.dofmap("stream")
        dm_out = spaces.dofmap("velocity")
        for v in range(mesh.n_vertices):
            sd = dm_in.vertex_dofs(v)
            vd = dm_out.vertex_dofs(v)
            put(vd, sd[1:], np.eye(2))
        for e in range(mesh.n_edges):
            ectx = spaces.edges[e]
            blk = rot_edge_matrix(ectx, k, flip_vrot)
            a, b = mesh.edges[e]
            cidx = np.concatenate([dm_in.vertex_dofs(a), dm_in.vertex_dofs(b),
                                   dm_in.edge_dofs(e)])
            ed = dm_out.edge_dofs(e)
            mat = np.zeros((len(ed), blk.shape[2]))
            for j in range(k + 1):
                for c in range(2):
                    mat[2 * j + c, :] = blk[c, j, :]
            put(ed, cidx, mat)
        for ci, lo in enumerate(local_ops):
            g, gc = lo.rot_cell_parts
            put(dm_out.cell_block(ci), dm_in.cell_dofs(mesh, ci), np.vstack([g, gc]))
    elif which == "tgrad":
        dm_in = spaces.dofmap("velocity")
        dm_out = spaces.dofmap("tensor")
        for e in range(mesh.n_edges):
            ectx = spaces.edges[e]
            blk = tgrad_edge_matrix(ectx, k)
            a, b = mesh.edges[e]
            cidx = np.concatenate([dm_in.vertex_dofs(a), dm_in.vertex_dofs(b),
                                   dm_in.edge_dofs(e)])
            ed = dm_out.edge_dofs(e)
            mat = np.zeros((len(ed), blk.shape[2]))
            for j in range(k + 2):
                for c in range(2):
                    mat[2 * j + c, :] = blk[c, j, :]
            put(ed, cidx, mat)
        for ci, lo in enumerate(local_ops):
            put(dm_out.cell_block(ci), dm_in.cell_dofs(mesh, ci), lo.tgrad)
    elif which == "div":
        dm_in = spaces.dofmap("velocity")
        dm_out = spaces.dofmap("pressure")
        for ci, lo in enumerate(local_ops):
            put(dm_out.cell_block(ci), dm_in.cell_dofs(mesh, ci), lo.divergence)
    else:
        raise ValueError(f"unknown operator {which!r}")

    dm_in_total = spaces.dofmap({"rot": "stream", "tgrad": "velocity",
                                 "div": "velocity"}[which]).total
    dm_out_total = spaces.dofmap({"rot": "velocity", "tgrad": "tensor",
                                  "div": "pressure"}[which]).total
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dm_out_total, dm_in_total))
    mat.sum_duplicates()
    return mat.tocsr()
