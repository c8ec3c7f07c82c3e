"""Stabilized discrete L2 products, component norms and the energy norm.

The velocity product integrates reconstructed potentials and penalizes
their mismatch with the edge traces; the tensor product does the same for
the reconstructed Jacobian against the edge Jacobians.  Edge penalties are
weighted by h_E (codimension-one scaling in 2d).  Component norms weight
raw dof blocks the same way and are equivalent to the product-induced
norms, which a regression test monitors across refinement.
"""

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .polyspace import dim_poly
from .spaces import block_sizes


class LocalProducts:
    """Symmetric positive semidefinite local product matrices for one cell."""

    def __init__(self, lo):
        self.lo = lo
        self.ctx = lo.ctx
        self.k = lo.k

    @cached_property
    def potential_ambient(self):
        """Potential operator as ambient vector coefficients, (nloc, 2, nmono)."""
        W = self.ctx.basis("Pvec", self.k + 1).coeffs
        return np.einsum("m...x,mn->n...x", W, self.lo.potential)

    def _potential_edge_values(self, i):
        ectx = self.lo.edge_uses[i][2]
        vals = self.ctx.eval_members(self.potential_ambient, points=ectx.quad.points)
        return vals.transpose(1, 2, 0)  # (nq, 2, nloc)

    @cached_property
    def st_velocity(self):
        """Stabilization sum_E h_E int_E |P_C - w_E|^2 as a quadratic form."""
        n = self.lo.nloc("velocity")
        out = np.zeros((n, n))
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.lo.edge_uses):
            diff = self._potential_edge_values(i) - self.lo._edge_values(
                self.lo.vel_edge_recon[i], ectx)
            out += ectx.length * np.einsum(
                "qcn,q,qcm->nm", diff, ectx.quad.weights, diff)
        return 0.5 * (out + out.T)

    @cached_property
    def sp_velocity(self):
        """int_C P_C v . P_C w plus the edge stabilization."""
        full = self.lo.potential.T @ self.lo.potential + self.st_velocity
        return 0.5 * (full + full.T)

    def _tensor_edge_diff(self, i):
        """Local tensor dofs -> values of (V_C t_E - V_E) at edge quadrature."""
        lo = self.lo
        k = self.k
        ectx = lo.edge_uses[i][2]
        nloc = lo.nloc("tensor")
        nq = len(ectx.quad.weights)
        out = np.zeros((nq, 2, nloc))
        V = self.ctx.basis("RTb", k + 1).coeffs
        Vvals = self.ctx.eval_members(V, points=ectx.quad.points)
        Vt = Vvals @ ectx.tangent  # (dimRTb, nq, 2)
        cellcols = lo.cell_block_cols("tensor")
        out[:, :, cellcols] = Vt.transpose(1, 2, 0)
        _, eb, _ = block_sizes("tensor", k)
        base = i * eb
        psi = ectx.psi_at_quad[:, : k + 2]
        for j in range(k + 2):
            for c in range(2):
                out[:, c, base + 2 * j + c] -= psi[:, j]
        return out

    @cached_property
    def st_tensor(self):
        n = self.lo.nloc("tensor")
        out = np.zeros((n, n))
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.lo.edge_uses):
            diff = self._tensor_edge_diff(i)
            out += ectx.length * np.einsum(
                "qcn,q,qcm->nm", diff, ectx.quad.weights, diff)
        return 0.5 * (out + out.T)

    @cached_property
    def sp_tensor(self):
        n = self.lo.nloc("tensor")
        out = np.array(self.st_tensor)
        cellcols = self.lo.cell_block_cols("tensor")
        out[np.ix_(cellcols, cellcols)] += self.ctx.gram("RTb", self.k + 1)
        return 0.5 * (out + out.T)

    @cached_property
    def gradient_form(self):
        """Velocity form T^t sp_tensor T with T the full local Jacobian map."""
        T = self.lo.tensor_of_velocity
        out = T.T @ self.sp_tensor @ T
        return 0.5 * (out + out.T)

    @cached_property
    def opn_velocity(self):
        """Component norm: cell G-blocks in their Gram metric + h_E edge L2."""
        n = self.lo.nloc("velocity")
        out = np.zeros((n, n))
        cellcols = self.lo.cell_block_cols("velocity")
        ng = dim_poly(self.k) - 1
        if ng:
            out[np.ix_(cellcols[:ng], cellcols[:ng])] = self.ctx.gram("G", self.k - 1)
        ngc = dim_poly(self.k - 1)
        if ngc:
            out[np.ix_(cellcols[ng:], cellcols[ng:])] = self.ctx.gram("Gc", self.k)
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.lo.edge_uses):
            modal = self.lo.vel_edge_recon[i]
            for c in range(2):
                out += ectx.length * modal[c].T @ modal[c]
        return 0.5 * (out + out.T)

    @cached_property
    def opn_tensor(self):
        n = self.lo.nloc("tensor")
        out = np.zeros((n, n))
        cellcols = self.lo.cell_block_cols("tensor")
        out[np.ix_(cellcols, cellcols)] = self.ctx.gram("RTb", self.k + 1)
        _, eb, _ = block_sizes("tensor", self.k)
        for i, (eid, omega, ectx, ia, ib) in enumerate(self.lo.edge_uses):
            base = i * eb
            idx = np.arange(base, base + eb)
            out[idx, idx] += ectx.length
        return out


def build_local_products(local_ops):
    return [LocalProducts(lo) for lo in local_ops]


def assemble_velocity_form(spaces, local_products, which="sp"):
    """Assemble a global sparse quadratic form on velocity dofs.

    ``which``: ``sp`` (full product), ``st`` (stabilization only), ``grad``
    (Jacobian energy form with unit viscosity) or ``opn`` (component norm).
    """
    attr = {"sp": "sp_velocity", "st": "st_velocity",
            "grad": "gradient_form", "opn": "opn_velocity"}[which]
    dm = spaces.dofmap("velocity")
    rows, cols, vals = [], [], []
    for c, lp in enumerate(local_products):
        idx = dm.cell_dofs(spaces.mesh, c)
        m = getattr(lp, attr)
        r, cc = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append(m.ravel())
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(dm.total, dm.total))
    mat.sum_duplicates()
    return mat.tocsr()


def product_tgrad(lo):
    """Local velocity product matrices (full and stabilization-only)."""
    lp = LocalProducts(lo)
    return lp.sp_velocity, lp.st_velocity


def product_l2mat(lo):
    """Local tensor product matrices (full and stabilization-only)."""
    lp = LocalProducts(lo)
    return lp.sp_tensor, lp.st_tensor


def component_norms(spaces, local_products, dv):
    """Global component norm of a velocity or tensor dof vector."""
    if dv.kind == "velocity":
        attr = "opn_velocity"
    elif dv.kind == "tensor":
        attr = "opn_tensor"
    else:
        raise ValueError(f"no component norm for kind {dv.kind!r}")
    dm = spaces.dofmap(dv.kind)
    total = 0.0
    for c, lp in enumerate(local_products):
        loc = dv.data[dm.cell_dofs(spaces.mesh, c)]
        total += float(loc @ getattr(lp, attr) @ loc)
    return np.sqrt(max(total, 0.0))


def h1_norm(spaces, local_products, dv, mu=1.0):
    """Energy norm: (velocity product + mu * Jacobian form)^(1/2)."""
    dm = spaces.dofmap("velocity")
    total = 0.0
    for c, lp in enumerate(local_products):
        loc = dv.data[dm.cell_dofs(spaces.mesh, c)]
        total += float(loc @ lp.sp_velocity @ loc) + mu * float(loc @ lp.gradient_form @ loc)
    return np.sqrt(max(total, 0.0))


def pressure_l2_norm(spaces, dv):
    """L2 norm of a pressure vector (orthonormal cell bases)."""
    return float(np.linalg.norm(dv.data))
