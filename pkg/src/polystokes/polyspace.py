"""Polynomial machinery on cells and edges.

Scalar polynomials are represented by coefficient rows over scaled
monomials ((x - x_C)/h_C)^a ((y - y_C)/h_C)^b in graded order; vector and
matrix valued polynomials carry one such row per component.  Every cell
gets a quadrature rule, an L2-orthonormal scalar basis (modified
Gram-Schmidt with one re-orthogonalization pass) and the polynomial
subspaces used by the discrete operators:

* ``G(l)``  gradients of degree l+1 polynomials,
* ``Gc(l)`` the Koszul complement (x - x_C)^perp P^(l-1),
* ``R(l)``  vector rotations of degree l+1 polynomials,
* ``Rc(l)`` the Koszul complement (x - x_C) P^(l-1),
* ``Rbc(l)``/``Rb(l)`` trace-free and divergence-lifting matrix spaces,
* ``RTb(l)`` the matrix-valued Raviart-Thomas-like space
  Rbc(l) + Rb(l-1) + R(l-1)^2 hosting the reconstructed Jacobian.

The vector rotation convention is VROT q := (dq/dy, -dq/dx), the unique
sign compatible with the orientation conventions of :mod:`polystokes.mesh`.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .quadrature import cell_rule, edge_rule, validate_cell_rule


def dim_poly(l):
    """Dimension of bivariate polynomials of total degree <= l ({0} for l < 0)."""
    return (l + 1) * (l + 2) // 2 if l >= 0 else 0


def dim_poly_1d(l):
    return l + 1 if l >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(degmax):
    """Graded-order exponent pairs of all monomials of degree <= degmax."""
    ex, ey = [], []
    for d in range(degmax + 1):
        for a in range(d, -1, -1):
            ex.append(a)
            ey.append(d - a)
    return np.array(ex, dtype=np.int64), np.array(ey, dtype=np.int64)


@dataclass(frozen=True)
class Basis:
    """A finite polynomial space on one mesh entity.

    ``coeffs`` holds one member per leading row, expressed in the ambient
    scaled-monomial basis: shapes (dim, nmono), (dim, 2, nmono) and
    (dim, 2, 2, nmono) for scalar, vector and matrix arities.
    """

    tag: str
    degree: int
    domain: int
    coeffs: np.ndarray

    @property
    def dim(self):
        return self.coeffs.shape[0]

    @property
    def arity(self):
        return {2: "scalar", 3: "vector", 4: "matrix"}[self.coeffs.ndim]


def space_dimension(tag, l):
    """Analytic dimension of a tagged cell space of degree parameter l."""
    if tag == "P":
        return dim_poly(l)
    if tag == "P0":
        return max(dim_poly(l) - 1, 0)
    if tag in ("G", "R"):
        return max(dim_poly(l + 1) - 1, 0)
    if tag in ("Gc", "Rc"):
        return dim_poly(l - 1)
    if tag == "Rbc":
        return dim_poly(l - 2)
    if tag == "Rb":
        return max(dim_poly(l) - 1, 0)
    if tag == "RTb":
        return dim_poly(l - 2) + max(dim_poly(l - 1) - 1, 0) + 2 * max(dim_poly(l) - 1, 0)
    if tag == "Pvec":
        return 2 * dim_poly(l)
    if tag == "Pmat":
        return 4 * dim_poly(l)
    raise ValueError(f"unknown space tag {tag!r}")


def _mgs(coeffs, inner, what):
    """Modified Gram-Schmidt with one re-orthogonalization pass."""
    out = np.array(coeffs, dtype=float)
    n = out.shape[0]
    for i in range(n):
        scale = inner(out[i], out[i])
        v = out[i]
        for _ in range(2):
            for j in range(i):
                v = v - inner(v, out[j]) * out[j]
        nrm2 = inner(v, v)
        if not nrm2 > 1e-24 * max(scale, 1e-300):
            raise ValueError(f"Gram-Schmidt breakdown while orthonormalizing {what}")
        out[i] = v / np.sqrt(nrm2)
    return out


class CellContext:
    """Per-cell cache: quadrature, bases, subspace embeddings and projectors.

    Pure function of (mesh, cell, k); immutable in use, safe to build and
    read concurrently.
    """

    def __init__(self, mesh, cell, k, validate=False):
        if k < 0:
            raise ValueError("polynomial degree must be >= 0")
        self.mesh = mesh
        self.cell = cell
        self.k = k
        self.center = np.array(mesh.cell_centers[cell])
        self.h = float(mesh.cell_diameters[cell])
        self.area = float(mesh.cell_areas[cell])
        self.verts = mesh.cell_vertices(cell)
        self.degmax = k + 2
        self.quad_degree = 2 * k + 8
        self.quad = cell_rule(self.verts, self.center, self.quad_degree)
        if validate:
            validate_cell_rule(self.quad, self.verts, self.center, self.h)

        self.ex, self.ey = monomial_exponents(self.degmax)
        self.nmono = self.ex.shape[0]
        xs = (self.quad.points[:, 0] - self.center[0]) / self.h
        ys = (self.quad.points[:, 1] - self.center[1]) / self.h
        self.mono_at_quad = kernels.monomial_values(xs, ys, self.ex, self.ey)
        self.mono_grad_at_quad = kernels.monomial_derivatives(xs, ys, self.ex, self.ey) / self.h
        self.mono_gram = self.mono_at_quad.T @ (self.quad.weights[:, None] * self.mono_at_quad)
        self.mono_int = self.quad.weights @ self.mono_at_quad

        self._index = {(a, b): m for m, (a, b) in enumerate(zip(self.ex, self.ey))}
        self._dx = np.zeros((self.nmono, self.nmono))
        self._dy = np.zeros((self.nmono, self.nmono))
        self._mx = np.zeros((self.nmono, self.nmono))
        self._my = np.zeros((self.nmono, self.nmono))
        for m, (a, b) in enumerate(zip(self.ex, self.ey)):
            if a > 0:
                self._dx[self._index[(a - 1, b)], m] = a / self.h
            if b > 0:
                self._dy[self._index[(a, b - 1)], m] = b / self.h
            if a + b < self.degmax:
                self._mx[self._index[(a + 1, b)], m] = self.h
                self._my[self._index[(a, b + 1)], m] = self.h

        try:
            self.onb = _mgs(np.eye(self.nmono), self._scalar_inner, f"cell {cell}")
        except ValueError as exc:
            raise ValueError(f"degenerate cell {cell}: {exc}") from exc
        self._bases = {}
        self._grams = {}
        self._chols = {}

    # ------------------------------------------------------------------
    # inner products of coefficient arrays
    def _scalar_inner(self, u, v):
        return float(u @ self.mono_gram @ v)

    def inner(self, U, V):
        """Gram matrix between two coefficient arrays of equal arity."""
        if U.shape[0] == 0 or V.shape[0] == 0:
            return np.zeros((U.shape[0], V.shape[0]))
        if U.ndim == 2:
            return U @ self.mono_gram @ V.T
        flat_u = U.reshape(U.shape[0], -1, self.nmono)
        flat_v = V.reshape(V.shape[0], -1, self.nmono)
        return np.einsum("icm,mn,jcn->ij", flat_u, self.mono_gram, flat_v)

    def integrals(self, U):
        """Integral over the cell of every member, componentwise."""
        return U @ self.mono_int

    # ------------------------------------------------------------------
    # derivative/multiplication actions on coefficient arrays (exact)
    def dx(self, U):
        return U @ self._dx.T

    def dy(self, U):
        return U @ self._dy.T

    def mul_x(self, U):
        """Multiplication by (x - x_C); degree must stay within the context."""
        return U @ self._mx.T

    def mul_y(self, U):
        return U @ self._my.T

    def grad(self, S):
        """Row-wise gradient of scalar members: (dim, nmono) -> (dim, 2, nmono)."""
        return np.stack([self.dx(S), self.dy(S)], axis=1)

    def vrot(self, S):
        """VROT q = (dq/dy, -dq/dx)."""
        return np.stack([self.dy(S), -self.dx(S)], axis=1)

    def rot(self, V):
        """Scalar rotation of vector members: d1 v2 - d2 v1."""
        return self.dx(V[:, 1, :]) - self.dy(V[:, 0, :])

    def tdiv(self, W):
        """Row-wise divergence of matrix members: (dim, 2, 2, nmono) -> (dim, 2, nmono)."""
        return np.stack([self.dx(W[:, i, 0, :]) + self.dy(W[:, i, 1, :]) for i in range(2)],
                        axis=1)

    def trace(self, W):
        return W[:, 0, 0, :] + W[:, 1, 1, :]

    def div_inverse_coeffs(self, S):
        """Inverse of DIV from the Koszul complement, by homogeneous scaling.

        For p homogeneous of degree d, DIV((x - x_C) p) = (2 + d) p, so the
        inverse is exact monomial-by-monomial.
        """
        deg = (self.ex + self.ey).astype(float)
        scaled = S / (2.0 + deg)[None, :]
        return np.stack([self.mul_x(scaled), self.mul_y(scaled)], axis=1)

    def inv_div_grad_coeffs(self, S):
        """Matrix lift with rows DIV^{-1}(d_i q): (dim, nmono) -> (dim, 2, 2, nmono)."""
        return np.stack([self.div_inverse_coeffs(self.dx(S)),
                         self.div_inverse_coeffs(self.dy(S))], axis=1)

    # ------------------------------------------------------------------
    # tagged bases
    def basis(self, tag, l):
        key = (tag, l)
        if key not in self._bases:
            self._bases[key] = Basis(tag, l, self.cell, self._build_basis(tag, l))
        return self._bases[key]

    def _scalar_prefix(self, l):
        return self.onb[: dim_poly(l)]

    def _build_basis(self, tag, l):
        if l > self.degmax and tag in ("P", "P0", "Pvec", "Pmat"):
            raise ValueError(f"degree {l} exceeds the context degree {self.degmax}")
        if tag == "P":
            return self._scalar_prefix(l)
        if tag == "P0":
            return self.onb[1: dim_poly(l)]
        if tag == "Pvec":
            S = self._scalar_prefix(l)
            out = np.zeros((2 * S.shape[0], 2, self.nmono))
            out[0::2, 0, :] = S
            out[1::2, 1, :] = S
            return out
        if tag == "Pmat":
            S = self._scalar_prefix(l)
            out = np.zeros((4 * S.shape[0], 2, 2, self.nmono))
            for c in range(4):
                out[c::4, c // 2, c % 2, :] = S
            return out
        if tag == "G":
            return self.grad(self.onb[1: dim_poly(l + 1)])
        if tag == "R":
            return self.vrot(self.onb[1: dim_poly(l + 1)])
        if tag == "Gc":
            S = self._scalar_prefix(l - 1)
            return np.stack([-self.mul_y(S), self.mul_x(S)], axis=1)
        if tag == "Rc":
            S = self._scalar_prefix(l - 1)
            return np.stack([self.mul_x(S), self.mul_y(S)], axis=1)
        if tag == "Rbc":
            S = self._scalar_prefix(l - 2)
            xx = self.mul_x(self.mul_x(S))
            yy = self.mul_y(self.mul_y(S))
            xy = self.mul_x(self.mul_y(S))
            out = np.empty((S.shape[0], 2, 2, self.nmono))
            out[:, 0, 0, :] = -xy
            out[:, 0, 1, :] = -yy
            out[:, 1, 0, :] = xx
            out[:, 1, 1, :] = xy
            return out
        if tag == "Rb":
            return self.inv_div_grad_coeffs(self.onb[1: dim_poly(l)])
        if tag == "RTb":
            if l < 1:
                raise ValueError("RTb needs degree >= 1")
            blocks = [self._build_basis("Rbc", l), self._build_basis("Rb", l - 1)]
            R = self._build_basis("R", l - 1)
            for row in range(2):
                blk = np.zeros((R.shape[0], 2, 2, self.nmono))
                blk[:, row, :, :] = R
                blocks.append(blk)
            return np.concatenate([b for b in blocks], axis=0)
        raise ValueError(f"unknown space tag {tag!r}")

    def rtb_slices(self, l):
        """Index ranges of the Rbc / Rb / R-rows blocks inside the RTb basis."""
        n1 = dim_poly(l - 2)
        n2 = max(dim_poly(l - 1) - 1, 0)
        n3 = max(dim_poly(l) - 1, 0)
        return (slice(0, n1), slice(n1, n1 + n2),
                slice(n1 + n2, n1 + n2 + n3), slice(n1 + n2 + n3, n1 + n2 + 2 * n3))

    # ------------------------------------------------------------------
    # Gram matrices and projections
    def gram(self, tag, l):
        key = (tag, l)
        if key not in self._grams:
            A = self.basis(tag, l).coeffs
            self._grams[key] = self.inner(A, A)
        return self._grams[key]

    def _chol(self, tag, l):
        key = (tag, l)
        if key not in self._chols:
            G = self.gram(tag, l)
            if G.shape[0] == 0:
                self._chols[key] = None
            else:
                try:
                    self._chols[key] = np.linalg.cholesky(G)
                except np.linalg.LinAlgError as exc:
                    raise ValueError(
                        f"cell {self.cell}: singular Gram matrix for {tag}({l})") from exc
        return self._chols[key]

    def solve_gram(self, tag, l, rhs):
        """Solve Gram(tag, l) @ x = rhs (rhs indexed by basis member on axis 0)."""
        L = self._chol(tag, l)
        if L is None:
            return np.zeros_like(rhs)
        y = np.linalg.solve(L, rhs)
        return np.linalg.solve(L.T, y)

    def eval_members(self, coeffs, points=None):
        """Values of members at quadrature points (default) or given points."""
        if points is None:
            mono = self.mono_at_quad
        else:
            xs = (points[:, 0] - self.center[0]) / self.h
            ys = (points[:, 1] - self.center[1]) / self.h
            mono = kernels.monomial_values(xs, ys, self.ex, self.ey)
        return np.einsum("i...m,qm->qi...", coeffs, mono).swapaxes(0, 1)

    def moments(self, tag, l, values):
        """Integrals of a sampled field against every member of a tagged basis.

        ``values`` has shape (nq,), (nq, 2) or (nq, 2, 2) matching the arity.
        """
        A = self.basis(tag, l).coeffs
        if A.shape[0] == 0:
            return np.zeros(0)
        vals = self.eval_members(A)
        flat_a = vals.reshape(A.shape[0], len(self.quad.weights), -1)
        flat_v = np.asarray(values).reshape(len(self.quad.weights), -1)
        return np.einsum("iqc,qc,q->i", flat_a, flat_v, self.quad.weights)

    def project(self, tag, l, values):
        """L2-orthogonal projection of a sampled field onto a tagged subspace."""
        return self.solve_gram(tag, l, self.moments(tag, l, values))


class EdgeContext:
    """Per-edge cache: quadrature, orthonormal 1d basis, value/derivative maps."""

    def __init__(self, mesh, edge, k):
        self.mesh = mesh
        self.edge = edge
        self.k = k
        a, b = mesh.edges[edge]
        self.pa = np.array(mesh.vertices[a])
        self.pb = np.array(mesh.vertices[b])
        self.length = float(mesh.edge_lengths[edge])
        self.tangent = np.array(mesh.tangents[edge])
        self.normal = np.array(mesh.normals[edge])
        self.mid = (self.pa + self.pb) / 2.0
        self.degmax = k + 2
        self.nmodes = self.degmax + 1
        self.quad = edge_rule(self.pa, self.pb, 2 * k + 8)
        s = ((self.quad.points - self.mid[None, :]) @ self.tangent) / self.length
        self.s_at_quad = s
        pows = kernels.powers_1d(s, self.degmax)
        gram = pows.T @ (self.quad.weights[:, None] * pows)

        def inner(u, v):
            return float(u @ gram @ v)

        self.onb = _mgs(np.eye(self.nmodes), inner, f"edge {edge}")
        self.mono_gram = gram
        self.psi_at_quad = pows @ self.onb.T
        pow_a = kernels.powers_1d(np.array([-0.5]), self.degmax)[0]
        pow_b = kernels.powers_1d(np.array([0.5]), self.degmax)[0]
        self.psi_at_a = self.onb @ pow_a
        self.psi_at_b = self.onb @ pow_b

        dmono = np.zeros((self.nmodes, self.nmodes))
        for d in range(1, self.nmodes):
            dmono[d - 1, d] = d / self.length
        # exact modal derivative: differentiate in monomial form, re-expand
        self.deriv = self.onb @ gram @ (self.onb @ dmono.T).T

    def pc_transform(self, deg):
        """Map [value(a), value(b), moments 0..deg-2] -> modal coeffs in P^deg.

        This realizes the characterization of continuous piecewise
        polynomials by endpoint values plus interior moments; the matrix is
        square and invertible (unisolvence).
        """
        n = deg + 1
        B = np.zeros((n, n))
        B[0, :] = self.psi_at_a[:n]
        B[1, :] = self.psi_at_b[:n]
        B[2:, :n] = np.eye(n)[: n - 2, :]
        return np.linalg.solve(B, np.eye(n))

    def eval_modal(self, coeffs, nmodes=None):
        """Values at quadrature points of modal coefficient rows."""
        m = coeffs.shape[-1] if nmodes is None else nmodes
        return coeffs @ self.psi_at_quad[:, :m].T


# ----------------------------------------------------------------------
# module-level operations mirroring the public contract

def monomial_basis(ctx, k):
    """Orthonormalized polynomial basis of degree k on a cell or edge context."""
    if isinstance(ctx, CellContext):
        return ctx.basis("P", k)
    return Basis("P", k, ctx.edge, ctx.onb[: k + 1])


def koszul_basis(ctx, tag, l):
    if tag not in ("G", "Gc", "R", "Rc"):
        raise ValueError("koszul_basis expects one of G, Gc, R, Rc")
    return ctx.basis(tag, l)


def rbc_basis(ctx, l):
    return ctx.basis("Rbc", l)


def rb_basis(ctx, l):
    return ctx.basis("Rb", l)


def rtb_basis(ctx, l):
    return ctx.basis("RTb", l)


def div_inverse(ctx, coeffs):
    """Vector field in Rc with DIV(div_inverse(p)) = p, exactly."""
    one = np.asarray(coeffs, dtype=float).reshape(1, -1)
    padded = np.zeros((1, ctx.nmono))
    padded[0, : one.shape[1]] = one
    return ctx.div_inverse_coeffs(padded)[0]


def inv_div_grad(ctx, coeffs):
    """Matrix field with row-wise divergence equal to GRAD q; q must have zero mean."""
    one = np.zeros((1, ctx.nmono))
    arr = np.asarray(coeffs, dtype=float).ravel()
    one[0, : arr.shape[0]] = arr
    mean = float((one @ ctx.mono_int)[0])
    if abs(mean) > 1e-12 * max(ctx.area, 1.0):
        raise ValueError("inv_div_grad requires a zero-mean input")
    return ctx.inv_div_grad_coeffs(one)[0]


def subspace_project(ctx, tag, l, field):
    """Project a quadrature-evaluable field onto a tagged cell subspace."""
    values = field(ctx.quad.points)
    return ctx.project(tag, l, values)
