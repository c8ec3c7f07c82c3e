"""Verification suite: algebraic properties of the assembled complex.

Each check returns a dict with ``name``, ``passed``, ``value`` (the measured
defect or quantity), ``threshold`` and a human-readable ``detail``.  The
``verify`` CLI subcommand and the acceptance tests both run these.
"""

import numpy as np
import scipy.linalg

from .operators import build_local_operators, global_operator
from .polyspace import dim_poly, space_dimension
from .products import build_local_products
from .spaces import block_sizes


def _result(name, passed, value, threshold, detail=""):
    return {"name": name, "passed": bool(passed), "value": float(value),
            "threshold": threshold, "detail": detail}


def check_complex(spaces, local_ops=None, flip_vrot=False, tol=1e-10):
    """Composite divergence-after-rotation must vanish identically."""
    if local_ops is None:
        local_ops = build_local_operators(spaces, flip_vrot=flip_vrot)
    rot = global_operator(spaces, "rot", local_ops=local_ops)
    div = global_operator(spaces, "div", local_ops=local_ops)
    comp = div @ rot
    defect = float(abs(comp).max()) if comp.nnz else 0.0
    return _result("complex_div_rot", defect <= tol, defect, tol,
                   "max entry of the assembled divergence-of-rotation")


def check_kernel_exactness(spaces, local_ops=None, tol_factor=1e-8):
    """Kernel and rank structure on a contractible domain, by dense SVD.

    dim ker(rot) = 1, rank(div) = dim pressure, rank(rot) = dim ker(div).
    """
    rot = global_operator(spaces, "rot", local_ops=local_ops).toarray()
    div = global_operator(spaces, "div", local_ops=local_ops).toarray()

    def rank_and_kernel(mat):
        s = scipy.linalg.svdvals(mat)
        if len(s) == 0:
            return 0, mat.shape[1]
        r = int(np.sum(s > tol_factor * s[0]))
        return r, mat.shape[1] - r

    r_rot, ker_rot = rank_and_kernel(rot)
    r_div, ker_div = rank_and_kernel(div)
    n_p = spaces.dofmap("pressure").total
    ok = (ker_rot == 1) and (r_div == n_p) and (r_rot == ker_div)
    return _result(
        "kernel_exactness", ok, ker_rot, 1,
        f"dim ker rot={ker_rot} (want 1), rank div={r_div} (want {n_p}), "
        f"rank rot={r_rot} (want dim ker div={ker_div})")


def _trig_fields():
    v = lambda pts: np.sin(pts[:, 0]) * np.cos(pts[:, 1])
    grad_v = lambda pts: np.stack(
        [np.cos(pts[:, 0]) * np.cos(pts[:, 1]),
         -np.sin(pts[:, 0]) * np.sin(pts[:, 1])], axis=-1)
    vrot_v = lambda pts: np.stack(
        [-np.sin(pts[:, 0]) * np.sin(pts[:, 1]),
         -np.cos(pts[:, 0]) * np.cos(pts[:, 1])], axis=-1)
    w = lambda pts: np.stack([np.sin(pts[:, 0]), np.cos(pts[:, 1])], axis=-1)

    def tgrad_w(pts):
        out = np.zeros((pts.shape[0], 2, 2))
        out[:, 0, 0] = np.cos(pts[:, 0])
        out[:, 1, 1] = -np.sin(pts[:, 1])
        return out

    div_w = lambda pts: np.cos(pts[:, 0]) - np.sin(pts[:, 1])
    return v, grad_v, vrot_v, w, tgrad_w, div_w


def check_commutation(spaces, local_ops=None, tol=1e-10):
    """The two commutation squares plus divergence-of-interpolant, per dof."""
    v, grad_v, vrot_v, w, tgrad_w, div_w = _trig_fields()
    rot = global_operator(spaces, "rot", local_ops=local_ops)
    tg = global_operator(spaces, "tgrad", local_ops=local_ops)
    div = global_operator(spaces, "div", local_ops=local_ops)
    d1 = rot @ spaces.interpolate_stream(v, grad_v).data \
        - spaces.interpolate_velocity(vrot_v).data
    iw = spaces.interpolate_velocity(w).data
    d2 = tg @ iw - spaces.interpolate_tensor(tgrad_w).data
    d3 = div @ iw - spaces.interpolate_pressure(div_w).data
    worst = max(float(np.abs(d).max()) for d in (d1, d2, d3))
    return _result("commutation", worst <= tol, worst, tol,
                   f"rot={np.abs(d1).max():.2e} tgrad={np.abs(d2).max():.2e} "
                   f"div={np.abs(d3).max():.2e}")


def local_interpolate_velocity(spaces, cell, fn):
    """Local velocity dofs (canonical cell order) of a vector field."""
    k = spaces.k
    mesh = spaces.mesh
    ctx = spaces.cells[cell]
    loop = mesh.cells[cell]
    parts = [np.asarray(fn(mesh.vertices[list(loop)]), dtype=float).reshape(-1)]
    for eid, _ in mesh.cell_edges[cell]:
        ectx = spaces.edges[eid]
        vals = np.asarray(fn(ectx.quad.points), dtype=float)
        mom = ectx.psi_at_quad[:, : k + 1].T @ (ectx.quad.weights[:, None] * vals)
        parts.append(mom.reshape(-1))
    vals = np.asarray(fn(ctx.quad.points), dtype=float)
    parts.append(np.concatenate([ctx.project("G", k - 1, vals),
                                 ctx.project("Gc", k, vals)]))
    return np.concatenate(parts)


def check_polynomial_reproduction(spaces, local_ops=None, n_samples=20, seed=7,
                                  tol=1e-10):
    """Potential and Jacobian reproduce interpolated degree-(k+1) fields."""
    k = spaces.k
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c, lo in enumerate(local_ops):
        ctx = spaces.cells[c]
        W = ctx.basis("Pvec", k + 1).coeffs
        for _ in range(n_samples):
            coef = rng.standard_normal(W.shape[0])
            amb = np.einsum("m...x,m->...x", W, coef)

            def poly(pts, amb=amb, ctx=ctx):
                return ctx.eval_members(amb[None, ...], points=np.asarray(pts))[0]

            dofs = local_interpolate_velocity(spaces, c, poly)
            pot = lo.potential @ dofs
            worst = max(worst, float(np.abs(pot - coef).max()))
            tg_c = lo.tgrad @ dofs
            tg_vals = ctx.eval_members(
                np.einsum("m...x,m->...x", ctx.basis("RTb", k + 1).coeffs,
                          tg_c)[None, ...])[0]
            grads = np.stack([np.stack([ctx.dx(amb[i: i + 1, :])[0],
                                        ctx.dy(amb[i: i + 1, :])[0]])
                              for i in range(2)])
            exact_vals = ctx.eval_members(grads[None, ...])[0]
            worst = max(worst, float(np.abs(tg_vals - exact_vals).max()))
    return _result("polynomial_reproduction", worst <= tol, worst, tol,
                   f"{n_samples} random degree-(k+1) fields per cell")


def check_potential_validity(spaces, local_ops=None, seed=11, tol=1e-10):
    """The potential's defining relation extends to Raviart-Thomas test rows.

    Beyond the Koszul-complement rows of degree k+2 that define it, the
    relation holds for single-row tests with rows in R(k) + Rc(k+1), the
    set the consistency analysis relies on.  It provably does NOT extend to
    all degree-(k+1) rows, so that stronger claim is not asserted.
    """
    k = spaces.k
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c, lo in enumerate(local_ops):
        ctx = spaces.cells[c]
        dofs = rng.standard_normal(lo.nloc("velocity"))
        V = ctx.basis("RTb", k + 1).coeffs
        tg_amb = np.einsum("m...x,m->...x", V, lo.tgrad @ dofs)[None, ...]
        W = ctx.basis("Pvec", k + 1).coeffs
        pot_amb = np.einsum("m...x,m->...x", W, lo.potential @ dofs)[None, ...]
        for tag, l in (("R", k), ("Rc", k + 1)):
            B = ctx.basis(tag, l).coeffs
            for r in range(B.shape[0]):
                for row in range(2):
                    Vt = np.zeros((1, 2, 2, ctx.nmono))
                    Vt[0, row] = B[r]
                    lhs = float(ctx.inner(pot_amb, ctx.tdiv(Vt))[0, 0])
                    rhs = -float(ctx.inner(tg_amb, Vt)[0, 0])
                    for i, (eid, om, ectx, ia, ib) in enumerate(lo.edge_uses):
                        rv = ctx.eval_members(B[r: r + 1], points=ectx.quad.points)[0]
                        rn = rv @ ectx.normal
                        wv = lo._edge_values(lo.vel_edge_recon[i], ectx) @ dofs
                        rhs += om * float(np.sum(ectx.quad.weights * rn * wv[:, row]))
                    worst = max(worst, abs(lhs - rhs))
    return _result("potential_validity", worst <= tol, worst, tol,
                   "defining relation on Raviart-Thomas test rows")


def check_potential_projections(spaces, local_ops=None, seed=5, tol=1e-10):
    """Projecting the potential on the cell component spaces returns the dofs."""
    k = spaces.k
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c, lo in enumerate(local_ops):
        ctx = spaces.cells[c]
        dofs = rng.standard_normal(lo.nloc("velocity"))
        W = ctx.basis("Pvec", k + 1).coeffs
        pot_amb = np.einsum("m...x,m->...x", W, lo.potential @ dofs)[None, ...]
        ng = dim_poly(k) - 1
        g = ctx.solve_gram("G", k - 1, ctx.inner(ctx.basis("G", k - 1).coeffs,
                                                 pot_amb))[:, 0] if ng else np.zeros(0)
        gc = ctx.solve_gram("Gc", k, ctx.inner(ctx.basis("Gc", k).coeffs,
                                               pot_amb))[:, 0]
        got = np.concatenate([g, gc])
        if len(got):
            worst = max(worst, float(np.abs(
                got - dofs[lo.cell_block_cols("velocity")]).max()))
    return _result("potential_projections", worst <= tol, worst, tol,
                   "gradient-space projections of the potential recover the dofs")


def check_divergence_ibp(spaces, local_ops=None, tol=1e-12):
    """Trace definition of the divergence agrees with its IBP formula.

    The defect is measured relative to the operator scale (entries grow
    like 1/h).
    """
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    worst = 0.0
    for lo in local_ops:
        scale = max(float(np.abs(lo.divergence).max()), 1.0)
        worst = max(worst, float(np.abs(lo.divergence - lo.divergence_ibp).max())
                    / scale)
    return _result("divergence_ibp", worst <= tol, worst, tol,
                   "divergence as Jacobian trace vs integration by parts, "
                   "relative to the operator scale")


def check_product_properties(spaces, local_products=None, local_ops=None,
                             tol=1e-10):
    """Symmetry and positive semidefiniteness of the local products."""
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    if local_products is None:
        local_products = build_local_products(local_ops)
    worst_sym = 0.0
    worst_eig = 0.0
    min_sp_vel = np.inf
    for lp in local_products:
        for m in (lp.sp_velocity, lp.sp_tensor, lp.st_velocity, lp.st_tensor):
            scale = max(float(np.abs(m).max()), 1e-300)
            worst_sym = max(worst_sym, float(np.abs(m - m.T).max()) / scale)
            ev = np.linalg.eigvalsh(m)
            worst_eig = max(worst_eig, float(-ev[0]) / max(ev[-1], 1e-300))
        min_sp_vel = min(min_sp_vel, float(np.linalg.eigvalsh(lp.sp_velocity)[0]))
    ok = worst_sym <= 1e-12 and worst_eig <= tol and min_sp_vel > 0
    return _result("product_properties", ok, max(worst_sym, worst_eig), tol,
                   f"min sp_velocity eigenvalue {min_sp_vel:.3e}")


def check_stabilization_vanishes(spaces, local_ops=None, local_products=None,
                                 seed=3, tol=1e-11):
    """Velocity stabilization annihilates interpolants of degree-(k+1) fields."""
    k = spaces.k
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    if local_products is None:
        local_products = build_local_products(local_ops)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c, lp in enumerate(local_products):
        ctx = spaces.cells[c]
        W = ctx.basis("Pvec", k + 1).coeffs
        coef = rng.standard_normal(W.shape[0])
        amb = np.einsum("m...x,m->...x", W, coef)

        def poly(pts, amb=amb, ctx=ctx):
            return ctx.eval_members(amb[None, ...], points=np.asarray(pts))[0]

        dofs = local_interpolate_velocity(spaces, c, poly)
        row = lp.st_velocity @ dofs
        scale = max(float(np.abs(lp.st_velocity).max()), 1.0)
        worst = max(worst, float(np.abs(row).max()) / scale)
    return _result("stabilization_vanishes", worst <= tol, worst, tol,
                   "st(I z, .) rows for polynomial interpolants")


def check_koszul_structure(spaces, tol=1e-8):
    """Dimensions, direct sums and divergence isomorphisms of the bases."""
    ok = True
    detail = []
    for ctx in spaces.cells[: min(len(spaces.cells), 4)]:
        k = spaces.k
        for tag in ("P", "G", "Gc", "R", "Rc", "Rbc", "Rb"):
            for l in range(0, k + 2):
                want = space_dimension(tag, l)
                got = ctx.basis(tag, l).dim
                if want != got:
                    ok = False
                    detail.append(f"dim {tag}({l}) = {got} != {want}")
        want = space_dimension("RTb", k + 1)
        if ctx.basis("RTb", k + 1).dim != want:
            ok = False
            detail.append("RTb dimension mismatch")
        # decompositions by rank of stacked coefficients
        for pair, full in ((("G", "Gc"), "Pvec"), (("R", "Rc"), "Pvec")):
            A = np.concatenate([ctx.basis(pair[0], k).coeffs,
                                ctx.basis(pair[1], k).coeffs], axis=0)
            r = np.linalg.matrix_rank(A.reshape(A.shape[0], -1), tol=tol)
            if r != space_dimension(full, k):
                ok = False
                detail.append(f"{pair} does not span degree {k} vectors")
        # matrix decomposition (Rc)^2 = Rbc + Rb
        k1 = k + 1
        A = np.concatenate([ctx.basis("Rbc", k1).coeffs, ctx.basis("Rb", k1).coeffs],
                           axis=0)
        r = np.linalg.matrix_rank(A.reshape(A.shape[0], -1), tol=tol)
        if r != 2 * dim_poly(k1 - 1) or r != A.shape[0]:
            ok = False
            detail.append("matrix Koszul complement decomposition failed")
        # TDIV : Rbc(k+1) -> Gc(k) is an isomorphism
        rbc = ctx.basis("Rbc", k + 1).coeffs
        if rbc.shape[0]:
            div = ctx.tdiv(rbc)
            M = ctx.solve_gram("Gc", k, ctx.inner(ctx.basis("Gc", k).coeffs, div))
            cond = np.linalg.cond(M)
            resid = div - np.einsum("m...x,mn->n...x",
                                    ctx.basis("Gc", k).coeffs, M).reshape(div.shape)
            if cond > 1e8 or np.abs(resid).max() > tol:
                ok = False
                detail.append("TDIV is not an isomorphism onto the Koszul complement")
    return _result("koszul_structure", ok, 0.0 if ok else 1.0, 0.5,
                   "; ".join(detail) if detail else "dimensions and ranks agree")


def check_inverse_inequality(spaces, local_ops=None, local_products=None):
    """max over cells of h_C * |TGRAD|_op measured in the component norm."""
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    if local_products is None:
        local_products = build_local_products(local_ops)
    worst = 0.0
    for c, (lo, lp) in enumerate(zip(local_ops, local_products)):
        ctx = spaces.cells[c]
        G = ctx.gram("RTb", spaces.k + 1)
        quad = lo.tgrad.T @ G @ lo.tgrad
        lam = scipy.linalg.eigh(0.5 * (quad + quad.T), lp.opn_velocity,
                                eigvals_only=True)
        worst = max(worst, ctx.h * float(np.sqrt(max(lam[-1], 0.0))))
    return worst


def poincare_constant(spaces, local_ops=None, local_products=None):
    """min Rayleigh quotient of the Jacobian form over mean-free potentials."""
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    if local_products is None:
        local_products = build_local_products(local_ops)
    from .products import assemble_velocity_form

    A = assemble_velocity_form(spaces, local_products, "grad").toarray()
    N = assemble_velocity_form(spaces, local_products, "opn").toarray()
    dm = spaces.dofmap("velocity")
    C = np.zeros((2, dm.total))
    for c, lo in enumerate(local_ops):
        idx = dm.cell_dofs(spaces.mesh, c)
        sqa = np.sqrt(spaces.cells[c].area)
        C[0, idx] += sqa * lo.potential[0, :]
        C[1, idx] += sqa * lo.potential[1, :]
    _, _, vt = np.linalg.svd(C)
    Z = vt[2:].T
    lam = scipy.linalg.eigh(Z.T @ A @ Z, Z.T @ N @ Z, eigvals_only=True)
    return float(lam[0])


def norm_equivalence_range(spaces, local_ops=None, local_products=None):
    """(min, max) generalized eigenvalues of sp_velocity against the component norm."""
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    if local_products is None:
        local_products = build_local_products(local_ops)
    lo_ = np.inf
    hi = 0.0
    for c, lp in enumerate(local_products):
        lam = scipy.linalg.eigh(lp.sp_velocity, lp.opn_velocity, eigvals_only=True)
        lo_ = min(lo_, float(lam[0]))
        hi = max(hi, float(lam[-1]))
    return lo_, hi


def run_verify_suite(spaces, include_exactness=True, flip_vrot=False):
    """The property checks behind the ``verify`` subcommand."""
    local_ops = build_local_operators(spaces, flip_vrot=flip_vrot)
    local_products = build_local_products(local_ops)
    results = [
        check_complex(spaces, local_ops, flip_vrot=flip_vrot),
        check_commutation(spaces, local_ops),
        check_polynomial_reproduction(spaces, local_ops, n_samples=5),
        check_potential_validity(spaces, local_ops),
        check_potential_projections(spaces, local_ops),
        check_divergence_ibp(spaces, local_ops),
        check_product_properties(spaces, local_products, local_ops),
        check_stabilization_vanishes(spaces, local_ops, local_products),
        check_koszul_structure(spaces),
    ]
    n_dofs = spaces.dofmap("velocity").total
    if include_exactness and n_dofs <= 2000:
        results.append(check_kernel_exactness(spaces, local_ops))
    return results
