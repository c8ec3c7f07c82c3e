"""Stokes saddle-point solver on the discrete complex.

The discrete problem couples the velocity space with the broken pressure
space through

    a(u, w) = mu * sum_C sp_tensor(TGRAD u, TGRAD w),
    b(v, q) = sum_C int_C D_C v q,

and is solved in the symmetric form [[A, B^t], [B, 0]] acting on
(u, -p), with mean constraints enforced by Lagrange multiplier rows:

* neumann:   two rows forcing the cellwise potential mean of u to vanish,
  pressure unconstrained;
* dirichlet: all boundary velocity traces eliminated symmetrically, one
  row forcing the pressure mean to vanish;
* mixed:     traces eliminated on the Dirichlet edge set only.
"""

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operators import build_local_operators
from .products import (assemble_velocity_form, build_local_products, h1_norm,
                       pressure_l2_norm)
from .spaces import DiscreteSpaces, DofVector

BC_KINDS = ("neumann", "dirichlet", "mixed")


class SolverError(RuntimeError):
    """Factorization failure; usually a boundary-condition misconfiguration."""


@dataclass
class ManufacturedSolution:
    """Closed-form reference fields; f = -mu * lap(u) + grad(p)."""

    name: str
    mu: float
    u: callable
    grad_u: callable
    p: callable
    f: callable
    compatible: dict


@lru_cache(maxsize=None)
def _manufactured_symbolic(name):
    import sympy

    x, y, mu = sympy.symbols("x y mu")
    if name == "superbubble":
        psi = x**3 * (1 - x) ** 3 * y**3 * (1 - y) ** 3
        p = sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y)
        compatible = {"neumann": True, "dirichlet": True, "mixed": True}
    elif name == "bubble-dirichlet":
        psi = x**2 * (1 - x) ** 2 * y**2 * (1 - y) ** 2
        p = sympy.sin(2 * sympy.pi * x) * sympy.sin(2 * sympy.pi * y)
        compatible = {"neumann": False, "dirichlet": True, "mixed": False}
    else:
        raise ValueError(f"unknown manufactured solution {name!r}")
    u1 = sympy.diff(psi, y)
    u2 = -sympy.diff(psi, x)
    lap = lambda g: sympy.diff(g, x, 2) + sympy.diff(g, y, 2)
    f1 = -mu * lap(u1) + sympy.diff(p, x)
    f2 = -mu * lap(u2) + sympy.diff(p, y)
    grads = [sympy.diff(u1, x), sympy.diff(u1, y), sympy.diff(u2, x), sympy.diff(u2, y)]
    lam = lambda e: sympy.lambdify((x, y, mu), e, modules="numpy")
    return {
        "u": (lam(u1), lam(u2)),
        "grad": tuple(lam(g) for g in grads),
        "p": lam(p),
        "f": (lam(f1), lam(f2)),
        "compatible": compatible,
    }


def manufactured(name, mu=1.0):
    """Reference velocity/pressure pair with its closed-form body force."""
    sym = _manufactured_symbolic(name)

    def wrap_vec(f1, f2):
        def call(pts):
            pts = np.asarray(pts, dtype=float)
            out = np.empty((pts.shape[0], 2))
            out[:, 0] = f1(pts[:, 0], pts[:, 1], mu)
            out[:, 1] = f2(pts[:, 0], pts[:, 1], mu)
            return out

        return call

    def wrap_scalar(f):
        def call(pts):
            pts = np.asarray(pts, dtype=float)
            return np.asarray(f(pts[:, 0], pts[:, 1], mu), dtype=float) \
                * np.ones(pts.shape[0])

        return call

    g = sym["grad"]

    def grad_u(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty((pts.shape[0], 2, 2))
        for i in range(4):
            out[:, i // 2, i % 2] = g[i](pts[:, 0], pts[:, 1], mu)
        return out

    return ManufacturedSolution(
        name=name, mu=mu,
        u=wrap_vec(*sym["u"]), grad_u=grad_u,
        p=wrap_scalar(sym["p"]), f=wrap_vec(*sym["f"]),
        compatible=dict(sym["compatible"]),
    )


@dataclass
class StokesProblem:
    mesh: object
    k: int
    mu: float = 1.0
    bc: str = "dirichlet"
    gamma_d: tuple = None          # Dirichlet edge ids (mixed only)
    f: callable = None
    reference: ManufacturedSolution = None

    def __post_init__(self):
        if self.bc not in BC_KINDS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.mu <= 0:
            raise ValueError("viscosity must be positive")
        if self.f is None and self.reference is not None:
            self.f = self.reference.f
        if self.f is None:
            raise ValueError("a body force is required")
        if self.bc == "mixed":
            bnd = set(int(e) for e in np.flatnonzero(self.mesh.boundary_edges))
            gd = set(int(e) for e in (self.gamma_d or ()))
            if not gd or not gd.issubset(bnd) or not (bnd - gd):
                raise ValueError(
                    "mixed boundary conditions need a nonempty strict subset "
                    "of the boundary edges")


@dataclass
class SaddleSystem:
    """Assembled symmetric indefinite system with its bookkeeping."""

    problem: StokesProblem
    spaces: DiscreteSpaces
    local_ops: list
    local_products: list
    matrix: sp.csc_matrix
    rhs: np.ndarray
    free_u: np.ndarray            # kept velocity dofs (global ids)
    n_p: int
    n_lam: int
    B_full: sp.csr_matrix         # divergence on all velocity dofs
    symmetry_defect: float
    assemble_time: float


def _check_reference_bc(problem, spaces):
    """Sampled compatibility of the manufactured solution with the bc."""
    ref = problem.reference
    if ref is None:
        return
    mesh = problem.mesh
    bnd = np.flatnonzero(mesh.boundary_edges)
    gd = set(int(e) for e in (problem.gamma_d or ())) if problem.bc == "mixed" \
        else set(int(e) for e in bnd)
    worst = 0.0
    for e in bnd:
        pts = spaces.edges[e].quad.points
        nrm = spaces.edges[e].normal
        if problem.bc != "neumann" and int(e) in gd:
            worst = max(worst, float(np.abs(ref.u(pts)).max()))
        else:
            gu = ref.grad_u(pts)
            worst = max(worst, float(np.abs(gu @ nrm).max()))
            worst = max(worst, float(np.abs(ref.p(pts)).max()))
    if worst > 1e-10:
        raise ValueError(
            f"manufactured solution {ref.name!r} violates {problem.bc} "
            f"boundary conditions (sampled defect {worst:.3e})")


def assemble(problem, spaces=None, local_ops=None, local_products=None):
    """Build the saddle-point system for a Stokes problem."""
    t0 = time.perf_counter()
    mesh = problem.mesh
    if spaces is None:
        spaces = DiscreteSpaces(mesh, problem.k)
    if local_ops is None:
        local_ops = build_local_operators(spaces)
    if local_products is None:
        local_products = build_local_products(local_ops)
    _check_reference_bc(problem, spaces)

    dm_u = spaces.dofmap("velocity")
    dm_p = spaces.dofmap("pressure")
    mu = problem.mu

    A = mu * assemble_velocity_form(spaces, local_products, "grad")
    rows, cols, vals = [], [], []
    L = np.zeros(dm_u.total)
    mean_u = np.zeros((2, dm_u.total))
    mean_p = np.zeros(dm_p.total)
    for c, lo in enumerate(local_ops):
        idx = dm_u.cell_dofs(mesh, c)
        pidx = dm_p.cell_block(c)
        div = lo.divergence
        r, cc = np.meshgrid(pidx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append(div.ravel())
        ctx = spaces.cells[c]
        fvals = np.asarray(problem.f(ctx.quad.points), dtype=float)
        fm = ctx.moments("Pvec", problem.k + 1, fvals)
        L[idx] += lo.potential.T @ fm
        sqa = np.sqrt(ctx.area)
        mean_u[0, idx] += sqa * lo.potential[0, :]
        mean_u[1, idx] += sqa * lo.potential[1, :]
        mean_p[pidx[0]] = sqa
    B = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dm_p.total, dm_u.total)).tocsr()

    if problem.bc == "neumann":
        eliminated = np.zeros(0, dtype=np.int64)
    elif problem.bc == "dirichlet":
        eliminated = dm_u.boundary_dofs(mesh)
    else:
        eliminated = dm_u.boundary_dofs(mesh, np.asarray(sorted(problem.gamma_d),
                                                         dtype=np.int64))
    keep = np.setdiff1d(np.arange(dm_u.total), eliminated)

    A_ff = A[keep][:, keep]
    B_f = B[:, keep]
    blocks_cu = None
    blocks_cp = None
    if problem.bc == "neumann":
        blocks_cu = sp.csr_matrix(mean_u[:, keep])
        n_lam = 2
    elif problem.bc == "dirichlet":
        blocks_cp = sp.csr_matrix(mean_p[None, :])
        n_lam = 1
    else:
        n_lam = 0

    n_uf = len(keep)
    n_p = dm_p.total
    parts = [[A_ff, B_f.T], [B_f, None]]
    if n_lam:
        cu = blocks_cu if blocks_cu is not None else sp.csr_matrix((n_lam, n_uf))
        cp = blocks_cp if blocks_cp is not None else sp.csr_matrix((n_lam, n_p))
        parts[0].append(cu.T)
        parts[1].append(cp.T)
        parts.append([cu, cp, None])
    M = sp.bmat(parts, format="csc")
    rhs = np.concatenate([L[keep], np.zeros(n_p + n_lam)])
    defect = float(abs(M - M.T).max()) if M.nnz else 0.0
    return SaddleSystem(
        problem=problem, spaces=spaces, local_ops=local_ops,
        local_products=local_products, matrix=M, rhs=rhs, free_u=keep,
        n_p=n_p, n_lam=n_lam, B_full=B, symmetry_defect=defect,
        assemble_time=time.perf_counter() - t0)


def solve(system):
    """Direct sparse solve; returns full velocity/pressure vectors + diagnostics."""
    t0 = time.perf_counter()
    try:
        lu = spla.splu(system.matrix)
        x = lu.solve(system.rhs)
    except Exception as exc:
        raise SolverError(f"saddle-point factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("saddle-point solve produced non-finite values")
    solve_time = time.perf_counter() - t0
    nrm = np.linalg.norm(system.rhs)
    residual = float(np.linalg.norm(system.matrix @ x - system.rhs) / (nrm if nrm else 1.0))

    spaces = system.spaces
    n_uf = len(system.free_u)
    u_full = np.zeros(spaces.dofmap("velocity").total)
    u_full[system.free_u] = x[:n_uf]
    p = -x[n_uf: n_uf + system.n_p]
    lam = x[n_uf + system.n_p:]
    u = DofVector("velocity", spaces.k, u_full)
    p = DofVector("pressure", spaces.k, p)

    div = system.B_full @ u_full
    unorm = h1_norm(spaces, system.local_products, u, system.problem.mu)
    diagnostics = {
        "residual": residual,
        "multipliers": [float(v) for v in lam],
        "div_residual_rel": float(np.linalg.norm(div) / (unorm if unorm else 1.0)),
        "solve_time": solve_time,
        "assemble_time": system.assemble_time,
        "unknowns": int(system.matrix.shape[0]),
    }
    return u, p, diagnostics


@dataclass
class ErrorReport:
    """Errors measured against interpolated reference fields."""

    velocity_error: float
    pressure_error: float
    reference_norm: float
    relative_error: float
    dofs: int
    h: float
    k: int
    bc: str
    residual: float
    timings: dict = field(default_factory=dict)


def pressure_mean(spaces, dv):
    total = 0.0
    area = 0.0
    dm = spaces.dofmap("pressure")
    for c, ctx in enumerate(spaces.cells):
        total += np.sqrt(ctx.area) * dv.data[dm.cell_block(c)[0]]
        area += ctx.area
    return total / area


def error_report(system, u, p, diagnostics=None):
    """Relative error (velocity energy norm + pressure L2) / reference norms.

    For Dirichlet conditions the reference pressure is recentered to zero
    mean, matching the pressure actually determined by the continuous
    problem.
    """
    problem = system.problem
    ref = problem.reference
    if ref is None:
        raise ValueError("error_report needs a problem with a reference solution")
    spaces = system.spaces
    iu = spaces.interpolate_velocity(ref.u)
    ip = spaces.interpolate_pressure(ref.p)
    if problem.bc == "dirichlet":
        mean = pressure_mean(spaces, ip)
        dm = spaces.dofmap("pressure")
        for c, ctx in enumerate(spaces.cells):
            ip.data[dm.cell_block(c)[0]] -= mean * np.sqrt(ctx.area)
    du = DofVector("velocity", spaces.k, u.data - iu.data)
    dp = DofVector("pressure", spaces.k, p.data - ip.data)
    eu = h1_norm(spaces, system.local_products, du, problem.mu)
    ep = pressure_l2_norm(spaces, dp)
    nu = h1_norm(spaces, system.local_products, iu, problem.mu)
    np_ = pressure_l2_norm(spaces, ip)
    dofs = system.matrix.shape[0]
    return ErrorReport(
        velocity_error=eu, pressure_error=ep, reference_norm=nu + np_,
        relative_error=(eu + ep) / (nu + np_),
        dofs=int(dofs), h=spaces.mesh.h, k=spaces.k, bc=problem.bc,
        residual=(diagnostics or {}).get("residual", float("nan")),
        timings={kk: (diagnostics or {}).get(kk) for kk in
                 ("assemble_time", "solve_time")},
    )


def _family_mesh(family, level, amplitude=0.0, seed=0, path=None):
    from . import mesh as meshmod

    if family == "cartesian":
        return meshmod.generate_cartesian(level)
    if family == "hexagonal":
        return meshmod.generate_hexagonal(level)
    if family == "tilted":
        return meshmod.perturb(meshmod.generate_cartesian(level), amplitude, seed)
    if family == "files":
        with open(path, "rb") as fh:
            return meshmod.load_mesh(fh.read())
    raise ValueError(f"unknown mesh family {family!r}")


def run_case(mesh, k, bc, solution="superbubble", mu=1.0, gamma_d=None):
    """Assemble, solve and report one manufactured case."""
    ref = manufactured(solution, mu)
    problem = StokesProblem(mesh=mesh, k=k, mu=mu, bc=bc, gamma_d=gamma_d,
                            reference=ref)
    system = assemble(problem)
    u, p, diag = solve(system)
    report = error_report(system, u, p, diag)
    return report, u, p, diag


def convergence_study(family, k, levels, bc, solution="superbubble", mu=1.0,
                      amplitude=0.0, seed=0, paths=None):
    """Error table over a mesh family; rows carry pairwise slopes.

    Returns a list of dicts with keys h, dofs, err, rate (rate is None on
    the first row).
    """
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least 2 levels")
    rows = []
    for i, lvl in enumerate(levels):
        path = paths[i] if paths else None
        mesh = _family_mesh(family, lvl, amplitude, seed, path)
        report, _, _, diag = run_case(mesh, k, bc, solution, mu)
        rows.append({"h": report.h, "dofs": report.dofs,
                     "err": report.relative_error, "rate": None,
                     "residual": report.residual})
    for i in range(1, len(rows)):
        e0, e1 = rows[i - 1]["err"], rows[i]["err"]
        h0, h1 = rows[i - 1]["h"], rows[i]["h"]
        rows[i]["rate"] = float(np.log(e0 / e1) / np.log(h0 / h1))
    return rows


def rows_to_csv(rows):
    """CSV with the exact header h,dofs,err,rate and 17-digit floats."""
    lines = ["h,dofs,err,rate"]
    for r in rows:
        rate = "" if r["rate"] is None else f"{r['rate']:.17g}"
        lines.append(f"{r['h']:.17g},{r['dofs']},{r['err']:.17g},{rate}")
    return "\n".join(lines) + "\n"
