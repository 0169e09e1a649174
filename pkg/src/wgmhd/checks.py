"""Self-contained invariant and property checks behind ``wgmhd check``.

Each check returns a :class:`CheckResult`; :func:`run_checks` runs a
selection.  The checks use small meshes so the whole suite finishes in a
few seconds.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .forms import FormContext, PhysicalParams, form_a, form_atilde, form_c, norm_V, norm_W
from .mesh import build_structured_mesh
from .polybasis import dim_poly, factorial_moment, monomial_exponents, triangle_quadrature
from .system import assemble_oseen, condense, solve_linear
from .weakops import (
    Discretization,
    WGScalarField,
    WGVectorField,
    project_edges,
    project_interior,
    rt_project,
    weak_gradient_of_values,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "tolerance": float(self.tolerance), "detail": self.detail,
                "seconds": round(self.seconds, 3)}


# ---------------------------------------------------------------------------
# random fields and smooth test data


def random_scalar_field(mesh, interior_degree, trace_degree, rng, zero_boundary=False):
    interior = rng.standard_normal((mesh.n_elements, dim_poly(interior_degree)))
    traces = rng.standard_normal((mesh.n_edges, trace_degree + 1))
    if zero_boundary:
        traces[mesh.boundary] = 0.0
    return WGScalarField(mesh, interior, traces, interior_degree, trace_degree)


def random_vector_field(mesh, k, rng, boundary=None):
    """Random degree-k WG vector field.

    ``boundary`` is ``None`` (free), ``"zero"`` (u_b = 0 on the boundary) or
    ``"tangential"`` (only the normal component kept on the boundary).
    """
    interior = rng.standard_normal((mesh.n_elements, 2, dim_poly(k)))
    traces = rng.standard_normal((mesh.n_edges, 2, k + 1))
    b = mesh.boundary
    if boundary == "zero":
        traces[b] = 0.0
    elif boundary == "tangential":
        n = mesh.edge_normals[b]
        normal = np.einsum("ecl,ec->el", traces[b], n)
        traces[b] = normal[:, None, :] * n[:, :, None]
    return WGVectorField(mesh, interior, traces, k)


def smooth_scalar(x):
    return np.exp(x[..., 0]) * np.sin(2 * x[..., 1]) + np.cos(x[..., 0] * x[..., 1])


def smooth_scalar_grad(x):
    X, Y = x[..., 0], x[..., 1]
    return np.stack([np.exp(X) * np.sin(2 * Y) - Y * np.sin(X * Y),
                     2 * np.exp(X) * np.cos(2 * Y) - X * np.sin(X * Y)], axis=-1)


def smooth_vector(x):
    X, Y = x[..., 0], x[..., 1]
    return np.stack([np.sin(X + 2 * Y), np.exp(X) * np.cos(Y)], axis=-1)


def smooth_vector_grad(x):
    """``[..., component, direction]``."""
    X, Y = x[..., 0], x[..., 1]
    g = np.empty(x.shape[:-1] + (2, 2))
    g[..., 0, 0] = np.cos(X + 2 * Y)
    g[..., 0, 1] = 2 * np.cos(X + 2 * Y)
    g[..., 1, 0] = np.exp(X) * np.cos(Y)
    g[..., 1, 1] = -np.exp(X) * np.sin(Y)
    return g


def smooth_vector_curl(x):
    g = smooth_vector_grad(x)
    return g[..., 1, 0] - g[..., 0, 1]


def _rel(a, b):
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def _per_element_rel(a, b):
    axes = tuple(range(1, a.ndim))
    num = np.max(np.abs(a - b), axis=axes)
    den = np.maximum(np.max(np.abs(b), axis=axes), 1e-300)
    return float(np.max(num / den))


# ---------------------------------------------------------------------------
# checks


def check_mesh(n=4):
    m = build_structured_mesh(n)
    counts = (m.n_elements, m.n_vertices, m.n_edges) == (2 * n * n, (n + 1) ** 2, 3 * n * n + 2 * n)
    closure = np.abs(np.einsum("ke,kec->kc", m.edge_lengths[m.element_edges], m.normals)).max()
    area = abs(m.area.sum() - 1.0)
    value = max(closure, area)
    return CheckResult("mesh_invariants", bool(counts and value < 1e-14), value, 1e-14,
                       f"n={n}: elements/vertices/edges {m.n_elements}/{m.n_vertices}/{m.n_edges}")


def check_quadrature(q=8):
    rule = triangle_quadrature(q)
    worst = 0.0
    for a, b in monomial_exponents(q):
        exact = factorial_moment(int(a), int(b))
        approx = float(np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b))
        worst = max(worst, abs(approx - exact) / exact)
    return CheckResult("quadrature_exactness", worst < 1e-13, worst, 1e-13, f"degree {q}")


def check_commutativity(n=4, tol=1e-11):
    mesh = build_structured_mesh(n)
    worst, parts = 0.0, []
    for k in (1, 2):
        disc = Discretization(mesh, k)
        # (a) gradient of {Q_(k-1) q, Q_k^b q}
        q = WGScalarField(mesh, project_interior(mesh, smooth_scalar, k - 1),
                          project_edges(mesh, smooth_scalar, k), k - 1, k)
        ea = _per_element_rel(disc.weak_gradient(q, k), project_interior(mesh, smooth_scalar_grad, k))
        # (b) gradient of {RT projection of v, Q_k^b v}
        vals = np.empty(disc.qx.shape)
        for K in range(mesh.n_elements):
            vals[K] = rt_project(mesh, K, smooth_vector, k)(disc.qx[K])
        tb = project_edges(mesh, smooth_vector, k)[mesh.element_edges]           # (nK, 3, 2, k+1)
        tvals = np.einsum("wl,kecl->kewc", disc.chi, tb)
        g = np.stack([weak_gradient_of_values(disc, k - 1, vals[..., c], tvals[..., c])
                      for c in range(2)], axis=1)
        eb = _per_element_rel(g, project_interior(mesh, smooth_vector_grad, k - 1))
        # (c) curl of {Q_k w, Q_k^b w}
        w = WGVectorField(mesh, project_interior(mesh, smooth_vector, k),
                          project_edges(mesh, smooth_vector, k), k)
        ec = _per_element_rel(disc.weak_curl(w, k - 1), project_interior(mesh, smooth_vector_curl, k - 1))
        parts.append(f"k={k}: a={ea:.1e} b={eb:.1e} c={ec:.1e}")
        worst = max(worst, ea, eb, ec)
    return CheckResult("commutativity", worst <= tol, worst, tol, "; ".join(parts))


def check_form_identities(n=4, k=1, samples=10, seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    params = PhysicalParams(Ha=2.0, N=0.5, Rm=3.0, k=k)
    mesh = build_structured_mesh(n)
    ctx = FormContext(mesh, params)
    worst = 0.0
    for _ in range(samples):
        v = random_vector_field(mesh, k, rng, "zero")
        w = random_vector_field(mesh, k, rng, "tangential")
        phi = random_vector_field(mesh, k, rng, "zero")
        ea = abs(form_a(ctx, v, v) * params.Ha**2 - norm_V(ctx, v) ** 2) / norm_V(ctx, v) ** 2
        et = abs(form_atilde(ctx, w, w) * params.Rm**2 - norm_W(ctx, w) ** 2) / norm_W(ctx, w) ** 2
        scale = norm_V(ctx, phi) * norm_V(ctx, v) ** 2
        ec = abs(form_c(ctx, phi, v, v)) / scale
        worst = max(worst, ea, et, ec)
    return CheckResult("form_identities", worst <= tol, worst, tol, f"{samples} random triples, k={k}")


def check_condensation(n=2, k=1, seed=1, tol=1e-9):
    from .verify import manufactured_case

    rng = np.random.default_rng(seed)
    mesh = build_structured_mesh(n)
    params = PhysicalParams(k=k)
    ctx = FormContext(mesh, params)
    case = manufactured_case(1, params)
    u = random_vector_field(mesh, k, rng, "zero") * 0.1
    B = random_vector_field(mesh, k, rng, "tangential") * 0.1
    sys = assemble_oseen(ctx, u, B, case.f, case.g)
    x_full = solve_linear(sys)
    x_cond = solve_linear(condense(sys))
    diff = float(np.max(np.abs(x_full - x_cond)))
    return CheckResult("condensation_equivalence", diff <= tol, diff, tol,
                       f"n={n} k={k}, {sys.dofmap.n_trace} of {sys.dofmap.ndof} dofs kept")


def check_forcing(samples=20, seed=2, tol=1e-6):
    from .verify import fd_forcing, manufactured_case

    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.95, (samples, 2))
    worst = 0.0
    for cid in (1, 2):
        case = manufactured_case(cid)
        f_fd, g_fd = fd_forcing(case, x)
        worst = max(worst, _rel(case.f(x), f_fd), _rel(case.g(x), g_fd))
    return CheckResult("forcing_vs_finite_differences", worst <= tol, worst, tol, f"{samples} points")


@lru_cache(maxsize=4)
def _small_solve(n=4, k=1, case=1):
    from .solver import SolverConfig, solve_mhd

    return solve_mhd(SolverConfig(n=n, k=k, case=case))


def boundary_violations(sol) -> dict:
    """Largest boundary value of u_b, the tangential part of B_b, and r_b."""
    mesh = sol.mesh
    b = mesh.boundary
    n = mesh.edge_normals[b]
    Bt = sol.B.traces[b, 0] * n[:, 1, None] - sol.B.traces[b, 1] * n[:, 0, None]
    u_b = sol.u.traces[b]
    if sol.u_boundary is not None:
        u_b = u_b - sol.u_boundary[b]
    return {"u_b": float(np.abs(u_b).max()), "B_b x n": float(np.abs(Bt).max()),
            "r_b": float(np.abs(sol.r.traces[b]).max())}


def pressure_mean(sol) -> float:
    d = sol.ctx.disc
    return abs(float(np.einsum("kq,kq->", d.qw, d.eval_interior(sol.p.interior))))


def check_divergence_free(n=4, k=1, tol=1e-10):
    from .solver import divergence_metrics

    sol = _small_solve(n, k)
    mu, ju = divergence_metrics(sol.u)
    mb, jb = divergence_metrics(sol.B)
    value = max(mu, ju, mb, jb)
    return CheckResult("divergence_free", value <= tol, value, tol,
                       f"n={n} k={k}: div u {mu:.1e}, div B {mb:.1e}, normal jumps {ju:.1e}/{jb:.1e}")


def check_boundary_conditions(n=4, k=1, tol=1e-12):
    values = {}
    for case in (1, 2):
        sol = _small_solve(n, k, case)
        for key, v in boundary_violations(sol).items():
            values[f"case {case} {key}"] = v
        values[f"case {case} |int p|"] = pressure_mean(sol)
    worst = max(values.values())
    return CheckResult("boundary_conditions", worst <= tol, worst, tol,
                       ", ".join(f"{k}={v:.1e}" for k, v in values.items()))


def check_scheme_residuals(n=4, k=1, tol=1e-9):
    from .solver import scheme_residuals

    res = scheme_residuals(_small_solve(n, k))
    worst = max(res.values())
    return CheckResult("scheme_residuals", worst <= tol, worst, tol,
                       ", ".join(f"{b}={v:.1e}" for b, v in res.items()))


def check_derivatives(samples=100, seed=3, tol=1e-6):
    from .verify import derivative_errors, manufactured_case

    x = np.random.default_rng(seed).uniform(0.05, 0.95, (samples, 2))
    errs = {f"case{c}.{k}": v for c in (1, 2) for k, v in derivative_errors(manufactured_case(c), x).items()}
    worst = max(errs.values())
    return CheckResult("analytic_derivatives", worst <= tol, worst, tol, f"{len(errs)} derivatives")


def check_inf_sup(meshes=(2, 4, 8), k=1, drop=0.2):
    from .system import inf_sup_surrogate

    betas = [inf_sup_surrogate(FormContext(build_structured_mesh(n), PhysicalParams(k=k))) for n in meshes]
    worst = max((betas[0] - b) / betas[0] for b in betas)
    ok = min(betas) > 0 and worst <= drop
    return CheckResult("inf_sup", ok, max(worst, 0.0), drop,
                       "beta " + ", ".join(f"n={n}: {b:.4f}" for n, b in zip(meshes, betas)))


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "mesh_invariants": check_mesh,
    "quadrature_exactness": check_quadrature,
    "commutativity": check_commutativity,
    "form_identities": check_form_identities,
    "condensation_equivalence": check_condensation,
    "forcing_vs_finite_differences": check_forcing,
    "divergence_free": check_divergence_free,
    "boundary_conditions": check_boundary_conditions,
    "scheme_residuals": check_scheme_residuals,
    "analytic_derivatives": check_derivatives,
    "inf_sup": check_inf_sup,
}


def run_checks(names=None) -> list[CheckResult]:
    """Run the named checks (all by default); exceptions count as failures."""
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s) {unknown}; available: {sorted(CHECKS)}")
    results = []
    for name in names:
        t0 = time.perf_counter()
        try:
            res = CHECKS[name]()
        except Exception as exc:  # reported, not raised: the suite must summarize every check
            res = CheckResult(name, False, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
