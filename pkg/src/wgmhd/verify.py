"""Manufactured solutions, error norms, convergence studies and reports."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .forms import FormContext, PhysicalParams
from .mesh import build_structured_mesh
from .polybasis import element_quadrature_points, eval_monomials, triangle_quadrature
from .weakops import Discretization, WGScalarField, WGVectorField, divergence_exact_coeffs


# ---------------------------------------------------------------------------
# exact fields
#
# Vector fields return values (..., 2), gradients (..., 2, 2) indexed
# [component, direction] and Hessians (..., 2, 2, 2).  Scalars return
# values (...) and gradients (..., 2).


def _F(t, d=0):
    # t^2 (t - 1)^2 and its derivatives
    return [t**2 * (t - 1) ** 2, 2 * t * (t - 1) * (2 * t - 1), 12 * t**2 - 12 * t + 2,
            24 * t - 12][d]


def _G(t, d=0):
    # t (t - 1) (t - 1/2) and its derivatives
    return [t * (t - 1) * (t - 0.5), 3 * t**2 - 3 * t + 0.5, 6 * t - 3][d]


class PolynomialVortex:
    """(-F(x) F'(y), F'(x) F(y)) / 2 with F(t) = t^2 (t-1)^2; divergence free, zero on the boundary."""

    def value(self, x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([-_F(X) * _F(Y, 1), _F(X, 1) * _F(Y)], axis=-1) / 2

    def grad(self, x):
        X, Y = x[..., 0], x[..., 1]
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = -_F(X, 1) * _F(Y, 1)
        g[..., 0, 1] = -_F(X) * _F(Y, 2)
        g[..., 1, 0] = _F(X, 2) * _F(Y)
        g[..., 1, 1] = _F(X, 1) * _F(Y, 1)
        return g / 2

    def hess(self, x):
        X, Y = x[..., 0], x[..., 1]
        H = np.empty(x.shape[:-1] + (2, 2, 2))
        H[..., 0, 0, 0] = -_F(X, 2) * _F(Y, 1)
        H[..., 0, 0, 1] = H[..., 0, 1, 0] = -_F(X, 1) * _F(Y, 2)
        H[..., 0, 1, 1] = -_F(X) * _F(Y, 3)
        H[..., 1, 0, 0] = _F(X, 3) * _F(Y)
        H[..., 1, 0, 1] = H[..., 1, 1, 0] = _F(X, 2) * _F(Y, 1)
        H[..., 1, 1, 1] = _F(X, 1) * _F(Y, 2)
        return H / 2


class TrigVortex:
    """(sin(pi x) cos(pi y), -sin(pi y) cos(pi x)); divergence free, zero normal component on the boundary."""

    def value(self, x):
        sx, cx = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        sy, cy = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        return np.stack([sx * cy, -sy * cx], axis=-1)

    def grad(self, x):
        sx, cx = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        sy, cy = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = np.pi * cx * cy
        g[..., 0, 1] = -np.pi * sx * sy
        g[..., 1, 0] = np.pi * sx * sy
        g[..., 1, 1] = -np.pi * cx * cy
        return g

    def hess(self, x):
        sx, cx = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        sy, cy = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        p2 = np.pi**2
        H = np.empty(x.shape[:-1] + (2, 2, 2))
        H[..., 0, 0, 0] = H[..., 0, 1, 1] = -p2 * sx * cy
        H[..., 0, 0, 1] = H[..., 0, 1, 0] = -p2 * cx * sy
        H[..., 1, 0, 0] = H[..., 1, 1, 1] = p2 * sy * cx
        H[..., 1, 0, 1] = H[..., 1, 1, 0] = p2 * sx * cy
        return H


class CubicProduct:
    """G(x) G(y) with G(t) = t (t-1) (t-1/2); zero on the boundary and mean zero."""

    def value(self, x):
        return _G(x[..., 0]) * _G(x[..., 1])

    def grad(self, x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([_G(X, 1) * _G(Y), _G(X) * _G(Y, 1)], axis=-1)


class SexticDifference:
    """x^6 - y^6; mean zero on the unit square."""

    def value(self, x):
        return x[..., 0] ** 6 - x[..., 1] ** 6

    def grad(self, x):
        return np.stack([6 * x[..., 0] ** 5, -6 * x[..., 1] ** 5], axis=-1)


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution and the forcing that produces it."""

    case_id: int
    params: PhysicalParams
    u: object
    B: object
    p: object
    r: object
    u_vanishes_on_boundary: bool

    def f(self, x):
        """-Ha^-2 lap u + N^-1 (u . grad) u + grad p - Rm^-1 (curl B) x B."""
        P = self.params
        u, gu = self.u.value(x), self.u.grad(x)
        lap = np.trace(self.u.hess(x), axis1=-2, axis2=-1)
        conv = np.einsum("...d,...cd->...c", u, gu)
        B, gB = self.B.value(x), self.B.grad(x)
        j = gB[..., 1, 0] - gB[..., 0, 1]
        # (curl B) x B = (-j B_1, j B_0) for the scalar curl j
        lorentz = np.stack([-j * B[..., 1], j * B[..., 0]], axis=-1)
        return -lap / P.Ha**2 + conv / P.N + self.p.grad(x) - lorentz / P.Rm

    def g(self, x):
        """Rm^-1 curl curl B - curl(u x B) + grad r."""
        P = self.params
        HB = self.B.hess(x)
        # grad of j = d_x B_1 - d_y B_0
        gj = HB[..., 1, 0, :] - HB[..., 0, 1, :]
        curlcurl = np.stack([gj[..., 1], -gj[..., 0]], axis=-1)
        u, gu = self.u.value(x), self.u.grad(x)
        B, gB = self.B.value(x), self.B.grad(x)
        # s = u_0 B_1 - u_1 B_0 and curl s = (d_y s, -d_x s)
        gs = (gu[..., 0, :] * B[..., 1, None] + u[..., 0, None] * gB[..., 1, :]
              - gu[..., 1, :] * B[..., 0, None] - u[..., 1, None] * gB[..., 0, :])
        curl_s = np.stack([gs[..., 1], -gs[..., 0]], axis=-1)
        return curlcurl / P.Rm - curl_s + self.r.grad(x)


def manufactured_case(case_id: int, params: PhysicalParams | None = None) -> ManufacturedCase:
    """The two benchmark solutions on the unit square.

    Case 1 has u = B = a polynomial vortex and p = r = G(x) G(y).  Case 2
    replaces u by a trigonometric vortex (whose tangential trace does not
    vanish on the boundary) and p by x^6 - y^6.
    """
    params = PhysicalParams() if params is None else params
    if case_id == 1:
        return ManufacturedCase(1, params, PolynomialVortex(), PolynomialVortex(),
                                CubicProduct(), CubicProduct(), True)
    if case_id == 2:
        return ManufacturedCase(2, params, TrigVortex(), PolynomialVortex(),
                                SexticDifference(), CubicProduct(), False)
    raise ValueError(f"unknown manufactured case {case_id!r}; expected 1 or 2")


# ---------------------------------------------------------------------------
# finite-difference oracles


def fd_gradient(func, x, h=1e-3):
    """Central-difference gradient of ``func`` at ``x``; the derivative direction is the last axis."""
    x = np.asarray(x, dtype=float)
    cols = []
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        cols.append((np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_forcing(case: ManufacturedCase, x, h=1e-4):
    """Apply the PDE operators to the exact *values* by nested central differences.

    Independent of the hand-coded derivatives; second order in ``h``.
    """
    P = case.params
    u, B = case.u.value, case.B.value

    def grad_u(y):
        return fd_gradient(u, y, h)

    def curl_B(y):
        g = fd_gradient(B, y, h)
        return g[..., 1, 0] - g[..., 0, 1]

    Hu = fd_gradient(grad_u, x, h)                                   # (..., c, d, e)
    lap = Hu[..., 0, 0] + Hu[..., 1, 1]

    def flux(y):                                                     # u (x) u, [c, d]
        v = u(y)
        return v[..., :, None] * v[..., None, :]

    dflux = fd_gradient(flux, x, h)
    div_flux = dflux[..., 0, 0] + dflux[..., 1, 1]
    Bx, j = B(x), curl_B(x)
    lorentz = np.stack([-j * Bx[..., 1], j * Bx[..., 0]], axis=-1)
    f = -lap / P.Ha**2 + div_flux / P.N + fd_gradient(case.p.value, x, h) - lorentz / P.Rm

    def rot(grad_s):
        return np.stack([grad_s[..., 1], -grad_s[..., 0]], axis=-1)

    def cross(y):
        a, b = u(y), B(y)
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

    g = (rot(fd_gradient(curl_B, x, h)) / P.Rm - rot(fd_gradient(cross, x, h))
         + fd_gradient(case.r.value, x, h))
    return f, g


def derivative_errors(case: ManufacturedCase, x, h=1e-4) -> dict:
    """Relative mismatch of every analytic derivative against central differences."""
    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))

    out = {}
    for name in ("u", "B", "p", "r"):
        fld = getattr(case, name)
        out[f"{name}.grad"] = rel(fd_gradient(fld.value, x, h), fld.grad(x))
        if hasattr(fld, "hess"):
            out[f"{name}.hess"] = rel(fd_gradient(fld.grad, x, h), fld.hess(x))
    return out


# ---------------------------------------------------------------------------
# interpolants


def interpolate_case(case: ManufacturedCase, mesh, k: int):
    """WG interpolants ``({Q^o_k u, Q^b_k u}, {Q^o_k B, Q^b_k B}, {Q^o_{k-1} p, Q^b_k p}, ...)``."""
    from .weakops import project_edges, project_interior

    def vec(f):
        return WGVectorField(mesh, project_interior(mesh, f.value, k),
                             project_edges(mesh, f.value, k), k)

    def scal(f):
        return WGScalarField(mesh, project_interior(mesh, f.value, k - 1),
                             project_edges(mesh, f.value, k), k - 1, k)

    return vec(case.u), vec(case.B), scal(case.p), scal(case.r)


# ---------------------------------------------------------------------------
# errors


@dataclass
class ErrorReport:
    """Relative errors of one solve; field order is the report column order.

    Gradient and curl errors are divided by the corresponding full gradient
    norm.  The pressure gradient terms carry the factor ``h_K``.  ``r_l2``
    is mean adjusted, ``r_l2_raw`` is not.
    """

    u_l2: float
    u_grad_w: float
    u_grad_h: float
    div_u: float
    B_l2: float
    B_curl_w: float
    B_curl_h: float
    div_B: float
    p_l2: float
    p_grad_w: float
    r_l2: float
    r_l2_raw: float
    r_grad_w: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"error entry {f.name} = {v} is not a finite nonnegative number")

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.names()}


def _sq(w, values):
    sq = values**2
    return float(np.einsum("kq,kq->", w, sq.reshape(sq.shape[:2] + (-1,)).sum(axis=2)))


def compute_errors(solution, case: ManufacturedCase, quad_degree: int | None = None) -> ErrorReport:
    """Relative errors of ``solution`` (anything with ``u, B, p, r``) against ``case``."""
    from .solver import divergence_metrics

    u, B, p, r = solution.u, solution.B, solution.p, solution.r
    mesh, k = u.mesh, u.degree
    ctx = getattr(solution, "ctx", None)
    disc = ctx.disc if ctx is not None else Discretization(mesh, k)
    q = max(2 * k + 4, 10) if quad_degree is None else quad_degree
    pts, w = element_quadrature_points(mesh, triangle_quadrature(q))
    V, dV = eval_monomials(pts, mesh.centroid[:, None], mesh.diameter[:, None], k)
    nk1 = disc.nk1
    h2 = (mesh.diameter**2)[:, None]

    def rel(num, den):
        return math.sqrt(num / den) if den > 0 else math.sqrt(num)

    uo = np.einsum("kqi,kci->kqc", V, u.interior)
    Bo = np.einsum("kqi,kci->kqc", V, B.interior)
    ue, gue = case.u.value(pts), case.u.grad(pts)
    Be, gBe = case.B.value(pts), case.B.grad(pts)
    nu, nB = _sq(w, gue), _sq(w, gBe)

    gw = np.einsum("kqi,kcdi->kqcd", V[..., :nk1], disc.weak_vector_gradient(u, k - 1))
    gh = np.einsum("kqid,kci->kqcd", dV, u.interior)
    ce = gBe[..., 1, 0] - gBe[..., 0, 1]
    cw = np.einsum("kqi,ki->kq", V[..., :nk1], disc.weak_curl(B, k - 1))
    gBh = np.einsum("kqid,kci->kqcd", dV, B.interior)
    ch = gBh[..., 1, 0] - gBh[..., 0, 1]

    po = np.einsum("kqi,ki->kq", V[..., :nk1], p.interior)
    pe, gpe = case.p.value(pts), case.p.grad(pts)
    gpw = np.einsum("kqi,kci->kqc", V, disc.weak_gradient(p, k))
    ro = np.einsum("kqi,ki->kq", V[..., :nk1], r.interior)
    re, gre = case.r.value(pts), case.r.grad(pts)
    grw = np.einsum("kqi,kci->kqc", V, disc.weak_gradient(r, k))
    area = mesh.area.sum()
    dr = (re - ro) - (np.einsum("kq,kq->", w, re - ro) / area)

    return ErrorReport(
        u_l2=rel(_sq(w, ue - uo), _sq(w, ue)),
        u_grad_w=rel(_sq(w, gue - gw), nu),
        u_grad_h=rel(_sq(w, gue - gh), nu),
        div_u=divergence_metrics(u)[0],
        B_l2=rel(_sq(w, Be - Bo), _sq(w, Be)),
        B_curl_w=rel(_sq(w, ce - cw), nB),
        B_curl_h=rel(_sq(w, ce - ch), nB),
        div_B=divergence_metrics(B)[0],
        p_l2=rel(_sq(w, pe - po), _sq(w, pe)),
        p_grad_w=rel(_sq(w * h2, gpe - gpw), _sq(w, gpe)),
        r_l2=rel(_sq(w, dr), _sq(w, re)),
        r_l2_raw=rel(_sq(w, re - ro), _sq(w, re)),
        r_grad_w=rel(_sq(w * h2, gre - grw), _sq(w, gre)),
    )


# ---------------------------------------------------------------------------
# convergence tables


@dataclass
class TableRow:
    n: int
    errors: ErrorReport | None
    orders: dict = field(default_factory=dict)
    iterations: int = 0
    seconds: float = 0.0
    failure: str = ""


@dataclass
class ConvergenceTable:
    rows: list
    k: int
    example: int
    params: PhysicalParams = field(default_factory=PhysicalParams)
    timestamp: str = ""
    commit: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r.errors, name) if r.errors else np.nan for r in self.rows])

    def order_column(self, name: str) -> np.ndarray:
        return np.array([r.orders.get(name, np.nan) for r in self.rows[1:]])

    def __eq__(self, other):
        if not isinstance(other, ConvergenceTable):
            return NotImplemented
        return _table_key(self) == _table_key(other)


def _table_key(t):
    return (t.k, t.example, t.params, t.timestamp, t.commit,
            [(r.n, r.errors, r.iterations, r.failure) for r in t.rows])


# errors and div metrics whose orders are meaningful
ORDER_COLUMNS = ("u_l2", "u_grad_w", "u_grad_h", "B_l2", "B_curl_w", "B_curl_h",
                 "p_l2", "p_grad_w", "r_l2", "r_l2_raw", "r_grad_w")


def observed_orders(coarse: float, fine: float) -> float:
    """``log2(e_coarse / e_fine)``; NaN when either error is not positive."""
    if coarse > 0 and fine > 0:
        return math.log2(coarse / fine)
    return float("nan")


def fill_orders(rows: list) -> None:
    """Orders between consecutive rows whose mesh size doubles."""
    for prev, row in zip(rows, rows[1:]):
        row.orders = {}
        if prev.errors is None or row.errors is None or row.n != 2 * prev.n:
            continue
        for name in ORDER_COLUMNS:
            row.orders[name] = observed_orders(getattr(prev.errors, name), getattr(row.errors, name))


def _commit() -> str:
    import subprocess

    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def convergence_study(example: int, k: int, meshes, params: PhysicalParams | None = None,
                      progress: Callable | None = None, **solver_options) -> ConvergenceTable:
    """Solve on every mesh and tabulate errors and orders.

    Solver failures are recorded in the row's ``failure`` field instead of
    aborting the study.
    """
    from .solver import ConvergenceError, SolverConfig, solve_mhd
    from .system import SingularSystemError

    meshes = [int(n) for n in meshes]
    if not meshes or any(n < 1 for n in meshes):
        raise ValueError("mesh list must contain positive integers")
    if any(b <= a for a, b in zip(meshes, meshes[1:])):
        raise ValueError("mesh list must be strictly increasing")
    params = PhysicalParams(k=k) if params is None else params
    case = manufactured_case(example, params)
    rows = []
    for n in meshes:
        t0 = time.perf_counter()
        try:
            sol = solve_mhd(SolverConfig(n=n, k=k, params=params, case=case, **solver_options))
            row = TableRow(n, compute_errors(sol, case), iterations=sol.iterations)
        except (ConvergenceError, SingularSystemError, np.linalg.LinAlgError, MemoryError) as exc:
            row = TableRow(n, None, failure=f"{type(exc).__name__}: {exc}")
        row.seconds = time.perf_counter() - t0
        rows.append(row)
        if progress is not None:
            progress(row)
    fill_orders(rows)
    return ConvergenceTable(rows, k, example, params,
                            time.strftime("%Y-%m-%dT%H:%M:%S"), _commit())


# ---------------------------------------------------------------------------
# reports

CSV_HEADER = ["n"] + ErrorReport.names() + [f"order_{c}" for c in ORDER_COLUMNS] + [
    "iterations", "seconds", "failure"]


def _fmt_err(v):
    return "" if v is None or not np.isfinite(v) else f"{v:.4e}"


def _fmt_order(v):
    return "" if v is None or not np.isfinite(v) else f"{v:.2f}"


def table_to_csv(table: ConvergenceTable) -> str:
    buf = io.StringIO()
    buf.write(f"# example={table.example} k={table.k} Ha={table.params.Ha} N={table.params.N} "
              f"Rm={table.params.Rm} timestamp={table.timestamp} commit={table.commit}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in table.rows:
        errs = [_fmt_err(getattr(row.errors, c)) if row.errors else "" for c in ErrorReport.names()]
        orders = [_fmt_order(row.orders.get(c)) for c in ORDER_COLUMNS]
        writer.writerow([row.n] + errs + orders + [row.iterations, f"{row.seconds:.2f}", row.failure])
    return buf.getvalue()


def parse_csv(text: str) -> ConvergenceTable:
    """Inverse of :func:`table_to_csv` (values at the printed precision)."""
    lines = text.splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = dict(item.split("=", 1) for item in lines[0][1:].split())
        lines = lines[1:]
    reader = csv.DictReader(lines)
    if reader.fieldnames != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    rows = []
    for rec in reader:
        errors = None
        if rec["u_l2"] != "":
            errors = ErrorReport(**{c: float(rec[c]) for c in ErrorReport.names()})
        orders = {c: float(rec[f"order_{c}"]) for c in ORDER_COLUMNS if rec[f"order_{c}"] != ""}
        rows.append(TableRow(int(rec["n"]), errors, orders, int(rec["iterations"]),
                             float(rec["seconds"]), rec["failure"]))
    k = int(meta.get("k", 1))
    params = PhysicalParams(float(meta.get("Ha", 1)), float(meta.get("N", 1)),
                            float(meta.get("Rm", 1)), k)
    return ConvergenceTable(rows, k, int(meta.get("example", 1)), params,
                            meta.get("timestamp", ""), meta.get("commit", ""))


# Markdown groups: (title, [(header, error column)]) mirroring the published layout
MARKDOWN_GROUPS = [
    ("velocity", [("‖u−u_ho‖/‖u‖", "u_l2"), ("‖∇u−∇_{w,k−1}u_h‖/‖∇u‖", "u_grad_w"),
                  ("‖∇u−∇_h u_ho‖/‖∇u‖", "u_grad_h")], "div_u", "div Uh"),
    ("magnetic field", [("‖B−B_ho‖/‖B‖", "B_l2"), ("‖∇×B−∇_{w,k−1}×B_h‖/‖∇B‖", "B_curl_w"),
                        ("‖∇×B−∇_h×B_ho‖/‖∇B‖", "B_curl_h")], "div_B", "div Bh"),
    ("pressures", [("‖p−p_ho‖/‖p‖", "p_l2"), ("h‖∇p−∇_{w,k}p_h‖/‖∇p‖", "p_grad_w"),
                   ("‖r−r_ho−(r̄−r̄_ho)‖/‖r‖", "r_l2"), ("‖r−r_ho‖/‖r‖", "r_l2_raw"),
                   ("h‖∇r−∇_{w,k}r_h‖/‖∇r‖", "r_grad_w")], None, None),
]


def table_to_markdown(table: ConvergenceTable) -> str:
    out = [f"Example {table.example}, k = {table.k} "
           f"(Ha = {table.params.Ha:g}, N = {table.params.N:g}, Rm = {table.params.Rm:g})", ""]
    for title, cols, div, div_title in MARKDOWN_GROUPS:
        head = ["mesh"]
        for label, _ in cols:
            head += [label, "order"]
        if div:
            head.append(div_title)
        out.append(f"**{title}**")
        out.append("")
        out.append("| " + " | ".join(head) + " |")
        out.append("|" + "---|" * len(head))
        for row in table.rows:
            cells = [f"{row.n}×{row.n}"]
            for _, c in cols:
                cells.append(_fmt_err(getattr(row.errors, c)) if row.errors else "failed")
                cells.append(_fmt_order(row.orders.get(c)) or "-")
            if div:
                cells.append(_fmt_err(getattr(row.errors, div)) if row.errors else "")
            out.append("| " + " | ".join(cells) + " |")
        out.append("")
    failures = [r for r in table.rows if r.failure]
    for r in failures:
        out.append(f"- {r.n}×{r.n}: {r.failure}")
    return "\n".join(out).rstrip() + "\n"


def emit_report(table: ConvergenceTable, fmt: str = "csv", path=None) -> str:
    """Render ``table`` as ``"csv"`` or ``"md"``; write it to ``path`` when given."""
    if fmt == "csv":
        text = table_to_csv(table)
    elif fmt in ("md", "markdown"):
        text = table_to_markdown(table)
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected 'csv' or 'md'")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
