"""Oseen iteration for the steady WG-MHD scheme."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .forms import TAU_LENGTHS, FormContext, PhysicalParams
from .mesh import Mesh, build_structured_mesh
from .system import (
    DofMap,
    assemble_oseen,
    build_dofmap,
    condense,
    dirichlet_local,
    factorize,
    local_oseen_blocks,
    scatter,
    solve_linear,
)
from .polybasis import (
    edge_quadrature,
    edge_quadrature_points,
    element_quadrature_points,
    eval_monomials,
    triangle_quadrature,
)
from .weakops import WGScalarField, WGVectorField, divergence_exact_coeffs, project_edges

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """The Oseen iteration did not reach the tolerance; ``history`` holds the increments."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass
class SolverConfig:
    """Inputs of :func:`solve_mhd`.

    ``case`` is a manufactured case id (1 or 2), a ``ManufacturedCase``, or
    ``None`` together with explicit ``f`` and ``g`` callables.
    """

    n: int
    k: int = 1
    params: PhysicalParams | None = None
    case: object = 1
    f: object = None
    g: object = None
    u_boundary: object = None
    tol: float = 1e-8
    max_iter: int = 100
    condense: bool = True
    strategy: str = "coupled"
    tau_length: str = "area"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.strategy not in ("coupled", "decoupled"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.tau_length not in TAU_LENGTHS:
            raise ValueError(f"unknown tau length {self.tau_length!r}")
        if self.params is None:
            self.params = PhysicalParams(k=self.k)
        elif self.params.k != self.k:
            raise ValueError("params.k and k disagree")


@dataclass
class SolutionFields:
    u: WGVectorField
    B: WGVectorField
    p: WGScalarField
    r: WGScalarField
    iterations: int
    increments: list
    ctx: FormContext = field(repr=False)
    dofmap: DofMap = field(repr=False)
    multiplier: float = 0.0
    seconds: float = 0.0
    forcing: tuple = field(default=(None, None), repr=False)
    u_boundary: np.ndarray | None = field(default=None, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.u.mesh


def _interior_l2(ctx, coeffs):
    return float(np.sqrt(np.einsum("kci,kij,kcj->", coeffs, ctx.disc.mass, coeffs)))


def _resolve_forcing(config):
    from .verify import ManufacturedCase, manufactured_case

    case = config.case
    if isinstance(case, (int, np.integer)) and not isinstance(case, bool):
        case = manufactured_case(int(case), config.params)
    if isinstance(case, ManufacturedCase):
        return case.f, case.g, case
    if config.f is None and config.g is None:
        raise ValueError("either a manufactured case or forcing callables are required")
    return config.f, config.g, None


def solve_mhd(config: SolverConfig, mesh: Mesh | None = None) -> SolutionFields:
    """Oseen iteration from a zero initial guess until the interior velocity increment drops below ``tol``."""
    t0 = time.perf_counter()
    mesh = build_structured_mesh(config.n) if mesh is None else mesh
    ctx = FormContext(mesh, config.params, tau_length=config.tau_length)
    dm = build_dofmap(mesh, config.k)
    f, g, case = _resolve_forcing(config)

    u_bnd = config.u_boundary
    if u_bnd is None and case is not None and not case.u_vanishes_on_boundary:
        u_bnd = project_edges(mesh, case.u.value, config.k)
    if u_bnd is not None:
        u_bnd = np.where(mesh.boundary[:, None, None], u_bnd, 0.0)

    u = WGVectorField.zeros(mesh, config.k)
    B = WGVectorField.zeros(mesh, config.k)
    history = []
    stepper = _DecoupledStepper(ctx, dm, f, g, u_bnd) if config.strategy == "decoupled" else None
    for it in range(1, config.max_iter + 1):
        if stepper is None:
            sys = assemble_oseen(ctx, u, B, f, g, dm, u_boundary=u_bnd)
            x = solve_linear(condense(sys) if config.condense else sys)
        else:
            x = stepper.step(u, B)
        u_new, B_new, p, r, lam = dm.to_fields(x, u_bnd)
        inc = _interior_l2(ctx, u_new.interior - u.interior)
        history.append(inc)
        log.info("Oseen step %d: |du_o| = %.3e", it, inc)
        u, B = u_new, B_new
        if inc < config.tol:
            return SolutionFields(u, B, p, r, it, history, ctx, dm, lam, time.perf_counter() - t0,
                                  (f, g), u_bnd)
    raise ConvergenceError(
        f"Oseen iteration did not converge in {config.max_iter} steps "
        f"(last increment {history[-1]:.3e})", history)


BLOCK_ROWS = {
    "momentum": ("u_o", "u_b"),
    "continuity": ("p_o", "p_b", "lambda"),
    "induction": ("B_o", "B_b"),
    "magnetic_divergence": ("r_o", "r_b"),
}


def scheme_residuals(solution: SolutionFields) -> dict:
    """Max-norm residual of each block of the nonlinear scheme at ``solution``.

    The Oseen matrix assembled at the converged state reproduces the
    nonlinear scheme, so ``A x - b`` is its residual.
    """
    f, g = solution.forcing
    dm = solution.dofmap
    sys = assemble_oseen(solution.ctx, solution.u, solution.B, f, g, dm,
                         u_boundary=solution.u_boundary)
    x = dm.from_fields(solution.u, solution.B, solution.p, solution.r, solution.multiplier)
    res = sys.matrix @ x - sys.rhs
    out = {}
    for block, names in BLOCK_ROWS.items():
        idx = np.concatenate([np.arange(dm.offsets[n], dm.offsets[n] + dm.sizes[n]) for n in names])
        out[block] = float(np.abs(res[idx]).max()) if len(idx) else 0.0
    return out


class _DecoupledStepper:
    """Magnetic block first (its matrix is state independent and factorized once), then the fluid block.

    The magnetic rows of the coupled Oseen matrix do not involve the new
    velocity, so this ordering solves exactly the same linear system.
    """

    def __init__(self, ctx, dm, f, g, u_bnd):
        self.ctx, self.dm, self.f, self.g = ctx, dm, f, g
        off, sz = dm.offsets, dm.sizes
        blk = lambda name: np.arange(off[name], off[name] + sz[name])
        self.mag = np.concatenate([blk("B_o"), blk("r_o"), blk("B_b"), blk("r_b")])
        self.flu = np.concatenate([blk("u_o"), blk("p_o"), blk("u_b"), blk("p_b"), blk("lambda")])
        self.d = dirichlet_local(dm, u_bnd)
        zero = WGVectorField.zeros(ctx.mesh, ctx.k)
        Kl, Fl = local_oseen_blocks(ctx, zero, zero, None, None, dm, parts="magnetic")
        A, _ = scatter(dm, Kl, Fl)
        self.Amag = A[self.mag][:, self.mag].tocsc()
        self.lu = factorize(self.Amag)

    def step(self, u, B):
        ctx, dm = self.ctx, self.dm
        Kl, Fl = local_oseen_blocks(ctx, u, B, None, self.g, dm, parts="magnetic")
        _, b = scatter(dm, Kl, Fl)
        x = np.zeros(dm.ndof)
        x[self.mag] = solve_linear((self.Amag, b[self.mag]), lu=self.lu)
        B_new = dm.to_fields(x)[1]
        Kl, Fl = local_oseen_blocks(ctx, u, B, self.f, None, dm, parts="fluid")
        Fl[:, dm.layout["u"]] -= np.einsum("kij,kj->ki", ctx.magnetic_coupling(B), B_new.local())
        Fl = Fl - np.einsum("kij,kj->ki", Kl, self.d)
        A, b = scatter(dm, Kl, Fl)
        x[self.flu] = solve_linear((A[self.flu][:, self.flu], b[self.flu]))
        return x


def divergence_metrics(field: WGVectorField):
    """``(max_K h_K^-1 |div v_o|_K, max interior-edge normal jump)`` using exact differentiation.

    The jump metric is the largest ``|[[v_o . n]]|_{0,e} / sqrt(h_e)`` over interior edges.
    """
    mesh, k = field.mesh, field.degree
    div = divergence_exact_coeffs(field.interior, mesh, k)       # (nK, n_{k-1})
    q = max(2 * k, 2)
    pts, wts = element_quadrature_points(mesh, triangle_quadrature(q))
    V = eval_monomials(pts, mesh.centroid[:, None], mesh.diameter[:, None], k - 1, derivatives=False)
    vals = np.einsum("kqi,ki->kq", V, div)
    norms = np.sqrt(np.einsum("kq,kq->k", wts, vals**2))
    div_metric = float(np.max(norms / mesh.diameter)) if len(norms) else 0.0

    inner = np.flatnonzero(~mesh.boundary)
    if len(inner) == 0:
        return div_metric, 0.0
    rule = edge_quadrature(2 * k + 2)
    ex, ew = edge_quadrature_points(mesh, rule)
    ex, ew = ex[inner], ew[inner]
    n = mesh.edge_normals[inner]
    jump = np.zeros(ex.shape[:2])
    for side, sign in ((0, 1.0), (1, -1.0)):
        K = mesh.edge_elements[inner, side]
        Vk = eval_monomials(ex, mesh.centroid[K][:, None], mesh.diameter[K][:, None], k,
                            derivatives=False)
        vals = np.einsum("eqi,eci->eqc", Vk, field.interior[K])
        jump += sign * np.einsum("eqc,ec->eq", vals, n)
    jn = np.sqrt(np.einsum("eq,eq->e", ew, jump**2) / mesh.edge_lengths[inner])
    return div_metric, float(jn.max())
