"""Degrees of freedom, assembly of one Oseen step, static condensation and the linear solve.

Global numbering (after boundary elimination)::

    [ u_o | B_o | p_o | r_o | u_b | B_b | p_b | r_b | lambda ]

Interior blocks come first so that the trace-plus-multiplier system of the
condensed solve is the tail of the same numbering.  Boundary handling:

* u_b on boundary edges is eliminated (prescribed values may be lifted in);
* B_b on boundary edges keeps only the normal component ``beta n_e``;
* r_b on boundary edges is eliminated (zero);
* p_b is free on every edge and ``lambda`` enforces the zero mean of p_o.

Every element dof maps to at most one global dof with a coefficient, so the
prolongation from global to local dofs is ``x_loc = coef * x[index]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import FormContext
from .mesh import Mesh
from .polybasis import dim_poly
from .weakops import WGScalarField, WGVectorField

FIELDS = ("u", "B", "p", "r")


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a factorization breaks down; carries a description of the offending dof."""


@dataclass
class DofMap:
    """Global numbering of the unknowns of one Oseen step.

    Attributes
    ----------
    offsets : dict
        Start of every block, keyed ``"u_o"``, ``"B_o"``, ..., ``"lambda"``.
    index, coef : ndarray
        ``(nK, n_local)`` maps from element dofs to global dofs (-1 when
        eliminated) and the prolongation coefficients.
    """

    mesh: Mesh
    k: int
    offsets: dict
    sizes: dict
    index: np.ndarray
    coef: np.ndarray
    ndof: int
    n_interior: int
    layout: dict = field(repr=False)
    trace_index: dict = field(repr=False, default_factory=dict)
    trace_coef: dict = field(repr=False, default_factory=dict)
    interior_local: np.ndarray = field(repr=False, default=None)
    ns: int = 0
    nq: int = 0
    nl: int = 0

    # --------------------------------------------------------------- counts
    @property
    def n_trace(self) -> int:
        """Trace dofs plus the multiplier (size of the condensed system)."""
        return self.ndof - self.n_interior

    def count(self, name) -> int:
        return self.sizes[name]

    def describe(self, dof: int) -> str:
        """Human-readable location of a global dof."""
        for name, start in sorted(self.offsets.items(), key=lambda kv: kv[1], reverse=True):
            if dof >= start:
                return f"{name}[{dof - start}] (global {dof})"
        return f"global {dof}"

    # --------------------------------------------------------------- fields
    def to_fields(self, x, dirichlet=None):
        """Split a global vector into (u, B, p, r) WG fields and the multiplier."""
        mesh, k = self.mesh, self.k
        nk, nk1, nt = dim_poly(k), dim_poly(k - 1), k + 1
        nK, nE = mesh.n_elements, mesh.n_edges
        off = self.offsets
        g = lambda name, n: x[off[name]: off[name] + n]
        u_o = g("u_o", nK * 2 * nk).reshape(nK, 2, nk)
        B_o = g("B_o", nK * 2 * nk).reshape(nK, 2, nk)
        p_o = g("p_o", nK * nk1).reshape(nK, nk1)
        r_o = g("r_o", nK * nk1).reshape(nK, nk1)
        u_b = self._gather(x, self.trace_index["u"], self.trace_coef["u"])
        B_b = self._gather(x, self.trace_index["B"], self.trace_coef["B"])
        p_b = self._gather(x, self.trace_index["p"], self.trace_coef["p"])
        r_b = self._gather(x, self.trace_index["r"], self.trace_coef["r"])
        if dirichlet is not None:
            u_b = np.where(self.trace_index["u"] < 0, dirichlet, u_b)
        return (
            WGVectorField(mesh, u_o, u_b, k),
            WGVectorField(mesh, B_o, B_b, k),
            WGScalarField(mesh, p_o, p_b, k - 1, k),
            WGScalarField(mesh, r_o, r_b, k - 1, k),
            float(x[off["lambda"]]),
        )

    @staticmethod
    def _gather(x, index, coef):
        return np.where(index >= 0, coef * x[np.maximum(index, 0)], 0.0)

    def from_fields(self, u, B, p, r, lam=0.0):
        """Global vector of the free dofs of the given fields (eliminated values are dropped)."""
        x = np.zeros(self.ndof)
        off = self.offsets
        x[off["u_o"]: off["u_o"] + u.interior.size] = u.interior.ravel()
        x[off["B_o"]: off["B_o"] + B.interior.size] = B.interior.ravel()
        x[off["p_o"]: off["p_o"] + p.interior.size] = p.interior.ravel()
        x[off["r_o"]: off["r_o"] + r.interior.size] = r.interior.ravel()
        for name, tr in (("u", u.traces), ("B", B.traces), ("p", p.traces), ("r", r.traces)):
            idx, cf = self.trace_index[name], self.trace_coef[name]
            m = idx >= 0
            # the prolongation has orthonormal columns, so restriction is its transpose
            np.add.at(x, idx[m], cf[m] * tr[m])
        x[off["lambda"]] = lam
        return x


def build_dofmap(mesh: Mesh, k: int) -> DofMap:
    """Number the unknowns of V_h^0 x W_h^0 x Q_h^0 x R_h^0 plus the mean multiplier."""
    if k < 1:
        raise ValueError("k must be at least 1")
    nk, nk1, nt = dim_poly(k), dim_poly(k - 1), k + 1
    nK, nE = mesh.n_elements, mesh.n_edges
    bnd = mesh.boundary
    interior_edges = np.flatnonzero(~bnd)
    n_int = len(interior_edges)

    sizes = {
        "u_o": nK * 2 * nk,
        "B_o": nK * 2 * nk,
        "p_o": nK * nk1,
        "r_o": nK * nk1,
        "u_b": n_int * 2 * nt,
        "B_b": n_int * 2 * nt + int(bnd.sum()) * nt,
        "p_b": nE * nt,
        "r_b": n_int * nt,
        "lambda": 1,
    }
    offsets, pos = {}, 0
    for name in ("u_o", "B_o", "p_o", "r_o", "u_b", "B_b", "p_b", "r_b", "lambda"):
        offsets[name] = pos
        pos += sizes[name]
    ndof = pos
    n_interior = offsets["u_b"]

    # per-edge trace numbering (nE, [2,] nt)
    ub = -np.ones((nE, 2, nt), dtype=np.int64)
    ub[interior_edges] = offsets["u_b"] + np.arange(n_int * 2 * nt).reshape(n_int, 2, nt)
    rb = -np.ones((nE, nt), dtype=np.int64)
    rb[interior_edges] = offsets["r_b"] + np.arange(n_int * nt).reshape(n_int, nt)
    pb = offsets["p_b"] + np.arange(nE * nt).reshape(nE, nt)

    Bb = np.empty((nE, 2, nt), dtype=np.int64)
    Bc = np.ones((nE, 2, nt))
    cursor = offsets["B_b"]
    for e in range(nE):
        if bnd[e]:
            Bb[e] = cursor + np.arange(nt)[None, :]
            Bc[e] = mesh.edge_normals[e][:, None]
            cursor += nt
        else:
            Bb[e] = cursor + np.arange(2 * nt).reshape(2, nt)
            cursor += 2 * nt
    assert cursor == offsets["p_b"]

    trace_index = {"u": ub, "B": Bb, "p": pb, "r": rb}
    trace_coef = {
        "u": (ub >= 0).astype(float),
        "B": Bc,
        "p": np.ones((nE, nt)),
        "r": (rb >= 0).astype(float),
    }

    # element-local layout
    ns, nq = nk + 3 * nt, nk1 + 3 * nt
    layout = {
        "u": slice(0, 2 * ns),
        "B": slice(2 * ns, 4 * ns),
        "p": slice(4 * ns, 4 * ns + nq),
        "r": slice(4 * ns + nq, 4 * ns + 2 * nq),
        "lambda": 4 * ns + 2 * nq,
    }
    nl = 4 * ns + 2 * nq + 1
    index = np.empty((nK, nl), dtype=np.int64)
    coef = np.ones((nK, nl))
    ee = mesh.element_edges
    Kr = np.arange(nK)

    def vec_block(start, o_off, tidx, tcoef):
        for c in range(2):
            base = start + c * ns
            index[:, base: base + nk] = o_off + (Kr[:, None] * 2 + c) * nk + np.arange(nk)
            index[:, base + nk: base + ns] = tidx[ee, c].reshape(nK, -1)
            coef[:, base + nk: base + ns] = tcoef[ee, c].reshape(nK, -1)

    def scal_block(start, o_off, tidx, tcoef):
        index[:, start: start + nk1] = o_off + Kr[:, None] * nk1 + np.arange(nk1)
        index[:, start + nk1: start + nq] = tidx[ee].reshape(nK, -1)
        coef[:, start + nk1: start + nq] = tcoef[ee].reshape(nK, -1)

    vec_block(0, offsets["u_o"], ub, trace_coef["u"])
    vec_block(2 * ns, offsets["B_o"], Bb, Bc)
    scal_block(4 * ns, offsets["p_o"], pb, trace_coef["p"])
    scal_block(4 * ns + nq, offsets["r_o"], rb, trace_coef["r"])
    index[:, -1] = offsets["lambda"]
    coef[index < 0] = 0.0

    interior_local = np.zeros(nl, dtype=bool)
    for c in range(2):
        interior_local[c * ns: c * ns + nk] = True
        interior_local[2 * ns + c * ns: 2 * ns + c * ns + nk] = True
    interior_local[4 * ns: 4 * ns + nk1] = True
    interior_local[4 * ns + nq: 4 * ns + nq + nk1] = True
    return DofMap(mesh, k, offsets, sizes, index, coef, ndof, n_interior, layout,
                  trace_index, trace_coef, interior_local, ns, nq, nl)


@dataclass
class SparseSystem:
    """Global matrix and right-hand side of one Oseen step.

    ``local_matrix``, ``local_rhs`` are kept for condensation; ``local_rhs``
    already carries the lifted boundary values.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    local_matrix: np.ndarray
    local_rhs: np.ndarray
    dirichlet: np.ndarray | None = None


@dataclass
class CondensedSystem:
    """Trace-plus-multiplier Schur complement and the local recovery data."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    recover_matrix: np.ndarray   # K_II^-1 K_IT, (nK, nI, nT)
    recover_rhs: np.ndarray      # K_II^-1 F_I,  (nK, nI)


def local_oseen_blocks(ctx: FormContext, u_prev, B_prev, f, g, dofmap: DofMap, parts="all"):
    """Element matrices and load vectors of one Oseen step.

    ``parts`` selects ``"all"``, ``"magnetic"`` (B, r rows and columns only)
    or ``"fluid"`` (u, p, lambda; the magnetic coupling moved to the load
    vector by the caller).
    """
    lay = dofmap.layout
    nK, nl = ctx.mesh.n_elements, dofmap.nl
    U, Bs, P, R, L = lay["u"], lay["B"], lay["p"], lay["r"], lay["lambda"]
    Kl = np.zeros((nK, nl, nl))
    Fl = np.zeros((nK, nl))
    Rm = ctx.params.Rm
    if parts in ("all", "fluid"):
        Kl[:, U, U] = ctx.A + ctx.convection(u_prev)
        Kl[:, U, P] = ctx.Bmat
        Kl[:, P, U] = -ctx.Bmat.transpose(0, 2, 1)
        Kl[:, P, L] = ctx.pressure_mean
        Kl[:, L, P] = ctx.pressure_mean
        if f is not None:
            Fl[:, U] = ctx.load(f)
    if parts in ("all", "magnetic"):
        Kl[:, Bs, Bs] = ctx.Atilde + ctx.normal_closure
        Kl[:, Bs, R] = ctx.Bmat / Rm
        Kl[:, R, Bs] = -ctx.Bmat.transpose(0, 2, 1) / Rm
        Fl[:, Bs] = ctx.magnetic_source(u_prev, B_prev)
        if g is not None:
            Fl[:, Bs] += ctx.load(g, scale=1.0 / Rm)
    if parts == "all":
        Kl[:, U, Bs] = ctx.magnetic_coupling(B_prev)
    return Kl, Fl


def dirichlet_local(dofmap: DofMap, u_boundary):
    """Element vectors holding prescribed boundary traces of u (zero elsewhere)."""
    d = np.zeros((dofmap.mesh.n_elements, dofmap.nl))
    if u_boundary is None:
        return d
    ub = np.where(dofmap.trace_index["u"] < 0, u_boundary, 0.0)
    ee = dofmap.mesh.element_edges
    nk, ns = dim_poly(dofmap.k), dofmap.ns
    for c in range(2):
        d[:, c * ns + nk: (c + 1) * ns] = ub[ee, c].reshape(len(ee), -1)
    return d


def scatter(dofmap: DofMap, Kl, Fl, rows_mask=None, n=None, shift=0, index=None, coef=None):
    """Sum element blocks into a CSR matrix and a vector (deterministic order).

    An entry is stored when it or its transpose is nonzero, so the sparsity
    pattern is structurally symmetric even where only one coupling is active.
    """
    index = dofmap.index if index is None else index
    coef = dofmap.coef if coef is None else coef
    n = dofmap.ndof if n is None else n
    ri = np.broadcast_to(index[:, :, None], Kl.shape)
    ci = np.broadcast_to(index[:, None, :], Kl.shape)
    vals = Kl * coef[:, :, None] * coef[:, None, :]
    mask = (ri >= 0) & (ci >= 0) & ((vals != 0.0) | (vals.transpose(0, 2, 1) != 0.0))
    A = sp.coo_matrix((vals[mask], (ri[mask] - shift, ci[mask] - shift)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    fm = index >= 0
    b = np.bincount(index[fm] - shift, weights=(coef * Fl)[fm], minlength=n)
    return A, b


def assemble_oseen(ctx: FormContext, u_prev: WGVectorField, B_prev: WGVectorField, f, g,
                   dofmap: DofMap | None = None, u_boundary=None) -> SparseSystem:
    """Assemble the coupled Oseen system in (u, B, p, r, lambda).

    ``u_boundary`` optionally prescribes the velocity trace coefficients
    ``(nE, 2, k + 1)`` on boundary edges (lifted into the right-hand side).
    """
    ctx.check(u_prev, B_prev)
    dofmap = build_dofmap(ctx.mesh, ctx.k) if dofmap is None else dofmap
    if dofmap.mesh is not ctx.mesh:
        raise ValueError("dof map built for a different mesh")
    Kl, Fl = local_oseen_blocks(ctx, u_prev, B_prev, f, g, dofmap)
    d = dirichlet_local(dofmap, u_boundary)
    if u_boundary is not None:
        Fl = Fl - np.einsum("kij,kj->ki", Kl, d)
    A, b = scatter(dofmap, Kl, Fl)
    return SparseSystem(A, b, dofmap, Kl, Fl, None if u_boundary is None else np.asarray(u_boundary))


def condense(sys: SparseSystem) -> CondensedSystem:
    """Eliminate interior dofs element by element (Schur complement on traces + multiplier)."""
    dm = sys.dofmap
    I = dm.interior_local
    T = ~I
    Kl, Fl = sys.local_matrix, sys.local_rhs
    KII = Kl[:, I][:, :, I]
    KIT = Kl[:, I][:, :, T]
    KTI = Kl[:, T][:, :, I]
    KTT = Kl[:, T][:, :, T]
    rhs = np.concatenate([KIT, Fl[:, I, None]], axis=2)
    try:
        sol = np.linalg.solve(KII, rhs)
    except np.linalg.LinAlgError:
        bad = [K for K in range(len(KII)) if np.linalg.matrix_rank(KII[K]) < KII.shape[1]]
        raise SingularSystemError(f"interior block singular on element(s) {bad[:10]}") from None
    XT, XF = sol[:, :, :-1], sol[:, :, -1]
    S = KTT - KTI @ XT
    G = Fl[:, T] - np.einsum("kti,ki->kt", KTI, XF)
    A, b = scatter(dm, S, G, n=dm.n_trace, shift=dm.n_interior,
                   index=dm.index[:, T], coef=dm.coef[:, T])
    return CondensedSystem(A, b, dm, XT, XF)


def recover(csys: CondensedSystem, x_trace) -> np.ndarray:
    """Full global vector from the condensed solution."""
    dm = csys.dofmap
    T = ~dm.interior_local
    idx, cf = dm.index[:, T], dm.coef[:, T]
    xT = np.where(idx >= 0, cf * x_trace[np.maximum(idx - dm.n_interior, 0)], 0.0)
    xI = csys.recover_rhs - np.einsum("kit,kt->ki", csys.recover_matrix, xT)
    x = np.zeros(dm.ndof)
    x[dm.n_interior:] = x_trace
    iidx = dm.index[:, dm.interior_local]
    x[iidx] = xI  # interior dofs belong to exactly one element
    return x


def solve_linear(sys, rtol: float = 1e-10, refine: int = 4, lu=None) -> np.ndarray:
    """Sparse LU solve with a relative residual check.

    Accepts a :class:`SparseSystem`, a :class:`CondensedSystem` (returns the
    recovered full vector) or a ``(matrix, rhs)`` pair, for which an existing
    factorization ``lu`` may be reused.
    """
    if isinstance(sys, CondensedSystem):
        x_trace = _lu_solve(sys.matrix, sys.rhs, rtol, refine, sys.dofmap, sys.dofmap.n_interior,
                            kind="condensed")
        return recover(sys, x_trace)
    if isinstance(sys, SparseSystem):
        return _lu_solve(sys.matrix, sys.rhs, rtol, refine, sys.dofmap, 0)
    A, b = sys
    return _lu_solve(sp.csc_matrix(A), np.asarray(b, dtype=float), rtol, refine, None, 0, lu)


# Factorization settings per system kind.  On the condensed trace system,
# minimum degree on the pattern of A + A^T with a weak diagonal preference
# keeps the fill near that of a symmetric factorization; full partial
# pivoting there multiplies the fill by about ten.  The uncondensed system
# (interior unknowns included) factors best with COLAMD and partial pivoting.
LU_OPTIONS = {
    "condensed": ("MMD_AT_PLUS_A", 1e-4),
    "full": ("COLAMD", 1.0),
}
REFINE_TARGET = 1e-15


def factorize(A, dofmap=None, shift=0, kind="full"):
    """SuperLU factorization of ``A``; singular matrices raise :class:`SingularSystemError`."""
    permc_spec, thresh = LU_OPTIONS[kind]
    A = sp.csc_matrix(A)
    try:
        return spla.splu(A, permc_spec=permc_spec, diag_pivot_thresh=thresh)
    except RuntimeError as exc:
        empty = np.flatnonzero(np.diff(A.indptr) == 0)
        where = ""
        if len(empty):
            where = f"; empty column {_describe(dofmap, empty[0] + shift)}"
        raise SingularSystemError(f"sparse factorization failed: {exc}{where}") from None


def _describe(dofmap, dof):
    return dofmap.describe(int(dof)) if dofmap is not None else f"dof {int(dof)}"


def _lu_solve(A, b, rtol, refine, dofmap, shift, lu=None, kind="full"):
    if not np.any(b):
        return np.zeros_like(b)
    lu = factorize(A, dofmap, shift, kind) if lu is None else lu
    x = lu.solve(b)
    bn = np.linalg.norm(b)
    r = b - A @ x
    res = np.linalg.norm(r) / bn
    # refine towards round-off: the divergence constraints have zero
    # right-hand side and inherit the absolute residual
    for _ in range(refine):
        if res <= REFINE_TARGET:
            break
        x_new = x + lu.solve(r)
        r_new = b - A @ x_new
        res_new = np.linalg.norm(r_new) / bn
        if not res_new < res:
            break
        x, r, res = x_new, r_new, res_new
    if not np.isfinite(res) or res > rtol:
        diag = np.abs(lu.U.diagonal())
        j = int(np.argmin(diag))
        col = lu.perm_c[j] if hasattr(lu, "perm_c") else j
        raise SingularSystemError(
            f"linear solve residual {res:.3e} exceeds {rtol:.1e}; smallest pivot "
            f"{diag[j]:.3e} at {_describe(dofmap, col + shift)}")
    return x


def dump_matrix(matrix, path) -> None:
    """Write ``row col value`` lines (coordinate format)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines += [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
    Path(path).write_text("\n".join(lines) + "\n")


def inf_sup_surrogate(ctx: FormContext) -> float:
    """Smallest singular value of b_h measured in |||.|||_V and |||.|||_Q (dense; small meshes only).

    Returns ``min over mean-zero q of sup_v b_h(v, q) / (|||v|||_V |||q|||_Q)``.
    """
    dm = build_dofmap(ctx.mesh, ctx.k)
    lay, nl = dm.layout, dm.nl
    nK = ctx.mesh.n_elements
    d = ctx.disc
    U, P = lay["u"], lay["p"]
    Kv = np.zeros((nK, nl, nl))
    Kv[:, U, U] = ctx.A * ctx.params.Ha**2                # |||v|||_V^2
    Kq = np.zeros((nK, nl, nl))
    R = d.gradient_moments(ctx.k, ctx.k - 1)
    hq = np.einsum("k,ckji,kjl,cklm->kim", ctx.mesh.diameter**2, R, d.mass_inverse(ctx.k), R)
    nk1 = d.nk1
    hq[:, :nk1, :nk1] += d.mass[:, :nk1, :nk1]
    Kq[:, P, P] = hq
    Kb = np.zeros((nK, nl, nl))
    Kb[:, U, P] = ctx.Bmat
    zero = np.zeros((nK, nl))
    GV = scatter(dm, Kv, zero)[0].toarray()
    GQ = scatter(dm, Kq, zero)[0].toarray()
    Bg = scatter(dm, Kb, zero)[0].toarray()
    off = dm.offsets
    vsel = np.r_[off["u_o"]: off["u_o"] + dm.sizes["u_o"], off["u_b"]: off["u_b"] + dm.sizes["u_b"]]
    qsel = np.r_[off["p_o"]: off["p_o"] + dm.sizes["p_o"], off["p_b"]: off["p_b"] + dm.sizes["p_b"]]
    GV, GQ, Bg = GV[np.ix_(vsel, vsel)], GQ[np.ix_(qsel, qsel)], Bg[np.ix_(vsel, qsel)]
    # restrict q to the mean-zero subspace
    mean = np.zeros(len(qsel))
    mean[: dm.sizes["p_o"]] = ctx.pressure_mean[:, :nk1].ravel()
    Z = np.linalg.svd(mean[None, :])[2][1:].T
    S = Z.T @ Bg.T @ np.linalg.solve(GV, Bg) @ Z
    Q = Z.T @ GQ @ Z
    ev = sla.eigh(S, Q, eigvals_only=True)
    return float(np.sqrt(max(ev[0], 0.0)))
