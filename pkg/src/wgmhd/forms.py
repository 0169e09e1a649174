"""Local matrices, bilinear and trilinear forms, and the discrete energy norms.

Local matrices act on the element dof vectors described in
:mod:`wgmhd.weakops`.  The ``form_*`` functions evaluate the forms on whole
fields; the velocity and magnetic forms are computed from the cached local
matrices, while the trilinear forms and the norms are evaluated directly
at quadrature points so that they can serve as independent checks of the
assembled blocks.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh
from .weakops import Discretization, WGScalarField, WGVectorField, weak_divergence_of_values


@dataclass(frozen=True)
class PhysicalParams:
    """Hartmann number, interaction parameter, magnetic Reynolds number and order."""

    Ha: float = 1.0
    N: float = 1.0
    Rm: float = 1.0
    k: int = 1

    def __post_init__(self):
        for name in ("Ha", "N", "Rm"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k}")


def _blockdiag2(A):
    n = A.shape[-1]
    out = np.zeros(A.shape[:-2] + (2 * n, 2 * n))
    out[..., :n, :n] = A
    out[..., n:, n:] = A
    return out


TAU_LENGTHS = ("area", "diameter")


def stabilization_length(mesh: Mesh, kind: str = "area") -> np.ndarray:
    """Element length ``h_K`` entering ``tau = 1 / h_K``.

    ``"area"`` uses ``sqrt(2 |K|)``, which on the structured mesh equals the
    leg length ``1/n`` and reproduces the published tables; ``"diameter"``
    uses the longest edge.
    """
    if kind == "area":
        return np.sqrt(2.0 * mesh.area)
    if kind == "diameter":
        return mesh.diameter
    raise ValueError(f"unknown tau length {kind!r}; expected one of {TAU_LENGTHS}")


class FormContext:
    """Mesh, parameters and per-element caches shared by all forms."""

    def __init__(self, mesh: Mesh, params: PhysicalParams, disc: Discretization | None = None,
                 tau_length: str = "area"):
        self.mesh = mesh
        self.params = params
        self.disc = Discretization(mesh, params.k) if disc is None else disc
        if self.disc.k != params.k or self.disc.mesh is not mesh:
            raise ValueError("discretization does not match mesh/order")
        d = self.disc
        self.k = params.k
        self.ns = d.nk + d.nb          # local dofs of one degree-k scalar
        self.nq = d.nk1 + d.nb         # local dofs of one pressure-type scalar
        self.tau_length = tau_length
        self.tau = 1.0 / stabilization_length(mesh, tau_length)

    # ----------------------------------------------------------- fixed blocks
    @cached_property
    def stabilizer(self):
        """``<v_o - v_b, u_o - u_b>_dK`` for one scalar component, ``(nK, ns, ns)``."""
        d = self.disc
        return np.einsum("kew,kewi,kewj->kij", d.bw, d.jump, d.jump)

    @cached_property
    def tangential_stabilizer(self):
        """``<(w_o - w_b) x n, (B_o - B_b) x n>_dK``, ``(nK, 2 ns, 2 ns)``."""
        d = self.disc
        n = d.normals
        # (v x n) = v_0 n_1 - v_1 n_0
        X = np.concatenate([d.jump * n[:, :, None, 1, None], -d.jump * n[:, :, None, 0, None]], axis=3)
        return np.einsum("kew,kewi,kewj->kij", d.bw, X, X)

    @cached_property
    def A(self):
        """a_h local matrix, ``(nK, 2 ns, 2 ns)``."""
        d = self.disc
        R = d.gradient_moments(self.k - 1, self.k)
        minv = d.mass_inverse(self.k - 1)
        G = np.einsum("ckji,kjl,cklm->kim", R, minv, R)
        A = G + self.tau[:, None, None] * self.stabilizer
        return _blockdiag2(A) / self.params.Ha**2

    @cached_property
    def Atilde(self):
        """ã_h local matrix, ``(nK, 2 ns, 2 ns)``."""
        d = self.disc
        C = d.curl_moments(self.k - 1)
        minv = d.mass_inverse(self.k - 1)
        At = np.einsum("kji,kjl,klm->kim", C, minv, C)
        At = At + self.tau[:, None, None] * self.tangential_stabilizer
        return At / self.params.Rm**2

    @cached_property
    def normal_closure(self):
        """Trace-only equations fixing the normal component of B_b, ``(nK, 2 ns, 2 ns)``.

        No form of the scheme sees ``B_b . n``.  Rows tested with ``w_b``
        only impose ``sum_K <(B_b - B_o) . n, w_b . n>_e = 0``, so the normal
        trace becomes the edge average of the interior normal components
        while the equations of every other unknown are untouched.
        """
        d = self.disc
        n = d.normals[:, :, None, :]
        Jn = np.concatenate([d.jump * n[..., 0, None], d.jump * n[..., 1, None]], axis=3)
        Jb = Jn.copy()
        Jb[..., : d.nk] = 0.0
        Jb[..., self.ns: self.ns + d.nk] = 0.0
        M = np.einsum("kew,kewi,kewj->kij", d.bw, Jb, Jn)
        return self.tau[:, None, None] * M / self.params.Rm**2

    @cached_property
    def Bmat(self):
        """b_h local matrix, rows velocity ``(2 ns)``, columns pressure ``(nq)``.

        ``b_h(v, q) = v_loc^T Bmat q_loc``; b̃_h is ``Bmat / Rm``.
        """
        d = self.disc
        R = d.gradient_moments(self.k, self.k - 1)  # (2, nK, nk, nq)
        out = np.zeros((self.mesh.n_elements, 2 * self.ns, self.nq))
        out[:, : d.nk] = R[0]
        out[:, self.ns: self.ns + d.nk] = R[1]
        return out

    @cached_property
    def pressure_mean(self):
        """``int_K psi_j`` for the interior pressure basis, ``(nK, nq)`` (zero on traces)."""
        d = self.disc
        out = np.zeros((self.mesh.n_elements, self.nq))
        out[:, : d.nk1] = np.einsum("kq,kqj->kj", d.qw, d.phi[..., : d.nk1])
        return out

    # ------------------------------------------------------ state dependent
    def convection(self, phi: WGVectorField):
        """c_h(Φ; ·, ·) local matrix ``(nK, 2 ns, 2 ns)``, rows test, columns trial."""
        d = self.disc
        po = d.eval_interior(phi.interior)                        # (nK, nq, 2)
        pb = np.einsum("wl,kecl->kewc", d.chi, phi.traces[self.mesh.element_edges])
        pbn = np.einsum("kewc,kec->kew", pb, d.normals)
        T = np.einsum("kq,kqj,kqc,kqlc->kjl", d.qw, d.phi, po, d.dphi)
        E = np.einsum("kew,kewj,wl,kew->kjel", d.bw, d.bphi, d.chi, pbn).reshape(
            self.mesh.n_elements, d.nk, d.nb)
        C = np.zeros((self.mesh.n_elements, self.ns, self.ns))
        C[:, : d.nk, : d.nk] = T - T.transpose(0, 2, 1)
        C[:, : d.nk, d.nk:] = E
        C[:, d.nk:, : d.nk] = -E.transpose(0, 2, 1)
        return _blockdiag2(C) / (2.0 * self.params.N)

    def magnetic_coupling(self, B_prev: WGVectorField):
        """c̃_h(v; B_prev, B) local matrix, rows velocity, columns magnetic ``(nK, 2 ns, 2 ns)``."""
        d = self.disc
        bo = d.eval_interior(B_prev.interior)                      # (nK, nq, 2)
        # v_o x B = v_0 B_1 - v_1 B_0
        Y0 = np.einsum("kq,kqi,kqj,kq->kij", d.qw, d.phi, d.phi, bo[..., 1])
        Y1 = -np.einsum("kq,kqi,kqj,kq->kij", d.qw, d.phi, d.phi, bo[..., 0])
        W = np.einsum("kij,kjl->kil", d.mass_inverse(self.k), d.curl_moments(self.k))
        out = np.zeros((self.mesh.n_elements, 2 * self.ns, 2 * self.ns))
        out[:, : d.nk] = Y0 @ W
        out[:, self.ns: self.ns + d.nk] = Y1 @ W
        return out / self.params.Rm

    def magnetic_source(self, u_prev: WGVectorField, B_prev: WGVectorField):
        """Load vector of w -> c̃_h(u_prev; B_prev, w), ``(nK, 2 ns)``."""
        d = self.disc
        uo = d.eval_interior(u_prev.interior)
        bo = d.eval_interior(B_prev.interior)
        cross = uo[..., 0] * bo[..., 1] - uo[..., 1] * bo[..., 0]
        z = np.einsum("kq,kqj,kq->kj", d.qw, d.phi, cross)
        y = np.einsum("kij,kj->ki", d.mass_inverse(self.k), z)
        return np.einsum("kil,ki->kl", d.curl_moments(self.k), y) / self.params.Rm

    def load(self, func, scale=1.0):
        """``(func, v_o)`` for a vector callable, as a ``(nK, 2 ns)`` load vector."""
        d = self.disc
        vals = np.asarray(func(d.qx), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("forcing evaluated to a non-finite value")
        out = np.zeros((self.mesh.n_elements, 2 * self.ns))
        F = np.einsum("kq,kqj,kqc->kcj", d.qw, d.phi, vals)
        out[:, : d.nk] = F[:, 0]
        out[:, self.ns: self.ns + d.nk] = F[:, 1]
        return scale * out

    def check(self, *fields):
        for f in fields:
            if f.mesh is not self.mesh:
                raise ValueError("field lives on a different mesh")
            deg = f.degree if isinstance(f, WGVectorField) else f.trace_degree
            if deg != self.k:
                raise ValueError(f"field degree {deg} does not match k={self.k}")


# ---------------------------------------------------------------------------
# forms on fields


def _bilinear(M, u, v):
    return float(np.einsum("ki,kij,kj->", v.local(), M, u.local()))


def form_a(ctx: FormContext, u: WGVectorField, v: WGVectorField) -> float:
    ctx.check(u, v)
    return _bilinear(ctx.A, u, v)


def form_atilde(ctx: FormContext, B: WGVectorField, w: WGVectorField) -> float:
    ctx.check(B, w)
    return _bilinear(ctx.Atilde, B, w)


def _check_pressure(ctx, q):
    if q.mesh is not ctx.mesh:
        raise ValueError("field lives on a different mesh")
    if q.interior_degree != ctx.k - 1 or q.trace_degree != ctx.k:
        raise ValueError("pressure-type field must have interior degree k-1 and trace degree k")


def form_b(ctx: FormContext, v: WGVectorField, q: WGScalarField) -> float:
    """(weak gradient of q, v_o), evaluated through the weak gradient coefficients."""
    ctx.check(v)
    _check_pressure(ctx, q)
    d = ctx.disc
    g = d.weak_gradient(q, ctx.k)                                   # (nK, 2, nk)
    return float(np.einsum("kci,kij,kcj->", v.interior, d.mass, g))


def form_btilde(ctx: FormContext, w: WGVectorField, theta: WGScalarField) -> float:
    return form_b(ctx, w, theta) / ctx.params.Rm


def _tensor_divergence_pair(ctx, phi, u, v):
    d = ctx.disc
    ee = ctx.mesh.element_edges
    po = d.eval_interior(phi.interior)
    pb = np.einsum("wl,kecl->kewc", d.chi, phi.traces[ee])
    uo = d.eval_interior(u.interior)
    ub = np.einsum("wl,kecl->kewc", d.chi, u.traces[ee])
    total = 0.0
    for c in range(2):
        div = weak_divergence_of_values(d, ctx.k, uo[..., c, None] * po, ub[..., c, None] * pb)
        total += np.einsum("ki,kij,kj->", v.interior[:, c], d.mass, div)
    return total


def form_c(ctx: FormContext, phi: WGVectorField, u: WGVectorField, v: WGVectorField) -> float:
    """Skew-symmetrized convection form from tensor weak divergences."""
    ctx.check(phi, u, v)
    val = _tensor_divergence_pair(ctx, phi, u, v) - _tensor_divergence_pair(ctx, phi, v, u)
    return float(val / (2.0 * ctx.params.N))


def form_ctilde(ctx: FormContext, v: WGVectorField, B: WGVectorField, w: WGVectorField) -> float:
    """(1/Rm) (weak curl of w, v_o x B_o), with the cross product taken at quadrature points."""
    ctx.check(v, B, w)
    d = ctx.disc
    curl = d.eval_interior(d.weak_curl(w, ctx.k))
    vo = d.eval_interior(v.interior)
    bo = d.eval_interior(B.interior)
    cross = vo[..., 0] * bo[..., 1] - vo[..., 1] * bo[..., 0]
    return float(np.einsum("kq,kq,kq->", d.qw, curl, cross) / ctx.params.Rm)


# ---------------------------------------------------------------------------
# norms


def _l2sq(d, values):
    sq = values**2
    return float(np.einsum("kq,kq->", d.qw, sq.reshape(sq.shape[:2] + (-1,)).sum(axis=2)))


def _jump_values(d, field: WGVectorField):
    ee = d.mesh.element_edges
    vo = np.einsum("kewj,kcj->kewc", d.bphi, field.interior)
    vb = np.einsum("wl,kecl->kewc", d.chi, field.traces[ee])
    return vo - vb


def norm_V(ctx: FormContext, v: WGVectorField) -> float:
    d = ctx.disc
    g = d.eval_interior(d.weak_vector_gradient(v, ctx.k - 1))
    jump = _jump_values(d, v)
    s = np.einsum("k,kew,kewc->", ctx.tau, d.bw, jump**2)
    return float(np.sqrt(_l2sq(d, g) + s))


def norm_W(ctx: FormContext, w: WGVectorField) -> float:
    d = ctx.disc
    z = d.eval_interior(d.weak_curl(w, ctx.k - 1))
    jump = _jump_values(d, w)
    n = d.normals[:, :, None, :]
    tj = jump[..., 0] * n[..., 1] - jump[..., 1] * n[..., 0]
    s = np.einsum("k,kew,kew->", ctx.tau, d.bw, tj**2)
    return float(np.sqrt(_l2sq(d, z) + s))


def _pressure_norm(ctx, q, subtract_mean):
    _check_pressure(ctx, q)
    d = ctx.disc
    qo = d.eval_interior(q.interior)
    if subtract_mean:
        qo = qo - np.einsum("kq,kq->", d.qw, qo) / ctx.mesh.area.sum()
    g = d.eval_interior(d.weak_gradient(q, ctx.k))
    hg = np.einsum("kq,k,kqc->", d.qw, ctx.mesh.diameter**2, g**2)
    return float(np.sqrt(_l2sq(d, qo) + hg))


def norm_Q(ctx: FormContext, q: WGScalarField) -> float:
    return _pressure_norm(ctx, q, subtract_mean=False)


def norm_R(ctx: FormContext, theta: WGScalarField) -> float:
    return _pressure_norm(ctx, theta, subtract_mean=True)
