"""Discrete weak gradient, divergence and curl, and the projections they commute with.

All operators are assembled for every element at once from two moment
tables.  For a target space P_m(K) with basis psi_j and an interior space
with basis phi_i,

    Io[c][j, i]      = (phi_i, d_c psi_j)_K
    Ib[c][j, (e, l)] = <chi_l, psi_j n_c>_e      (e a local edge of K)

and then, per component c of the result,

    weak gradient   M_m g_c = -Io[c] v_o + Ib[c] v_b
    weak divergence M_m d   = sum_c (-Io[c] w_oc + Ib[c] w_bc)
    weak curl       M_m z   = Io[1] w_o0 - Ib[1] w_b0 - Io[0] w_o1 + Ib[0] w_b1

The curl of a scalar test function is (d_y phi, -d_x phi), and the boundary
term of the weak curl is <n x w_b, phi> with n x w = n_0 w_1 - n_1 w_0, which
is the sign that integration by parts produces for the 2D cross product
v x w = v_0 w_1 - v_1 w_0.

A scalar field's local dof vector is ``[interior | edge 0 | edge 1 | edge 2]``;
a vector field's is the concatenation of its two components.  Trace
coefficients are Legendre coefficients in the global edge parameter, so
both neighbours of an edge read the same numbers.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh
from .polybasis import (
    dim_poly,
    edge_quadrature,
    edge_quadrature_points,
    element_quadrature_points,
    eval_edge_basis,
    eval_monomials,
    monomial_exponents,
    triangle_quadrature,
)

# exactness of the rules used to project non-polynomial data
PROJECTION_DEGREE = 16


@dataclass
class WGScalarField:
    """Piecewise polynomial pair {q_o, q_b}.

    ``interior`` has shape ``(nK, dim P_d)``, ``traces`` shape ``(nE, k + 1)``.
    """

    mesh: Mesh
    interior: np.ndarray
    traces: np.ndarray
    interior_degree: int
    trace_degree: int

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=float)
        self.traces = np.asarray(self.traces, dtype=float)
        if self.interior.shape != (self.mesh.n_elements, dim_poly(self.interior_degree)):
            raise ValueError(f"interior coefficients have shape {self.interior.shape}")
        if self.traces.shape != (self.mesh.n_edges, self.trace_degree + 1):
            raise ValueError(f"trace coefficients have shape {self.traces.shape}")

    @classmethod
    def zeros(cls, mesh, interior_degree, trace_degree):
        return cls(mesh, np.zeros((mesh.n_elements, dim_poly(interior_degree))),
                   np.zeros((mesh.n_edges, trace_degree + 1)), interior_degree, trace_degree)

    def local(self) -> np.ndarray:
        """Local dof vectors ``(nK, dim P_d + 3 (k + 1))``."""
        tr = self.traces[self.mesh.element_edges].reshape(self.mesh.n_elements, -1)
        return np.concatenate([self.interior, tr], axis=1)

    def __add__(self, other):
        return WGScalarField(self.mesh, self.interior + other.interior,
                             self.traces + other.traces, self.interior_degree, self.trace_degree)

    def __mul__(self, alpha):
        return WGScalarField(self.mesh, alpha * self.interior, alpha * self.traces,
                             self.interior_degree, self.trace_degree)

    __rmul__ = __mul__


@dataclass
class WGVectorField:
    """Two-component WG field; ``interior`` is ``(nK, 2, dim P_k)``, ``traces`` ``(nE, 2, k + 1)``."""

    mesh: Mesh
    interior: np.ndarray
    traces: np.ndarray
    degree: int

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=float)
        self.traces = np.asarray(self.traces, dtype=float)
        if self.interior.shape != (self.mesh.n_elements, 2, dim_poly(self.degree)):
            raise ValueError(f"interior coefficients have shape {self.interior.shape}")
        if self.traces.shape != (self.mesh.n_edges, 2, self.degree + 1):
            raise ValueError(f"trace coefficients have shape {self.traces.shape}")

    @classmethod
    def zeros(cls, mesh, k):
        return cls(mesh, np.zeros((mesh.n_elements, 2, dim_poly(k))),
                   np.zeros((mesh.n_edges, 2, k + 1)), k)

    def component(self, c) -> WGScalarField:
        return WGScalarField(self.mesh, self.interior[:, c], self.traces[:, c], self.degree, self.degree)

    def local(self) -> np.ndarray:
        return np.concatenate([self.component(0).local(), self.component(1).local()], axis=1)

    def __add__(self, other):
        return WGVectorField(self.mesh, self.interior + other.interior,
                             self.traces + other.traces, self.degree)

    def __mul__(self, alpha):
        return WGVectorField(self.mesh, alpha * self.interior, alpha * self.traces, self.degree)

    __rmul__ = __mul__


@dataclass(frozen=True)
class LocalWeakOperator:
    """Matrix from the local dofs of one element to coefficients in P_m (per component)."""

    element: int
    target_degree: int
    kind: str
    matrix: np.ndarray

    def __call__(self, local_dofs):
        return self.matrix @ np.asarray(local_dofs)


class Discretization:
    """Per-element quadrature, basis tables, mass matrices and weak operators.

    Parameters
    ----------
    mesh : Mesh
    k : int
        Polynomial order (k >= 1).
    quad_degree : int, optional
        Exactness of interior and edge rules; defaults to ``max(3k + 2, 2k + 4)``.
    """

    def __init__(self, mesh: Mesh, k: int, quad_degree: int | None = None):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.mesh = mesh
        self.k = k
        self.quad_degree = max(3 * k + 2, 2 * k + 4) if quad_degree is None else quad_degree
        self.nk = dim_poly(k)
        self.nk1 = dim_poly(k - 1)
        self.nt = k + 1
        self.nb = 3 * self.nt

        c = mesh.centroid
        h = mesh.diameter
        self.qx, self.qw = element_quadrature_points(mesh, triangle_quadrature(self.quad_degree))
        self.phi, self.dphi = eval_monomials(self.qx, c[:, None], h[:, None], k)

        erule = edge_quadrature(self.quad_degree)
        ex, ew = edge_quadrature_points(mesh, erule)
        self.edge_t = erule.points
        self.edge_x = ex                                   # (nE, nqe, 2)
        self.edge_w = ew                                   # (nE, nqe)
        self.chi = eval_edge_basis(erule.points, k)        # (nqe, k + 1)
        ee = mesh.element_edges
        self.bx = ex[ee]                                   # (nK, 3, nqe, 2)
        self.bw = ew[ee]                                   # (nK, 3, nqe)
        self.bphi = eval_monomials(self.bx, c[:, None, None], h[:, None, None], k,
                                   derivatives=False)      # (nK, 3, nqe, nk)
        self.normals = mesh.normals                        # (nK, 3, 2)

        self.mass = np.einsum("kq,kqi,kqj->kij", self.qw, self.phi, self.phi)
        self._minv = np.linalg.inv(self.mass)
        self._minv1 = np.linalg.inv(self.mass[:, : self.nk1, : self.nk1])

    # ------------------------------------------------------------------ tables
    def n_poly(self, m):
        return dim_poly(m)

    def mass_inverse(self, m):
        if m == self.k:
            return self._minv
        if m == self.k - 1:
            return self._minv1
        raise ValueError(f"target degree must be k or k-1, got {m}")

    @cached_property
    def _io(self):
        # Io[c][K, j, i] = (phi_i, d_c psi_j) with i, j over P_k
        return np.einsum("kq,kqi,kqjc->ckji", self.qw, self.phi, self.dphi)

    @cached_property
    def _ib(self):
        # Ib[c][K, j, e, l] = <chi_l, psi_j n_c>_e
        ib = np.einsum("kew,kewj,wl,kec->ckjel", self.bw, self.bphi, self.chi, self.normals)
        return ib.reshape(2, self.mesh.n_elements, self.nk, self.nb)

    def moments(self, m, d):
        """Moment blocks ``(Io, Ib)`` for target degree ``m`` and interior degree ``d``."""
        nm, nd = dim_poly(m), dim_poly(d)
        return self._io[:, :, :nm, :nd], self._ib[:, :, :nm, :]

    def gradient_moments(self, m, d):
        """``R[c]`` with ``(grad_w q, psi_j e_c) = (R[c] q_loc)_j``; shape ``(2, nK, n_m, n_d + nb)``."""
        io, ib = self.moments(m, d)
        return np.concatenate([-io, ib], axis=3)

    def divergence_moments(self, m):
        io, ib = self.moments(m, self.k)
        return np.concatenate([-io[0], ib[0], -io[1], ib[1]], axis=2)

    def curl_moments(self, m):
        io, ib = self.moments(m, self.k)
        return np.concatenate([io[1], -ib[1], -io[0], ib[0]], axis=2)

    def gradient_operator(self, m, d):
        """Weak gradient coefficient map, ``(2, nK, n_m, n_d + nb)``."""
        return np.einsum("kij,ckjl->ckil", self.mass_inverse(m), self.gradient_moments(m, d))

    def divergence_operator(self, m):
        return np.einsum("kij,kjl->kil", self.mass_inverse(m), self.divergence_moments(m))

    def curl_operator(self, m):
        return np.einsum("kij,kjl->kil", self.mass_inverse(m), self.curl_moments(m))

    @cached_property
    def jump(self):
        """Values of ``v_o - v_b`` at edge points: ``(nK, 3, nqe, nk + nb)`` for a scalar degree-k field."""
        nK, nqe = self.mesh.n_elements, len(self.edge_t)
        J = np.zeros((nK, 3, nqe, self.nk + self.nb))
        J[..., : self.nk] = self.bphi
        for e in range(3):
            J[:, e, :, self.nk + e * self.nt: self.nk + (e + 1) * self.nt] = -self.chi
        return J

    # ------------------------------------------------------------ field level
    def weak_gradient(self, field: WGScalarField, m: int) -> np.ndarray:
        """Coefficients ``(nK, 2, n_m)`` of the weak gradient of a scalar field."""
        G = self.gradient_operator(m, field.interior_degree)
        return np.einsum("ckil,kl->kci", G, field.local())

    def weak_vector_gradient(self, field: WGVectorField, m: int) -> np.ndarray:
        """Row-wise weak gradient ``(nK, 2, 2, n_m)``: ``[K, component, direction]``."""
        return np.stack([self.weak_gradient(field.component(c), m) for c in range(2)], axis=1)

    def weak_divergence(self, field: WGVectorField, m: int) -> np.ndarray:
        return np.einsum("kil,kl->ki", self.divergence_operator(m), field.local())

    def weak_curl(self, field: WGVectorField, m: int) -> np.ndarray:
        return np.einsum("kil,kl->ki", self.curl_operator(m), field.local())

    def local_operator(self, kind, element, m, d=None) -> LocalWeakOperator:
        if kind == "gradient":
            mat = self.gradient_operator(m, self.k if d is None else d)[:, element]
            mat = np.concatenate([mat[0], mat[1]], axis=0)
        elif kind == "divergence":
            mat = self.divergence_operator(m)[element]
        elif kind == "curl":
            mat = self.curl_operator(m)[element]
        else:
            raise ValueError(f"unknown operator {kind!r}")
        return LocalWeakOperator(int(element), m, kind, mat)

    # ----------------------------------------------------------- evaluation
    def eval_interior(self, coeffs, points=None):
        """Evaluate piecewise coefficients ``(nK, ..., n)`` at the interior quadrature points."""
        n = coeffs.shape[-1]
        if points is None:
            return np.einsum("kqi,k...i->kq...", self.phi[..., :n], coeffs)
        c, h = self.mesh.centroid, self.mesh.diameter
        V = eval_monomials(points, c[:, None], h[:, None], dim_degree(n), derivatives=False)
        return np.einsum("kqi,k...i->kq...", V, coeffs)

    def eval_traces(self, traces):
        """Trace coefficients ``(nE, ..., k + 1)`` at edge quadrature points ``(nE, nqe, ...)``."""
        return np.einsum("ql,e...l->eq...", self.chi[:, : traces.shape[-1]], traces)

    def project_interior(self, func, s, points=None, weights=None):
        """Elementwise L2 projection onto P_s; ``func(points)`` returns ``(..., )`` or ``(..., ncomp)``."""
        if points is None:
            points, weights = self.qx, self.qw
        return project_interior(self.mesh, func, s, points=points, weights=weights)

    def project_edges(self, func, s=None, quad_degree=None):
        """Edgewise L2 projection onto P_s(e); returns ``(nE, s + 1)`` or ``(nE, ncomp, s + 1)``."""
        s = self.k if s is None else s
        if quad_degree is None:
            x, w, chi = self.edge_x, self.edge_w, self.chi[:, : s + 1]
        else:
            rule = edge_quadrature(quad_degree)
            x, w = edge_quadrature_points(self.mesh, rule)
            chi = eval_edge_basis(rule.points, s)
        return project_edges(self.mesh, func, s, x, w, chi)


def dim_degree(n):
    """Inverse of ``dim_poly``."""
    s = 0
    while dim_poly(s) < n:
        s += 1
    if dim_poly(s) != n:
        raise ValueError(f"{n} is not the dimension of a full polynomial space")
    return s


def project_interior(mesh, func, s, quad_degree=None, points=None, weights=None):
    """L2 projection of ``func`` onto P_s on every element.

    Returns ``(nK, n_s)`` for scalar functions and ``(nK, ncomp, n_s)`` for
    functions returning a trailing component axis.
    """
    if points is None:
        q = max(2 * s + 4, PROJECTION_DEGREE) if quad_degree is None else quad_degree
        points, weights = element_quadrature_points(mesh, triangle_quadrature(q))
    V = eval_monomials(points, mesh.centroid[:, None], mesh.diameter[:, None], s, derivatives=False)
    M = np.einsum("kq,kqi,kqj->kij", weights, V, V)
    vals = np.asarray(func(points), dtype=float)
    rhs = np.einsum("kq,kqi,kq...->k...i", weights, V, vals)
    return np.einsum("kij,k...j->k...i", np.linalg.inv(M), rhs)


def project_edges(mesh, func, s, points=None, weights=None, chi=None):
    """L2 projection onto P_s(e) on every edge (Legendre coefficients)."""
    if points is None:
        rule = edge_quadrature(max(2 * s + 4, PROJECTION_DEGREE))
        points, weights = edge_quadrature_points(mesh, rule)
        chi = eval_edge_basis(rule.points, s)
    vals = np.asarray(func(points), dtype=float)
    rhs = np.einsum("eq,ql,eq...->e...l", weights, chi, vals)
    scale = (2 * np.arange(s + 1) + 1) / mesh.edge_lengths[:, None]
    return rhs * scale.reshape((len(scale),) + (1,) * (rhs.ndim - 2) + (s + 1,))


def l2_project_interior(mesh, element, func, s, quad_degree=None):
    """Q^o_s on a single element; ``func`` maps ``(n, 2)`` points to values."""
    K = int(element)
    rule = triangle_quadrature(max(2 * s + 4, PROJECTION_DEGREE) if quad_degree is None else quad_degree)
    xy = mesh.vertices[mesh.elements[K]]
    pts = xy[0] + rule.points @ np.column_stack([xy[1] - xy[0], xy[2] - xy[0]]).T
    w = rule.weights * 2.0 * mesh.area[K]
    V = eval_monomials(pts, mesh.centroid[K], mesh.diameter[K], s, derivatives=False)
    M = (V * w[:, None]).T @ V
    vals = np.asarray(func(pts), dtype=float)
    rhs = np.einsum("q,qi,q...->...i", w, V, vals)
    return np.linalg.solve(M, rhs.T).T if rhs.ndim > 1 else np.linalg.solve(M, rhs)


def l2_project_edge(mesh, edge, func, s, quad_degree=None):
    """Q^b_s on a single edge, Legendre coefficients in the global edge parameter."""
    e = int(edge)
    rule = edge_quadrature(max(2 * s + 4, PROJECTION_DEGREE) if quad_degree is None else quad_degree)
    a, b = mesh.vertices[mesh.edges[e]]
    pts = a + rule.points[:, None] * (b - a)
    chi = eval_edge_basis(rule.points, s)
    vals = np.asarray(func(pts), dtype=float)
    rhs = np.einsum("q,ql,q...->...l", rule.weights, chi, vals)
    return rhs * (2 * np.arange(s + 1) + 1)


# ---------------------------------------------------------------------------
# Raviart-Thomas projection


@dataclass(frozen=True)
class RTFunction:
    """Element of RT_s(K) = [P_s]^2 + xhat * (homogeneous P_s), xhat = (x - x_K) / h_K.

    ``poly`` holds the [P_s]^2 coefficients ``(2, n_s)`` and ``tail`` the
    ``s + 1`` coefficients of the homogeneous part.
    """

    element: int
    degree: int
    centroid: np.ndarray
    h: float
    poly: np.ndarray
    tail: np.ndarray

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        s = self.degree
        V = eval_monomials(points, self.centroid, self.h, s, derivatives=False)
        out = np.einsum("...i,ci->...c", V, self.poly)
        hom = V[..., dim_poly(s - 1):] @ self.tail
        xhat = (points - self.centroid) / self.h
        return out + xhat * hom[..., None]

    def divergence(self, points):
        points = np.asarray(points, dtype=float)
        s = self.degree
        V, dV = eval_monomials(points, self.centroid, self.h, s)
        out = np.einsum("...i,i->...", dV[..., 0], self.poly[0])
        out += np.einsum("...i,i->...", dV[..., 1], self.poly[1])
        # div(xhat p) = (2 + s) p / h for p homogeneous of degree s in xhat
        return out + (s + 2) * (V[..., dim_poly(s - 1):] @ self.tail) / self.h


def _rt_basis(points, centroid, h, s):
    """RT_s basis values ``(..., dim, 2)``."""
    V = eval_monomials(points, centroid, h, s, derivatives=False)
    n = V.shape[-1]
    zeros = np.zeros_like(V)
    first = np.stack([V, zeros], axis=-1)
    second = np.stack([zeros, V], axis=-1)
    xhat = (np.asarray(points) - centroid) / h
    hom = V[..., dim_poly(s - 1):]
    tail = hom[..., None] * xhat[..., None, :]
    assert first.shape[-2] == n
    return np.concatenate([first, second, tail], axis=-2)


def rt_project(mesh, element, func, s, quad_degree=None) -> RTFunction:
    """Raviart-Thomas projection onto RT_s(K).

    The defining moments are the normal moments on each edge against
    P_s(e) and the interior moments against [P_(s-1)(K)]^2, which is the
    unisolvent set for RT_s.
    """
    if s < 0:
        raise ValueError("degree must be non-negative")
    K = int(element)
    q = max(2 * s + 4, PROJECTION_DEGREE) if quad_degree is None else quad_degree
    c, h = mesh.centroid[K], mesh.diameter[K]
    xy = mesh.vertices[mesh.elements[K]]

    rows, rhs = [], []
    erule = edge_quadrature(q)
    chi = eval_edge_basis(erule.points, s)
    for i in range(3):
        e = mesh.element_edges[K, i]
        a, b = mesh.vertices[mesh.edges[e]]
        pts = a + erule.points[:, None] * (b - a)
        w = erule.weights * mesh.edge_lengths[e]
        n = mesh.normals[K, i]
        Phi = _rt_basis(pts, c, h, s) @ n                  # (nq, dim)
        fn = np.asarray(func(pts), dtype=float) @ n
        rows.append(np.einsum("q,ql,qd->ld", w, chi, Phi))
        rhs.append(np.einsum("q,ql,q->l", w, chi, fn))
    if s >= 1:
        rule = triangle_quadrature(q)
        pts = xy[0] + rule.points @ np.column_stack([xy[1] - xy[0], xy[2] - xy[0]]).T
        w = rule.weights * 2.0 * mesh.area[K]
        V = eval_monomials(pts, c, h, s - 1, derivatives=False)
        Phi = _rt_basis(pts, c, h, s)                      # (nq, dim, 2)
        fv = np.asarray(func(pts), dtype=float)
        for comp in range(2):
            rows.append(np.einsum("q,qj,qd->jd", w, V, Phi[..., comp]))
            rhs.append(np.einsum("q,qj,q->j", w, V, fv[:, comp]))
    A = np.concatenate(rows, axis=0)
    r = np.concatenate(rhs)
    try:
        x = np.linalg.solve(A, r)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"RT moment system singular on element {K}") from exc
    ns = dim_poly(s)
    return RTFunction(K, s, c.copy(), float(h), x[: 2 * ns].reshape(2, ns), x[2 * ns:])


# ---------------------------------------------------------------------------
# single-element conveniences mirroring the definitions


def _local_scalar(disc, element, interior, traces):
    traces = np.asarray(traces, dtype=float)
    if traces.shape != (3, disc.nt):
        raise ValueError(f"expected trace coefficients of shape (3, {disc.nt}), got {traces.shape}")
    return np.concatenate([np.asarray(interior, dtype=float), traces.ravel()])


def weak_gradient(disc: Discretization, element, interior, traces, m):
    """Weak gradient on one element; returns ``(2, n_m)`` coefficients.

    ``interior`` are P_d coefficients (d is inferred), ``traces`` the
    ``(3, k + 1)`` Legendre coefficients on the element's local edges.
    """
    d = dim_degree(len(interior))
    G = disc.gradient_operator(m, d)[:, element]
    return G @ _local_scalar(disc, element, interior, traces)


def weak_divergence(disc: Discretization, element, interior, traces, m):
    """Weak divergence of a vector pair; ``interior`` ``(2, n_k)``, ``traces`` ``(2, 3, k + 1)``."""
    loc = np.concatenate([_local_scalar(disc, element, interior[c], traces[c]) for c in range(2)])
    return disc.divergence_operator(m)[element] @ loc


def weak_curl(disc: Discretization, element, interior, traces, m):
    """Scalar weak curl of a vector pair; same layout as :func:`weak_divergence`."""
    loc = np.concatenate([_local_scalar(disc, element, interior[c], traces[c]) for c in range(2)])
    return disc.curl_operator(m)[element] @ loc


def weak_divergence_of_values(disc: Discretization, m, interior_values, trace_values):
    """Weak divergence from values at quadrature points (tensor rows of any degree).

    ``interior_values`` is ``(nK, nq, 2)`` at ``disc.qx`` and ``trace_values``
    ``(nK, 3, nqe, 2)`` at ``disc.bx``.  Returns ``(nK, n_m)``.
    """
    nm = dim_poly(m)
    mom = -np.einsum("kq,kqc,kqjc->kj", disc.qw, interior_values, disc.dphi[..., :nm, :])
    wn = np.einsum("kewc,kec->kew", trace_values, disc.normals)
    mom += np.einsum("kew,kew,kewj->kj", disc.bw, wn, disc.bphi[..., :nm])
    return np.einsum("kij,kj->ki", disc.mass_inverse(m), mom)


def weak_gradient_of_values(disc: Discretization, m, interior_values, trace_values):
    """Weak gradient from values at quadrature points; returns ``(nK, 2, n_m)``."""
    nm = dim_poly(m)
    mom = -np.einsum("kq,kq,kqjc->kcj", disc.qw, interior_values, disc.dphi[..., :nm, :])
    mom += np.einsum("kew,kew,kewj,kec->kcj", disc.bw, trace_values, disc.bphi[..., :nm], disc.normals)
    return np.einsum("kij,kcj->kci", disc.mass_inverse(m), mom)


def divergence_exact_coeffs(coeffs, mesh, k):
    """Classical divergence of piecewise [P_k]^2 coefficients ``(nK, 2, n_k)`` in P_(k-1) coefficients.

    Uses exact differentiation of the scaled monomials.
    """
    exps = monomial_exponents(k)
    lower = {tuple(e): i for i, e in enumerate(monomial_exponents(max(k - 1, 0)))}
    out = np.zeros((coeffs.shape[0], dim_poly(k - 1)))
    for i, (a, b) in enumerate(exps):
        if a > 0:
            out[:, lower[(a - 1, b)]] += a * coeffs[:, 0, i]
        if b > 0:
            out[:, lower[(a, b - 1)]] += b * coeffs[:, 1, i]
    return out / mesh.diameter[:, None]
