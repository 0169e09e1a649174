"""Polynomial spaces, quadrature rules and mass matrices.

Element spaces use scaled monomials centred at the element centroid,

    phi_(a,b)(x, y) = ((x - x_K) / h_K)**a * ((y - y_K) / h_K)**b,  a + b <= s,

ordered by total degree, so the basis of P_(s-1) is a prefix of the basis of
P_s.  Edge spaces use Legendre polynomials in the edge parameter mapped to
[-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre

# Fully symmetric rules on the triangle (Dunavant 1985), as orbits in
# barycentric coordinates.  Weights are normalised to sum to one.
#   ("c", w)           centroid
#   ("s21", a, w)      (a, a, 1 - 2a) and permutations
#   ("s111", a, b, w)  (a, b, 1 - a - b) and permutations
_DUNAVANT = {
    1: [("c", 1.0)],
    2: [("s21", 1.0 / 6.0, 1.0 / 3.0)],
    3: [("c", -27.0 / 48.0), ("s21", 0.2, 25.0 / 48.0)],
    4: [
        ("s21", 0.445948490915965, 0.223381589678011),
        ("s21", 0.091576213509771, 0.109951743655322),
    ],
    5: [
        ("c", 0.225),
        ("s21", 0.470142064105115, 0.132394152788506),
        ("s21", 0.101286507323456, 0.125939180544827),
    ],
    6: [
        ("s21", 0.249286745170910, 0.116786275726379),
        ("s21", 0.063089014491502, 0.050844906370207),
        ("s111", 0.053145049844817, 0.310352451033784, 0.082851075618374),
    ],
    7: [
        ("c", -0.149570044467682),
        ("s21", 0.260345966079040, 0.175615257433208),
        ("s21", 0.065130102902216, 0.053347235608838),
        ("s111", 0.048690315425316, 0.312865496004874, 0.077113760890257),
    ],
    8: [
        ("c", 0.144315607677787),
        ("s21", 0.459292588292723, 0.095091634267285),
        ("s21", 0.170569307751760, 0.103217370534718),
        ("s21", 0.050547228317031, 0.032458497623198),
        ("s111", 0.008394777409958, 0.263112829634638, 0.027230314174435),
    ],
}

MAX_QUADRATURE_DEGREE = 40


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference domain.

    Triangle rules live on (0,0), (1,0), (0,1) with weights summing to 1/2;
    segment rules live on [0, 1] with weights summing to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    domain: str

    def __len__(self):
        return len(self.weights)


def _expand_orbits(orbits):
    bary, weights = [], []
    for orbit in orbits:
        kind = orbit[0]
        if kind == "c":
            pts = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == "s21":
            a = orbit[1]
            b = 1.0 - 2.0 * a
            pts = [(a, a, b), (a, b, a), (b, a, a)]
        else:
            a, b = orbit[1], orbit[2]
            c = 1.0 - a - b
            pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
        bary.extend(pts)
        weights.extend([orbit[-1]] * len(pts))
    bary = np.array(bary)
    return bary[:, 1:], 0.5 * np.array(weights)


def _collapsed_gauss(q):
    # Duffy map (u, v) -> (u, v (1 - u)) of a tensor Gauss rule
    n = q // 2 + 2
    t, w = legendre.leggauss(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, (WU * WV * (1.0 - U)).ravel()


@lru_cache(maxsize=None)
def triangle_quadrature(q: int) -> QuadratureRule:
    """Rule on the reference triangle exact for polynomials of degree ``q``."""
    q = int(q)
    if q < 0:
        raise ValueError("quadrature degree must be non-negative")
    if q > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree {q} exceeds {MAX_QUADRATURE_DEGREE}")
    if q in _DUNAVANT or q == 0:
        pts, wts = _expand_orbits(_DUNAVANT[max(q, 1)])
    else:
        pts, wts = _collapsed_gauss(q)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, q, "triangle")


@lru_cache(maxsize=None)
def edge_quadrature(q: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for degree ``q``."""
    q = int(q)
    if q < 0:
        raise ValueError("quadrature degree must be non-negative")
    if q > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree {q} exceeds {MAX_QUADRATURE_DEGREE}")
    t, w = legendre.leggauss(q // 2 + 1)
    pts, wts = 0.5 * (t + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, q, "segment")


def dim_poly(s: int) -> int:
    """Dimension of P_s on a triangle."""
    return (s + 1) * (s + 2) // 2 if s >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(s: int) -> np.ndarray:
    exps = [(d - b, b) for d in range(s + 1) for b in range(d + 1)]
    out = np.array(exps, dtype=np.int64).reshape(-1, 2)
    out.setflags(write=False)
    return out


def eval_monomials(points, centroid, h, s, derivatives=True):
    """Scaled monomials of degree <= s.

    ``points`` has shape ``(..., 2)``; ``centroid`` and ``h`` must broadcast
    against ``points[..., 0]``.  Returns values ``(..., n)`` and, optionally,
    gradients ``(..., n, 2)``.
    """
    points = np.asarray(points, dtype=float)
    h = np.asarray(h, dtype=float)
    X = (points[..., 0] - np.asarray(centroid)[..., 0]) / h
    Y = (points[..., 1] - np.asarray(centroid)[..., 1]) / h
    exps = monomial_exponents(s)
    px = np.stack([X**p for p in range(s + 1)], axis=-1)
    py = np.stack([Y**p for p in range(s + 1)], axis=-1)
    a, b = exps[:, 0], exps[:, 1]
    vals = px[..., a] * py[..., b]
    if not derivatives:
        return vals
    am1 = np.maximum(a - 1, 0)
    bm1 = np.maximum(b - 1, 0)
    hh = h[..., None] if h.ndim else h
    dx = a * px[..., am1] * py[..., b] / hh
    dy = b * px[..., a] * py[..., bm1] / hh
    return vals, np.stack([dx, dy], axis=-1)


def eval_edge_basis(t, s):
    """Legendre basis of P_s on an edge, at parameters ``t`` in [0, 1]."""
    x = 2.0 * np.asarray(t, dtype=float) - 1.0
    return legendre.legvander(x, s)


@dataclass(frozen=True)
class PolySpace:
    """P_s on one element (scaled monomials) or one edge (Legendre)."""

    degree: int
    kind: str  # "element" or "edge"
    index: int

    @property
    def dim(self) -> int:
        return dim_poly(self.degree) if self.kind == "element" else self.degree + 1


@dataclass(frozen=True)
class MassMatrix:
    matrix: np.ndarray
    factor: tuple

    def solve(self, rhs):
        return sla.cho_solve(self.factor, rhs)


def mass_matrix(space: PolySpace, mesh, quad_degree=None) -> MassMatrix:
    """L2 Gram matrix of the basis of ``space`` and its Cholesky factor."""
    s = space.degree
    q = 2 * s if quad_degree is None else quad_degree
    if space.kind == "element":
        rule = triangle_quadrature(q)
        xy = mesh.vertices[mesh.elements[space.index]]
        pts = xy[0] + rule.points @ np.column_stack([xy[1] - xy[0], xy[2] - xy[0]]).T
        w = rule.weights * 2.0 * mesh.area[space.index]
        V = eval_monomials(pts, mesh.centroid[space.index], mesh.diameter[space.index], s,
                           derivatives=False)
    elif space.kind == "edge":
        rule = edge_quadrature(q)
        w = rule.weights * mesh.edge_lengths[space.index]
        V = eval_edge_basis(rule.points, s)
    else:
        raise ValueError(f"unknown space kind {space.kind!r}")
    M = (V * w[:, None]).T @ V
    try:
        factor = sla.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"mass matrix of {space} is not positive definite (quadrature degree {q})"
        ) from exc
    return MassMatrix(M, factor)


def element_quadrature_points(mesh, rule: QuadratureRule):
    """Physical points ``(nK, nq, 2)`` and weights ``(nK, nq)`` on every element."""
    xy = mesh.vertices[mesh.elements]
    J = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=2)  # (nK, 2, 2) columns
    pts = xy[:, None, 0, :] + np.einsum("kij,qj->kqi", J, rule.points)
    wts = rule.weights[None, :] * (2.0 * mesh.area)[:, None]
    return pts, wts


def edge_quadrature_points(mesh, rule: QuadratureRule):
    """Physical points ``(nE, nq, 2)`` and weights ``(nE, nq)`` on every edge.

    Points run from ``edges[e, 0]`` to ``edges[e, 1]``.
    """
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    wts = rule.weights[None, :] * mesh.edge_lengths[:, None]
    return pts, wts


def integrate(mesh, func, degree=8):
    """Integral over the domain of ``func(points) -> values`` (last axis scalar or vector)."""
    pts, wts = element_quadrature_points(mesh, triangle_quadrature(degree))
    vals = np.asarray(func(pts))
    return np.einsum("kq,kq...->...", wts, vals)


def factorial_moment(a: int, b: int) -> float:
    """Closed form of the integral of x**a y**b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
