"""Triangulations of the unit square with edge connectivity and geometry.

Local edge ``i`` of a triangle joins its local vertices ``i`` and ``i + 1``
(mod 3).  Every edge carries a global normal that is the outward normal of
its lower-numbered incident element; ``edge_signs[K, i]`` is ``+1`` when the
outward normal of ``K`` agrees with it and ``-1`` otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ElementGeometry:
    """Geometry of one triangle.

    ``affine`` is ``(origin, jacobian)`` of the map from the reference
    triangle (0,0), (1,0), (0,1).
    """

    area: float
    diameter: float
    centroid: np.ndarray
    normals: np.ndarray
    edge_lengths: np.ndarray
    affine: tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    element_edges: np.ndarray
    edge_signs: np.ndarray
    boundary: np.ndarray
    # derived geometry, filled in __post_init__
    area: np.ndarray = field(init=False, repr=False)
    centroid: np.ndarray = field(init=False, repr=False)
    diameter: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    edge_lengths: np.ndarray = field(init=False, repr=False)
    edge_normals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xy = self.vertices[self.elements]  # (nK, 3, 2)
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        tang = np.roll(xy, -1, axis=1) - xy  # local edge i: v_i -> v_{i+1}
        lengths = np.linalg.norm(tang, axis=2)
        normals = np.stack([tang[..., 1], -tang[..., 0]], axis=2) / lengths[..., None]

        owner = self.edge_elements[:, 0]
        local = np.argmax(self.element_edges[owner] == np.arange(self.n_edges)[:, None], axis=1)
        edge_normals = normals[owner, local]
        edge_lengths = np.linalg.norm(
            self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1
        )

        for name, value in [
            ("area", area),
            ("centroid", xy.mean(axis=1)),
            ("diameter", lengths.max(axis=1)),
            ("normals", normals),
            ("edge_lengths", edge_lengths),
            ("edge_normals", edge_normals),
        ]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        for name in ("vertices", "elements", "edges", "edge_elements",
                     "element_edges", "edge_signs", "boundary"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def h(self) -> float:
        """Largest element diameter."""
        return float(self.diameter.max())

    @classmethod
    def from_arrays(cls, vertices, elements) -> "Mesh":
        """Build connectivity for a triangle list.

        Elements with clockwise orientation are flipped to counterclockwise.
        """
        vertices = np.asarray(vertices, dtype=float)
        elements = np.array(elements, dtype=np.int64)
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise ValueError("elements must be an (n, 3) integer array")
        xy = vertices[elements]
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(signed == 0):
            raise ValueError("degenerate element")
        cw = signed < 0
        elements[cw] = elements[cw][:, [0, 2, 1]]

        local = np.stack([elements, np.roll(elements, -1, axis=1)], axis=2)  # (nK, 3, 2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        element_edges = inverse.reshape(-1, 3)

        n_edges = len(edges)
        counts = np.bincount(inverse, minlength=n_edges)
        if np.any(counts > 2):
            raise ValueError("non-manifold edge")
        # incident elements sorted ascending; slot 1 is -1 on the boundary
        owners = np.repeat(np.arange(len(elements)), 3)
        order = np.lexsort((owners, inverse))
        edge_elements = -np.ones((n_edges, 2), dtype=np.int64)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_elements[:, 0] = owners[order][start]
        two = counts == 2
        edge_elements[two, 1] = owners[order][start[two] + 1]

        edge_signs = np.where(edge_elements[element_edges, 0] == np.arange(len(elements))[:, None], 1, -1)
        return cls(
            vertices=vertices,
            elements=elements,
            edges=edges,
            edge_elements=edge_elements,
            element_edges=element_edges,
            edge_signs=edge_signs.astype(np.int64),
            boundary=counts == 1,
        )


def build_structured_mesh(n: int) -> Mesh:
    """Uniform n x n mesh of the unit square.

    Every square is cut along its lower-left to upper-right diagonal, giving
    ``2 n**2`` congruent right triangles.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"mesh size must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh.from_arrays(vertices, elements)


def element_geometry(mesh: Mesh, element: int) -> ElementGeometry:
    K = _check_element(mesh, element)
    xy = mesh.vertices[mesh.elements[K]]
    jac = np.column_stack([xy[1] - xy[0], xy[2] - xy[0]])
    return ElementGeometry(
        area=float(mesh.area[K]),
        diameter=float(mesh.diameter[K]),
        centroid=mesh.centroid[K].copy(),
        normals=mesh.normals[K].copy(),
        edge_lengths=np.linalg.norm(np.roll(xy, -1, axis=0) - xy, axis=1),
        affine=(xy[0].copy(), jac),
    )


def neighbor(mesh: Mesh, element: int, local_edge: int) -> int | None:
    """The element across ``local_edge`` of ``element``, or None on the boundary."""
    K = _check_element(mesh, element)
    if local_edge not in (0, 1, 2):
        raise IndexError(f"local edge must be 0, 1 or 2, got {local_edge}")
    e = mesh.element_edges[K, local_edge]
    a, b = mesh.edge_elements[e]
    if b < 0:
        return None
    return int(b if a == K else a)


def dump_mesh(mesh: Mesh, path) -> None:
    """Write a plain-text dump (debugging aid, not a stable format)."""
    lines = [f"vertices {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(map(str, tri)) for tri in mesh.elements]
    lines.append(f"edges {mesh.n_edges}")
    lines += [f"{a} {b} {k0} {k1}" for (a, b), (k0, k1) in zip(mesh.edges, mesh.edge_elements)]
    Path(path).write_text("\n".join(lines) + "\n")


def _check_element(mesh: Mesh, element) -> int:
    K = int(element)
    if not 0 <= K < mesh.n_elements:
        raise IndexError(f"element {element} out of range [0, {mesh.n_elements})")
    return K
