"""Structured right-triangle meshes of axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Box", "Mesh", "build_structured_mesh", "face_neighbors", "write_mesh"]


@dataclass(frozen=True)
class Box:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @classmethod
    def square(cls, lo: float, hi: float) -> "Box":
        return cls(lo, hi, lo, hi)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with face adjacency.

    Local edge ``e`` of a cell joins local vertices ``e`` and ``(e + 1) % 3``;
    ``cell_faces[c, e]`` is the global index of that edge.
    """

    vertices: np.ndarray  # (nv, 2)
    cells: np.ndarray  # (nc, 3), counterclockwise
    faces: np.ndarray  # (nf, 2)
    face_cells: np.ndarray  # (nf, 2), -1 marks a missing neighbour
    cell_faces: np.ndarray  # (nc, 3)
    boundary_vertex_flags: np.ndarray  # (nv,) bool
    box: Box
    n: int
    cell_diameters: np.ndarray = field(init=False)
    face_lengths: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.vertices[self.cells]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        object.__setattr__(self, "cell_diameters", np.linalg.norm(e, axis=2).max(axis=1))
        fl = np.linalg.norm(self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]], axis=1)
        object.__setattr__(self, "face_lengths", fl)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        object.__setattr__(self, "areas", 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))
        for a in (self.vertices, self.cells, self.faces, self.face_cells, self.cell_faces,
                  self.boundary_vertex_flags, self.cell_diameters, self.face_lengths, self.areas):
            a.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    def cell_points(self, c) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def refine(self) -> "Mesh":
        return build_structured_mesh(2 * self.n, self.box)


def build_structured_mesh(n: int, domain: Box | tuple = Box.square(0.0, 1.0)) -> Mesh:
    """Split an ``n x n`` grid of squares along the (ll, ur) diagonal.

    Gives ``2 n**2`` congruent right triangles.
    """
    if not isinstance(domain, Box):
        domain = Box(*domain)
    if int(n) != n or n < 1:
        raise ValueError(f"need n >= 1 subdivisions, got {n}")
    if not (domain.width > 0 and domain.height > 0):
        raise ValueError(f"degenerate box {domain}")
    n = int(n)

    xs = np.linspace(domain.xmin, domain.xmax, n + 1)
    ys = np.linspace(domain.ymin, domain.ymax, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = (j * (n + 1) + i).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, b, c])
    cells[1::2] = np.column_stack([a, c, d])

    local = np.stack([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]], axis=1)
    keys = np.sort(local.reshape(-1, 2), axis=1)
    faces, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    cell_faces = inverse.reshape(-1, 3)

    face_cells = np.full((len(faces), 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(len(cells)), 3)
    order = np.argsort(inverse, kind="stable")
    sf = inverse[order]
    first = np.r_[True, sf[1:] != sf[:-1]]
    face_cells[sf[first], 0] = owner[order][first]
    face_cells[sf[~first], 1] = owner[order][~first]

    on_x = np.isclose(vertices[:, 0], domain.xmin) | np.isclose(vertices[:, 0], domain.xmax)
    on_y = np.isclose(vertices[:, 1], domain.ymin) | np.isclose(vertices[:, 1], domain.ymax)

    return Mesh(vertices, cells, faces, face_cells, cell_faces, on_x | on_y, domain, n)


def face_neighbors(mesh: Mesh, face: int) -> tuple[int, ...]:
    if not 0 <= face < mesh.num_faces:
        raise ValueError(f"face {face} out of range [0, {mesh.num_faces})")
    return tuple(int(c) for c in mesh.face_cells[face] if c >= 0)


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: ``v x y`` per vertex, then ``c i j k`` per cell."""
    lines = [f"v {x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"c {i} {j} {k}" for i, j, k in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")
