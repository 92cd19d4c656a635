"""Doubled continuous P1/P2 Lagrange spaces on the two active submeshes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CellClassification
from .mesh import Mesh

# local edges (a, b) of the P2 midpoint nodes, in cell-face order
EDGES = ((0, 1), (1, 2), (2, 0))
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_REF_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class UnsupportedDegree(ValueError):
    pass


def nloc(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def _check_degree(k):
    if k not in (1, 2):
        raise UnsupportedDegree(f"polynomial degree must be 1 or 2, got {k}")


def shape_functions(k, lam, glam, hessians=False):
    """Lagrange basis from barycentric coordinates.

    ``lam`` is (n, 3) and ``glam`` the barycentric gradients (n, 3, 2).  Returns
    values (n, nloc), gradients (n, nloc, 2) and, on request, hessians
    (n, nloc, 2, 2).
    """
    _check_degree(k)
    n = lam.shape[0]
    if k == 1:
        vals, grads = lam, glam
        hess = np.zeros((n, 3, 2, 2)) if hessians else None
    else:
        vals = np.empty((n, 6))
        grads = np.empty((n, 6, 2))
        vals[:, :3] = lam * (2.0 * lam - 1.0)
        grads[:, :3] = (4.0 * lam - 1.0)[..., None] * glam
        for e, (a, b) in enumerate(EDGES):
            vals[:, 3 + e] = 4.0 * lam[:, a] * lam[:, b]
            grads[:, 3 + e] = 4.0 * (lam[:, b, None] * glam[:, a] + lam[:, a, None] * glam[:, b])
        hess = None
        if hessians:
            hess = np.empty((n, 6, 2, 2))
            for a in range(3):
                hess[:, a] = 4.0 * np.einsum("ni,nj->nij", glam[:, a], glam[:, a])
            for e, (a, b) in enumerate(EDGES):
                ab = np.einsum("ni,nj->nij", glam[:, a], glam[:, b])
                hess[:, 3 + e] = 4.0 * (ab + ab.transpose(0, 2, 1))
    return vals, grads, hess


def eval_basis(k: int, point) -> tuple[np.ndarray, np.ndarray]:
    """Values and reference gradients of the local basis at reference point(s)."""
    p = np.atleast_2d(np.asarray(point, dtype=float))
    lam = np.column_stack([1.0 - p[:, 0] - p[:, 1], p[:, 0], p[:, 1]])
    glam = np.broadcast_to(_REF_GRAD_LAMBDA, (len(p), 3, 2))
    vals, grads, _ = shape_functions(k, lam, glam)
    if np.ndim(point) == 1:
        return vals[0], grads[0]
    return vals, grads


@dataclass(frozen=True, eq=False)
class FESpace:
    """Two continuous Lagrange spaces, one per active submesh.

    Side-1 DOFs occupy ``[0, ndofs[1])`` and side-2 DOFs follow.  ``dofs[side]``
    maps each cell to its local DOF tuple, with -1 on cells inactive for that side.
    """

    mesh: Mesh
    classification: CellClassification
    k: int
    cell_nodes: np.ndarray
    node_coords: np.ndarray
    boundary_nodes: np.ndarray
    dofs: dict
    node_dof: dict
    ndofs: dict
    dof_coords: np.ndarray
    dof_side: np.ndarray
    constrained: np.ndarray
    _inv_jac: np.ndarray = field(repr=False)

    @property
    def ndof(self) -> int:
        return self.ndofs[1] + self.ndofs[2]

    @property
    def nloc(self) -> int:
        return nloc(self.k)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def local_to_global(self, cell: int, side: int) -> np.ndarray:
        d = self.dofs[side][cell]
        if d[0] < 0:
            raise ValueError(f"cell {cell} is not active on side {side}")
        return d

    def barycentric(self, cells, points):
        """Barycentric coordinates and their gradients for points in given cells."""
        cells = np.asarray(cells)
        x0 = self.mesh.vertices[self.mesh.cells[cells, 0]]
        J = self._inv_jac[cells]  # (n, 2, 2)
        l12 = np.einsum("nij,nj->ni", J, np.asarray(points) - x0)
        lam = np.column_stack([1.0 - l12.sum(axis=1), l12])
        glam = np.empty((len(cells), 3, 2))
        glam[:, 1:] = J
        glam[:, 0] = -J.sum(axis=1)
        return lam, glam

    def basis(self, cells, points, hessians=False):
        lam, glam = self.barycentric(cells, points)
        return shape_functions(self.k, lam, glam, hessians)

    def interpolate(self, u1, u2=None) -> np.ndarray:
        """Nodal interpolant of ``u1`` on side 1 and ``u2`` (default ``u1``) on side 2."""
        u2 = u1 if u2 is None else u2
        out = np.empty(self.ndof)
        s1 = self.dof_side == 1
        if s1.any():
            out[s1] = u1(self.dof_coords[s1])
        if (~s1).any():
            out[~s1] = u2(self.dof_coords[~s1])
        return out

    def evaluate(self, coeffs, side, cells, points, hessians=False):
        """Values and physical gradients of side ``side`` of a discrete function."""
        d = self.dofs[side][np.asarray(cells)]
        if np.any(d < 0):
            raise ValueError(f"some cells are inactive on side {side}")
        vals, grads, hess = self.basis(cells, points, hessians)
        c = np.asarray(coeffs)[d]
        u = np.einsum("ni,ni->n", vals, c)
        g = np.einsum("nij,ni->nj", grads, c)
        if hessians:
            return u, g, np.einsum("nijk,ni->njk", hess, c)
        return u, g


def evaluate_fe_function(space: FESpace, coefficients, side: int, point, cell: int):
    """Value and gradient of one side of a discrete function at one physical point."""
    if len(coefficients) != space.ndof:
        raise ValueError(f"expected {space.ndof} coefficients, got {len(coefficients)}")
    if space.dofs[side][cell, 0] < 0:
        raise ValueError(f"cell {cell} is not active on side {side}")
    u, g = space.evaluate(coefficients, side, [cell], np.asarray(point, dtype=float)[None])
    return float(u[0]), g[0]


def build_space(mesh: Mesh, classification: CellClassification, k: int) -> FESpace:
    _check_degree(k)
    if len(classification.tags) != mesh.num_cells:
        raise ValueError("classification does not match the mesh")
    nv = mesh.num_vertices
    if k == 1:
        cell_nodes = mesh.cells.copy()
        node_coords = mesh.vertices.copy()
        boundary_nodes = mesh.boundary_vertex_flags.copy()
    else:
        cell_nodes = np.hstack([mesh.cells, nv + mesh.cell_faces])
        mids = 0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]])
        node_coords = np.vstack([mesh.vertices, mids])
        boundary_nodes = np.concatenate([mesh.boundary_vertex_flags, mesh.face_cells[:, 1] < 0])
    nnodes = len(node_coords)

    dofs, node_dof, ndofs = {}, {}, {}
    offset = 0
    for side in (1, 2):
        active = classification.active(side)
        used = np.zeros(nnodes, dtype=bool)
        used[cell_nodes[active].ravel()] = True
        nd = np.full(nnodes, -1, dtype=np.int64)
        nd[used] = offset + np.arange(used.sum())
        cd = np.full(cell_nodes.shape, -1, dtype=np.int64)
        cd[active] = nd[cell_nodes[active]]
        dofs[side], node_dof[side], ndofs[side] = cd, nd, int(used.sum())
        offset += ndofs[side]

    dof_coords = np.empty((offset, 2))
    dof_side = np.empty(offset, dtype=np.int8)
    constrained = []
    for side in (1, 2):
        nd = node_dof[side]
        m = nd >= 0
        dof_coords[nd[m]] = node_coords[m]
        dof_side[nd[m]] = side
        constrained.append(nd[m & boundary_nodes])
    constrained = np.sort(np.concatenate(constrained))

    p = mesh.vertices[mesh.cells]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
    inv_jac = np.linalg.inv(jac)

    for a in (cell_nodes, node_coords, boundary_nodes, dof_coords, dof_side, constrained, inv_jac):
        a.setflags(write=False)
    return FESpace(mesh, classification, k, cell_nodes, node_coords, boundary_nodes, dofs,
                   node_dof, ndofs, dof_coords, dof_side, constrained, inv_jac)
