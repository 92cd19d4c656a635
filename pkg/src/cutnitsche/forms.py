"""Assembly of the non-symmetric Nitsche interface forms.

Every bilinear form is a signed sum of the same five term matrices over all
DOFs (``volume``, ``consistency``, ``adjoint_consistency``, ``penalty``,
``ghost``), so the adjoint operators reuse exactly the same quadrature and local
kernels.  Dirichlet DOFs on the outer boundary are eliminated afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fe_space import FESpace, shape_functions
from .geometry import CutQuadrature
from .quadrature import gauss_01, npoints_for

log = logging.getLogger(__name__)

TERMS = ("volume", "consistency", "adjoint_consistency", "penalty", "ghost")


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class NitscheWeights:
    w1: float
    w2: float
    c0: float


def compute_weights(mu1: float, mu2: float) -> NitscheWeights:
    """Harmonic weights ``w1 = mu2/(mu1+mu2)``, ``w2 = mu1/(mu1+mu2)`` and ``c0 = {{mu}}``."""
    if not (mu1 > 0 and mu2 > 0):
        raise ValueError(f"diffusion coefficients must be positive, got {mu1}, {mu2}")
    w1 = mu2 / (mu1 + mu2)
    w2 = mu1 / (mu1 + mu2)
    return NitscheWeights(w1, w2, w1 * mu1 + w2 * mu2)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    u1: Callable
    grad1: Callable
    u2: Callable
    grad2: Callable
    hess1: Callable | None = None
    hess2: Callable | None = None

    def value(self, side):
        return self.u1 if side == 1 else self.u2

    def gradient(self, side):
        return self.grad1 if side == 1 else self.grad2

    def hessian(self, side):
        return self.hess1 if side == 1 else self.hess2


def _zero(x, *args):
    return np.zeros(len(x))


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Coefficients and data of the interface problem.

    ``f`` is one callable for both subdomains or a pair ``(f1, f2)``.
    ``g_N`` receives the interface points and unit normals.  Boundary values
    on side ``i`` come from the exact solution of that side when one is attached,
    otherwise from ``boundary``.
    """

    mu1: float
    mu2: float
    f: Callable | tuple = _zero
    g_D: Callable = _zero
    g_N: Callable = _zero
    boundary: Callable = _zero
    exact: ExactSolution | None = None

    def __post_init__(self):
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError(f"diffusion coefficients must be positive, got {self.mu1}, {self.mu2}")

    def mu(self, side):
        return self.mu1 if side == 1 else self.mu2

    def source(self, side):
        if isinstance(self.f, tuple):
            return self.f[side - 1]
        return self.f

    def boundary_value(self, side):
        if self.exact is not None:
            return self.exact.value(side)
        return self.boundary

    @property
    def weights(self) -> NitscheWeights:
        return compute_weights(self.mu1, self.mu2)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Reduced system on the free DOFs plus what is needed to rebuild full vectors."""

    A: sp.csr_matrix
    b: np.ndarray | None
    free: np.ndarray
    constrained: np.ndarray
    constrained_values: np.ndarray
    ndof: int
    full: sp.csr_matrix | None = None

    def expand(self, x_free) -> np.ndarray:
        u = np.empty(self.ndof)
        u[self.free] = x_free
        u[self.constrained] = self.constrained_values
        return u

    def write_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(Path(path)), self.A.tocoo())


# ----------------------------------------------------------------------------
# term matrices
# ----------------------------------------------------------------------------

def _coo(rows, cols, vals, n):
    m = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n))
    return m.tocsr()


def _volume_term(space: FESpace, quad: CutQuadrature, data: ProblemData):
    mesh = space.mesh
    k = space.k
    rows, cols, vals = [], [], []

    # uncut cells: one reference rule, affine pull-back
    from .quadrature import triangle_rule
    ref, w = triangle_rule(quad.order)
    lam = np.column_stack([1.0 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
    glam = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(ref), 3, 2))
    _, G, _ = shape_functions(k, lam, glam)  # (nq, nloc, 2) reference gradients
    for side in (1, 2):
        cells = quad.uncut[side]
        if len(cells) == 0:
            continue
        Jinv = space._inv_jac[cells]
        metric = np.einsum("cai,cbi->cab", Jinv, Jinv) * (2.0 * mesh.areas[cells])[:, None, None]
        K = data.mu(side) * np.einsum("q,qia,cab,qjb->cij", w, G, metric, G)
        d = space.dofs[side][cells]
        rows.append(np.broadcast_to(d[:, :, None], K.shape))
        cols.append(np.broadcast_to(d[:, None, :], K.shape))
        vals.append(K)

        cut = quad.cut_volume[side]
        if len(cut.cells):
            _, g, _ = space.basis(cut.cells, cut.points)
            K = data.mu(side) * cut.weights[:, None, None] * np.einsum("pia,pja->pij", g, g)
            d = space.dofs[side][cut.cells]
            rows.append(np.broadcast_to(d[:, :, None], K.shape))
            cols.append(np.broadcast_to(d[:, None, :], K.shape))
            vals.append(K)

    if not vals:
        return sp.csr_matrix((space.ndof, space.ndof))
    return _coo(np.concatenate([r.reshape(-1) for r in rows]),
                np.concatenate([c.reshape(-1) for c in cols]),
                np.concatenate([v.reshape(-1) for v in vals]), space.ndof)


def _interface_vectors(space: FESpace, quad: CutQuadrature, data: ProblemData):
    """Per interface point: jump vector, weighted-flux vector and local DOFs (both sides)."""
    it = quad.interface
    wts = data.weights
    phi, g, _ = space.basis(it.cells, it.points)
    dn = np.einsum("pia,pa->pi", g, it.normals)
    jump = np.hstack([phi, -phi])
    flux = np.hstack([wts.w1 * data.mu1 * dn, wts.w2 * data.mu2 * dn])
    d1 = space.dofs[1][it.cells]
    d2 = space.dofs[2][it.cells]
    if np.any(d1 < 0) or np.any(d2 < 0):
        raise AssemblyError("interface point in a cell that is not active on both sides")
    return jump, flux, np.hstack([d1, d2]), phi


def _check_interface(space: FESpace, quad: CutQuadrature):
    cl = space.classification
    cut = cl.cut_cells
    have = np.zeros(space.mesh.num_cells, dtype=bool)
    have[quad.interface.cells] = True
    missing = cut[~have[cut] & ~cl.degenerate[cut]]
    if len(missing):
        raise AssemblyError(f"cut cells without interface quadrature: {missing[:10].tolist()}")


def _interface_terms(space: FESpace, quad: CutQuadrature, data: ProblemData):
    n = space.ndof
    if len(quad.interface.cells) == 0:
        z = sp.csr_matrix((n, n))
        return z, z.copy(), z.copy()
    jump, flux, d, _ = _interface_vectors(space, quad, data)
    w = quad.interface.weights
    hT = space.mesh.cell_diameters[quad.interface.cells]
    R = np.broadcast_to(d[:, :, None], (len(d), d.shape[1], d.shape[1]))
    C = np.broadcast_to(d[:, None, :], R.shape)
    # rows are test functions, columns trial functions
    cons = -w[:, None, None] * jump[:, :, None] * flux[:, None, :]
    adj = w[:, None, None] * flux[:, :, None] * jump[:, None, :]
    pen = (data.weights.c0 * w / hT)[:, None, None] * jump[:, :, None] * jump[:, None, :]
    return _coo(R, C, cons, n), _coo(R, C, adj, n), _coo(R, C, pen, n)


def ghost_faces(space: FESpace, side: int) -> np.ndarray:
    """Interior faces touching a cut cell whose two neighbours are both active on ``side``."""
    mesh = space.mesh
    cl = space.classification
    fc = mesh.face_cells
    interior = fc[:, 1] >= 0
    f = np.flatnonzero(interior)
    a, b = fc[f, 0], fc[f, 1]
    active = cl.active(side)
    cut = cl.tags == 3
    keep = active[a] & active[b] & (cut[a] | cut[b])
    return f[keep]


def _ghost_jumps(space: FESpace, side: int):
    """Face-rule data on the ghost faces of ``side``.

    Returns local DOFs of the two incident cells (p, 2 nloc), the list of jump
    vectors of ``D^l_{n_E}`` for l = 1..k, the face size per point and the
    quadrature weights; ``None`` when there are no faces.
    """
    mesh = space.mesh
    k = space.k
    faces = ghost_faces(space, side)
    if len(faces) == 0:
        return None
    t, wt = gauss_01(npoints_for(2 * k))
    nq = len(t)
    p0 = mesh.vertices[mesh.faces[faces, 0]]
    p1 = mesh.vertices[mesh.faces[faces, 1]]
    tang = p1 - p0
    hE = mesh.face_lengths[faces]
    nE = np.column_stack([tang[:, 1], -tang[:, 0]]) / hE[:, None]
    pts = (p0[:, None, :] + t[None, :, None] * tang[:, None, :]).reshape(-1, 2)
    nrep = np.repeat(nE, nq, axis=0)
    w = (hE[:, None] * wt[None, :]).ravel()
    ca = np.repeat(mesh.face_cells[faces, 0], nq)
    cb = np.repeat(mesh.face_cells[faces, 1], nq)
    _, ga, Ha = space.basis(ca, pts, hessians=k > 1)
    _, gb, Hb = space.basis(cb, pts, hessians=k > 1)
    d = np.hstack([space.dofs[side][ca], space.dofs[side][cb]])
    jumps = [np.hstack([np.einsum("pia,pa->pi", ga, nrep), -np.einsum("pia,pa->pi", gb, nrep)])]
    if k > 1:
        jumps.append(np.hstack([np.einsum("pa,piab,pb->pi", nrep, Ha, nrep),
                                -np.einsum("pa,piab,pb->pi", nrep, Hb, nrep)]))
    return d, jumps, np.repeat(hE, nq), w


def ghost_penalty_matrix(space: FESpace, data: ProblemData, gamma_g: float) -> sp.csr_matrix:
    """Face jumps of normal derivatives of order 1..k on both active submeshes."""
    n = space.ndof
    rows, cols, vals = [], [], []
    for side in (1, 2):
        g = _ghost_jumps(space, side)
        if g is None:
            continue
        d, jumps, hE, w = g
        for l, jmp in enumerate(jumps, start=1):
            scale = gamma_g * data.mu(side) * hE ** (2 * l - 1) * w
            K = scale[:, None, None] * jmp[:, :, None] * jmp[:, None, :]
            rows.append(np.broadcast_to(d[:, :, None], K.shape).reshape(-1))
            cols.append(np.broadcast_to(d[:, None, :], K.shape).reshape(-1))
            vals.append(K.reshape(-1))
    if not vals:
        return sp.csr_matrix((n, n))
    S = _coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)
    # duplicates are summed in different orders for (i, j) and (j, i)
    return (0.5 * (S + S.T)).tocsr()


def ghost_seminorm(space: FESpace, data: ProblemData, gamma_g: float, coefficients) -> float:
    """``s_h(u_h, u_h)`` summed from the face jumps themselves.

    Avoids the cancellation of forming ``c^T S c`` when the jumps are tiny.
    """
    c = np.asarray(coefficients)
    total = 0.0
    for side in (1, 2):
        g = _ghost_jumps(space, side)
        if g is None:
            continue
        d, jumps, hE, w = g
        for l, jmp in enumerate(jumps, start=1):
            j = np.einsum("pi,pi->p", jmp, c[d])
            total += gamma_g * data.mu(side) * float(np.sum(hE ** (2 * l - 1) * w * j * j))
    return total


def assemble_terms(space: FESpace, quad: CutQuadrature, data: ProblemData,
                   gamma_g: float = 0.0) -> dict:
    """All term matrices over the full (unconstrained) DOF set."""
    if quad.interface is None or quad.cut_volume is None:
        raise AssemblyError("quadrature lacks volume or interface rules")
    if quad.mesh is not space.mesh:
        raise AssemblyError("quadrature and space are built on different meshes")
    _check_interface(space, quad)
    cons, adj, pen = _interface_terms(space, quad, data)
    terms = {"volume": _volume_term(space, quad, data), "consistency": cons,
             "adjoint_consistency": adj, "penalty": pen}
    if gamma_g:
        terms["ghost"] = ghost_penalty_matrix(space, data, gamma_g)
    else:
        terms["ghost"] = sp.csr_matrix((space.ndof, space.ndof))
    return terms


def load_vector(space: FESpace, quad: CutQuadrature, data: ProblemData, penalty: bool) -> np.ndarray:
    """Right-hand side of the penalized (``penalty=True``) or penalty-free form."""
    b = np.zeros(space.ndof)
    for side in (1, 2):
        vr = quad.volume(side)
        if len(vr.cells) == 0:
            continue
        phi, _, _ = space.basis(vr.cells, vr.points)
        fx = data.source(side)(vr.points)
        np.add.at(b, space.dofs[side][vr.cells], (vr.weights * fx)[:, None] * phi)

    it = quad.interface
    if len(it.cells):
        jump, flux, d, phi = _interface_vectors(space, quad, data)
        wts = data.weights
        gD = data.g_D(it.points)
        gN = data.g_N(it.points, it.normals)
        avg = np.hstack([wts.w2 * phi, wts.w1 * phi])
        loc = gN[:, None] * avg + gD[:, None] * flux
        if penalty:
            hT = space.mesh.cell_diameters[it.cells]
            loc = loc + (wts.c0 * gD / hT)[:, None] * jump
        np.add.at(b, d, it.weights[:, None] * loc)
    return b


def _reduce(space: FESpace, data: ProblemData, K: sp.csr_matrix, F: np.ndarray | None) -> LinearSystem:
    free = space.free
    con = space.constrained
    uc = np.empty(len(con))
    for side in (1, 2):
        m = space.dof_side[con] == side
        if m.any():
            uc[m] = data.boundary_value(side)(space.dof_coords[con[m]])
    A = K[free][:, free].tocsr()
    b = None
    if F is not None:
        b = F[free] - K[free][:, con] @ uc
    if not np.all(np.isfinite(A.data)):
        raise AssemblyError("non-finite matrix entries")
    return LinearSystem(A, b, free, con, uc, space.ndof, K)


def _combine(terms, signs):
    out = None
    for name, s in signs.items():
        if s == 0:
            continue
        m = terms[name] if s == 1 else -terms[name]
        out = m if out is None else out + m
    return out.tocsr()


PENALIZED = {"volume": 1, "consistency": 1, "adjoint_consistency": 1, "penalty": 1}
PENALIZED_ADJOINT = {"volume": 1, "consistency": -1, "adjoint_consistency": -1, "penalty": 1}
PENALTY_FREE = {"volume": 1, "consistency": 1, "adjoint_consistency": 1, "ghost": 1}
PENALTY_FREE_ADJOINT = {"volume": 1, "consistency": -1, "adjoint_consistency": -1, "ghost": 1}


def assemble_penalized(space, quad, data, gamma_g: float = 0.0, terms: dict | None = None) -> LinearSystem:
    """System of ``a(u, v) = l(v)``; a nonzero ``gamma_g`` adds the ghost penalty."""
    terms = terms or assemble_terms(space, quad, data, gamma_g)
    signs = dict(PENALIZED, ghost=1 if gamma_g else 0)
    return _reduce(space, data, _combine(terms, signs), load_vector(space, quad, data, True))


def assemble_adjoint_penalized(space, quad, data, gamma_g: float = 0.0, terms: dict | None = None) -> LinearSystem:
    terms = terms or assemble_terms(space, quad, data, gamma_g)
    signs = dict(PENALIZED_ADJOINT, ghost=1 if gamma_g else 0)
    return _reduce(space, data, _combine(terms, signs), None)


def assemble_penalty_free(space, quad, data, gamma_g: float, terms: dict | None = None) -> LinearSystem:
    """System of ``a0(u, v) + s_h(u, v) = l0(v)``."""
    if gamma_g < 0:
        raise ValueError(f"gamma_g must be nonnegative, got {gamma_g}")
    terms = terms or assemble_terms(space, quad, data, gamma_g)
    return _reduce(space, data, _combine(terms, PENALTY_FREE), load_vector(space, quad, data, False))


def assemble_adjoint_penalty_free(space, quad, data, gamma_g: float, terms: dict | None = None) -> LinearSystem:
    terms = terms or assemble_terms(space, quad, data, gamma_g)
    return _reduce(space, data, _combine(terms, PENALTY_FREE_ADJOINT), None)
