"""Level-set interfaces, cell classification and cut-cell quadrature.

Circles and straight lines are handled with exact geometry: edge crossings come
from closed-form roots, the interface inside a cell is a circular arc (or a
segment), and each cut subdomain is covered by "sectors" fanned out from an
anchor point.  A sector over a boundary piece ``g(t)`` is the map
``x(s, t) = A + s (g(t) - A)``, so straight pieces give ordinary collapsed
triangle rules and arcs give curved ones with no geometric error.

Any other level set goes through recursive subdivision with a piecewise linear
reconstruction of the zero contour on the finest sub-triangles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh
from .quadrature import gauss_01, map_triangle, npoints_for

log = logging.getLogger(__name__)

INSIDE1, INSIDE2, CUT = 1, 2, 3

# extra Gauss points along arcs: the integrand is trigonometric in the angle
ARC_EXTRA_POINTS = 4
# widest angle covered by one Gauss rule on an arc
MAX_ARC_ANGLE = np.pi / 8


class GeometryError(RuntimeError):
    """Cut-cell quadrature violated an internal invariant."""


class _Degenerate(Exception):
    pass


# ----------------------------------------------------------------------------
# level sets
# ----------------------------------------------------------------------------

class LevelSet:
    """Signed function, negative in subdomain 1 and positive in subdomain 2."""

    kind = "generic"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x: np.ndarray) -> np.ndarray:
        g = self.grad(x)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)


@dataclass(frozen=True)
class CircleLevelSet(LevelSet):
    center: tuple[float, float]
    radius: float
    kind = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius

    def grad(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def edge_roots(self, p, q) -> np.ndarray:
        """Parameters t in [0, 1] with |p + t (q - p) - c| = r, ascending."""
        d = q - p
        m = p - np.asarray(self.center)
        a = d @ d
        b = 2.0 * (m @ d)
        c = m @ m - self.radius ** 2
        disc = b * b - 4.0 * a * c
        if disc < 0:
            return np.empty(0)
        sq = np.sqrt(disc)
        # cancellation-free pair
        qq = -0.5 * (b + np.copysign(sq, b))
        roots = [qq / a]
        if qq != 0:
            roots.append(c / qq)
        else:
            roots.append(qq / a)
        r = np.sort(roots)
        return r[(r >= 0.0) & (r <= 1.0)]


@dataclass(frozen=True)
class LineLevelSet(LevelSet):
    """``phi(x) = (x - point) . direction`` with ``direction`` normalised."""

    point: tuple[float, float]
    direction: tuple[float, float]
    kind = "line"

    def __post_init__(self):
        n = np.asarray(self.direction, dtype=float)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ValueError("line normal must be nonzero")
        object.__setattr__(self, "direction", tuple(n / nn))

    @classmethod
    def vertical(cls, x0: float) -> "LineLevelSet":
        return cls((x0, 0.0), (1.0, 0.0))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.point)) @ np.asarray(self.direction)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.direction), x.shape).copy()

    def edge_roots(self, p, q) -> np.ndarray:
        fp, fq = self(p), self(q)
        if fp == fq:
            return np.empty(0)
        t = fp / (fp - fq)
        return np.array([t]) if 0.0 <= t <= 1.0 else np.empty(0)


@dataclass(frozen=True, eq=False)
class FunctionLevelSet(LevelSet):
    func: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    kind = "generic"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        return np.asarray(self.gradient(np.asarray(x, dtype=float)), dtype=float)


def _is_exact(ls: LevelSet) -> bool:
    return ls.kind in ("circle", "line")


# ----------------------------------------------------------------------------
# classification
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CellClassification:
    tags: np.ndarray  # (nc,) in {INSIDE1, INSIDE2, CUT}
    degenerate: np.ndarray  # (nc,) bool
    tol: float

    @property
    def cut_cells(self) -> np.ndarray:
        return np.flatnonzero(self.tags == CUT)

    def active(self, side: int) -> np.ndarray:
        """Boolean mask of the active submesh of ``side``."""
        inside = INSIDE1 if side == 1 else INSIDE2
        return (self.tags == inside) | (self.tags == CUT)

    def inside(self, side: int) -> np.ndarray:
        return np.flatnonzero(self.tags == (INSIDE1 if side == 1 else INSIDE2))


def default_tol(mesh: Mesh) -> float:
    return 1e-12 * mesh.h


def vertex_sides(values: np.ndarray, tol: float) -> np.ndarray:
    """Side 1 or 2 per sample; values within ``tol`` of zero go to side 2."""
    return np.where(values + tol > 0.0, 2, 1)


def strict_sign(values: np.ndarray, tol: float) -> np.ndarray:
    """-1, 0 or +1; zero means within ``tol`` of the interface."""
    return np.where(values > tol, 1, np.where(values < -tol, -1, 0))


def classify_cells(mesh: Mesh, levelset: LevelSet, tol: float | None = None,
                   edge_samples: int = 8) -> CellClassification:
    """Tag each cell as inside subdomain 1, inside subdomain 2 or cut.

    Vertices within ``tol`` of the interface do not by themselves make a cell
    cut; circles and lines are resolved with the exact crossing walk, other
    level sets by sampling edges and the centroid.
    """
    if tol is None:
        tol = default_tol(mesh)
    nc = mesh.num_cells
    phi_v = levelset(mesh.vertices)
    sg = strict_sign(phi_v, tol)[mesh.cells]
    mixed = (sg.min(axis=1) < 0) & (sg.max(axis=1) > 0)
    on = sg == 0
    degenerate = np.zeros(nc, dtype=bool)

    if _is_exact(levelset):
        if levelset.kind == "line":
            degenerate = on.sum(axis=1) >= 2
            cand = np.flatnonzero(~mixed & ~degenerate & on.any(axis=1))
        else:
            near = np.abs(phi_v)[mesh.cells].min(axis=1) < mesh.cell_diameters
            cand = np.flatnonzero(~mixed & (near | on.any(axis=1)))
        for c in cand:
            if _boundary_walk(mesh.vertices[mesh.cells[c]], levelset, tol) is not None:
                mixed[c] = True
    else:
        t = (np.arange(1, edge_samples) / edge_samples)[:, None, None, None]
        p = mesh.vertices[mesh.cells]  # (nc, 3, 2)
        q = np.roll(p, -1, axis=1)
        samples = p[None] + t * (q - p)[None]  # (ns, nc, 3, 2)
        vals = np.concatenate([levelset(samples).transpose(1, 0, 2).reshape(nc, -1),
                               levelset(p.mean(axis=1))[:, None]], axis=1)
        s = strict_sign(vals, tol)
        mixed |= ((np.minimum(s.min(axis=1), sg.min(axis=1)) < 0)
                  & (np.maximum(s.max(axis=1), sg.max(axis=1)) > 0))
        edge_on = (s[:, :-1] == 0).reshape(nc, edge_samples - 1, 3).all(axis=1)
        degenerate = edge_on.any(axis=1)

    mixed |= degenerate
    tags = np.empty(nc, dtype=np.int8)
    tags[mixed] = CUT
    centroid_side = vertex_sides(levelset(mesh.vertices[mesh.cells].mean(axis=1)), tol)
    tags[~mixed] = np.where(centroid_side[~mixed] == 1, INSIDE1, INSIDE2)
    if degenerate.any():
        log.info("%d cells touch the interface along an edge", int(degenerate.sum()))
    return CellClassification(tags, degenerate, tol)


# ----------------------------------------------------------------------------
# boundary pieces
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class _Seg:
    a: np.ndarray
    b: np.ndarray
    curved = False

    def eval(self, t):
        d = self.b - self.a
        return self.a + t[:, None] * d, np.broadcast_to(d, (len(t), 2))

    def reversed(self):
        return _Seg(self.b, self.a)

    def split(self, m):
        if m == 1:
            return [self]
        ts = np.linspace(0.0, 1.0, m + 1)
        pts = self.a + ts[:, None] * (self.b - self.a)
        return [_Seg(pts[i], pts[i + 1]) for i in range(m)]


@dataclass(frozen=True)
class _Arc:
    center: np.ndarray
    radius: float
    t0: float
    t1: float
    curved = True

    def eval(self, t):
        th = self.t0 + t * (self.t1 - self.t0)
        c, s = np.cos(th), np.sin(th)
        pts = self.center + self.radius * np.column_stack([c, s])
        d = self.radius * (self.t1 - self.t0) * np.column_stack([-s, c])
        return pts, d

    def reversed(self):
        return _Arc(self.center, self.radius, self.t1, self.t0)

    def split(self, m):
        ts = np.linspace(self.t0, self.t1, m + 1)
        return [_Arc(self.center, self.radius, ts[i], ts[i + 1]) for i in range(m)]


def _nsplit(span, sub):
    return max(sub, int(np.ceil(abs(span) / MAX_ARC_ANGLE)))


def _sector(anchor, piece, ms, mt):
    """Points, weights and jacobian samples of the fan over ``piece`` from ``anchor``."""
    s, ws = gauss_01(ms)
    t, wt = gauss_01(mt)
    g, dg = piece.eval(t)
    rel = g - anchor
    det = rel[:, 0] * dg[:, 1] - rel[:, 1] * dg[:, 0]
    scale = np.linalg.norm(rel, axis=1) * np.linalg.norm(dg, axis=1)
    pts = anchor + s[:, None, None] * rel[None, :, :]
    w = np.outer(ws * s, wt * det)
    return pts.reshape(-1, 2), w.ravel(), det, scale


def _in_triangle(tri, p, eps=1e-12):
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    r = p - tri[0]
    l1 = (r[0] * e2[1] - r[1] * e2[0]) / det
    l2 = (e1[0] * r[1] - e1[1] * r[0]) / det
    return l1 >= -eps and l2 >= -eps and 1 - l1 - l2 >= -eps


# ----------------------------------------------------------------------------
# per-cell geometry
# ----------------------------------------------------------------------------

@dataclass
class _CellGeometry:
    volume: dict = field(default_factory=lambda: {1: ([], []), 2: ([], [])})
    iface_pts: list = field(default_factory=list)
    iface_w: list = field(default_factory=list)
    iface_n: list = field(default_factory=list)

    def add_volume(self, side, pts, w):
        self.volume[side][0].append(pts)
        self.volume[side][1].append(w)

    def add_iface(self, pts, w, n):
        self.iface_pts.append(pts)
        self.iface_w.append(w)
        self.iface_n.append(n)


def _interface_pieces(tri, ls, ipts):
    """Interface pieces inside ``tri`` oriented with subdomain 1 on the left.

    Returns ``(start_id, end_id, piece)`` tuples referring to ``ipts``.
    """
    if len(ipts) < 2:
        raise _Degenerate("fewer than two interface crossings")
    if ls.kind == "line":
        if len(ipts) != 2:
            raise _Degenerate("line crosses a cell in more than two points")
        n = np.asarray(ls.direction)
        tdir = np.array([-n[1], n[0]])
        i, j = (0, 1) if (ipts[1] - ipts[0]) @ tdir >= 0 else (1, 0)
        if np.linalg.norm(ipts[j] - ipts[i]) == 0:
            raise _Degenerate("zero-length chord")
        return [(i, j, _Seg(ipts[i], ipts[j]))]

    c = np.asarray(ls.center, dtype=float)
    ang = np.array([np.arctan2(*(p - c)[::-1]) for p in ipts])
    order = np.argsort(ang)
    pieces = []
    m = len(order)
    for a in range(m):
        i, j = order[a], order[(a + 1) % m]
        t0 = ang[i]
        t1 = ang[j] if a + 1 < m else ang[j] + 2 * np.pi
        if t1 - t0 <= 1e-14:
            continue
        mid = c + ls.radius * np.array([np.cos(0.5 * (t0 + t1)), np.sin(0.5 * (t0 + t1))])
        if _in_triangle(tri, mid):
            pieces.append((i, j, _Arc(c, ls.radius, t0, t1)))
    return pieces


def _boundary_walk(tri, ls, tol):
    """Counterclockwise boundary nodes of a triangle split by an exact interface.

    Returns ``(nodes, sub_side, ipts)`` where ``nodes`` holds ``(coords, vertex,
    crossing)`` triples (``-1`` where not applicable) and ``sub_side[j]`` is the
    subdomain of the boundary piece from node ``j`` to node ``j + 1``; ``None``
    when the interface does not genuinely cross the cell.
    """
    phi = ls(tri)
    sg = strict_sign(phi, tol)
    raw = []  # (coords, vertex index or -1, is_crossing)
    for e in range(3):
        p, q = tri[e], tri[(e + 1) % 3]
        raw.append((p, e, sg[e] == 0))
        length = np.linalg.norm(q - p)
        eps = max(tol / length, 1e-14)
        roots = ls.edge_roots(p, q)
        roots = roots[(roots > eps) & (roots < 1.0 - eps)]
        if len(roots) == 2 and roots[1] - roots[0] <= eps:
            roots = roots[:0]  # tangency
        for t in roots:
            raw.append((p + t * (q - p), -1, True))

    # near-tangency: neighbouring crossings enclosing no region deeper than tol
    merged = True
    while merged and len(raw) > 1:
        merged = False
        for j in range(len(raw)):
            a, b = raw[j], raw[(j + 1) % len(raw)]
            if not (a[2] and b[2]) or (a[1] >= 0 and b[1] >= 0):
                continue
            if abs(ls((0.5 * (a[0] + b[0]))[None])[0]) > tol:
                continue
            drop = [k for k, r in ((j, a), ((j + 1) % len(raw), b)) if r[1] < 0]
            for k in sorted(drop, reverse=True):
                del raw[k]
            merged = True
            break

    while True:
        nb = len(raw)
        side = np.empty(nb, dtype=int)
        for j in range(nb):
            mid = 0.5 * (raw[j][0] + raw[(j + 1) % nb][0])
            side[j] = 1 if ls(mid[None])[0] < 0 else 2
        fake = [j for j in range(nb) if raw[j][2] and side[j - 1] == side[j]]
        if not fake:
            break
        x, v, _ = raw[fake[0]]
        if v >= 0:
            raw[fake[0]] = (x, v, False)
        else:
            del raw[fake[0]]
    if not any(r[2] for r in raw):
        return None
    nodes, ipts = [], []
    for j, (x, v, crossing) in enumerate(raw):
        if crossing:
            nodes.append((x, -1, len(ipts)))
            ipts.append(x)
        else:
            nodes.append((x, v, -1))
    return nodes, side, ipts


def _exact_cell(tri, ls, tol, order, iface_order, level):
    walk = _boundary_walk(tri, ls, tol)
    if walk is None:
        raise _Degenerate("no crossings on a cut cell")
    nodes, sub_side, ipts = walk
    nb = len(nodes)

    pieces = _interface_pieces(tri, ls, ipts)
    node_of = {cid: j for j, (_, _, cid) in enumerate(nodes) if cid >= 0}
    ends = [k for i, j, _ in pieces for k in (i, j)]
    if sorted(ends) != list(range(len(ipts))):
        raise _Degenerate("crossings not paired by interface pieces")

    geo = _CellGeometry()
    sub = 2 ** level
    mt_i = npoints_for(iface_order) + (ARC_EXTRA_POINTS if ls.kind == "circle" else 0)
    for _, _, pc in pieces:
        for sp in (pc.split(_nsplit(pc.t1 - pc.t0, sub)) if pc.curved else pc.split(sub)):
            t, wt = gauss_01(mt_i)
            g, dg = sp.eval(t)
            geo.add_iface(g, wt * np.linalg.norm(dg, axis=1), ls.normal(g))

    ms = npoints_for(order + 1)
    mt_s = npoints_for(order)
    mt_c = mt_s + (ARC_EXTRA_POINTS if ls.kind == "circle" else 0)
    try:
        fans = {side: _side_cycles(side, nodes, sub_side, pieces, node_of) for side in (1, 2)}
        volume = {side: [_fan_cycle(side, cyc, nodes, ls, ms, mt_s, mt_c, sub) for cyc in fans[side]]
                  for side in (1, 2)}
    except _Degenerate:
        if ls.kind != "circle":
            raise
        volume = _polar_cell(tri, ls, ipts, order, level)
    for side in (1, 2):
        for part in volume[side]:
            for p, w in part:
                geo.add_volume(side, p, w)
    return geo


def _side_cycles(side, nodes, sub_side, pieces, node_of):
    nb = len(nodes)
    out = {}
    for j in range(nb):
        if sub_side[j] == side:
            out[j] = ((j + 1) % nb, _Seg(nodes[j][0], nodes[(j + 1) % nb][0]))
    for i, j, pc in pieces:
        a, b = node_of[i], node_of[j]
        if side == 2:
            a, b, pc = b, a, pc.reversed()
        if a in out:
            raise _Degenerate("two outgoing edges at a node")
        out[a] = (b, pc)
    cycles = []
    seen = set()
    for start in sorted(out):
        if start in seen:
            continue
        cycle = []
        node = start
        while node not in seen:
            seen.add(node)
            if node not in out:
                raise _Degenerate("open boundary cycle")
            nxt, pc = out[node]
            cycle.append((node, pc))
            node = nxt
        if node != start:
            raise _Degenerate("boundary cycle does not close")
        cycles.append(cycle)
    return cycles


def _polar_cell(tri, ls, ipts, order, level):
    """Both subdomain rules of a circle-cut cell in polar coordinates about the center.

    A ray from the center meets the (convex) cell in one interval
    ``[rho_in, rho_out]``; the disk part is the band below the radius and the
    rest lies above it.  Breakpoints at vertex and crossing angles keep the band
    limits smooth on every angular sub-interval.  When the center sits next to an
    edge line the ray distance to that edge is nearly singular; such bands are
    mapped by a ruled map between their limit curves instead, which keeps the
    straight limit linear.
    """
    c = np.asarray(ls.center, dtype=float)
    r = ls.radius
    rel = tri - c
    d = np.roll(tri, -1, axis=0) - tri
    tol = 1e-12 * np.abs(d).max()
    lens = np.linalg.norm(d, axis=1)
    dist = (d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]) / lens
    # edges seen edge-on never bound a ray; one that contains the center is a pole limit
    through = np.abs(dist) <= tol
    proj = -np.einsum("ij,ij->i", rel, d) / np.einsum("ij,ij->i", d, d)
    on_edge = bool(np.any(through & (proj >= -1e-12) & (proj <= 1 + 1e-12)))
    inside = bool(np.all(dist < -tol) or np.all(dist > tol))
    ref = np.arctan2(*(tri.mean(axis=0) - c)[::-1])

    def wrap(a):
        return (a - ref + np.pi) % (2 * np.pi) - np.pi

    away = np.linalg.norm(rel, axis=1) > tol
    vert_ang = wrap(np.arctan2(rel[away, 1], rel[away, 0]))
    cross_ang = wrap(np.array([np.arctan2(*(p - c)[::-1]) for p in ipts]))
    if inside:
        lo, hi = -np.pi, np.pi
    else:
        lo, hi = vert_ang.min(), vert_ang.max()
    brk = np.concatenate([[lo, hi], vert_ang, cross_ang])
    brk = np.unique(brk[(brk >= lo) & (brk <= hi)])

    e0 = tri
    w0 = e0 - c
    ms = npoints_for(order + 1)
    mt = npoints_for(order) + 2 * ARC_EXTRA_POINTS
    s, ws = gauss_01(ms)
    tq, wt = gauss_01(mt)

    def hits(th):
        # ray distances to every edge line, one row per angle
        u = np.column_stack([np.cos(th), np.sin(th)])
        den = u[:, None, 0] * d[None, :, 1] - u[:, None, 1] * d[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = (w0[None, :, 0] * d[None, :, 1] - w0[None, :, 1] * d[None, :, 0]) / den
            t = (w0[None, :, 0] * u[:, None, 1] - w0[None, :, 1] * u[:, None, 0]) / den
        ok = np.isfinite(rho) & (t >= -1e-12) & (t <= 1 + 1e-12) & (rho >= -1e-14) & ~through[None]
        if not np.all(ok.any(axis=1)):
            raise GeometryError("ray misses a cut cell")
        rho_out = np.where(ok, rho, -np.inf)
        rho_in = np.where(ok, rho, np.inf)
        e_out = rho_out.argmax(axis=1)
        e_in = rho_in.argmin(axis=1)
        rows = np.arange(len(th))
        if inside or on_edge:
            return np.zeros(len(th)), rho_out[rows, e_out], None, e_out
        return rho_in[rows, e_in], rho_out[rows, e_out], e_in, e_out

    def limit(kind, th_a, th_b, e=None):
        # a band limit as a curve of t in [0, 1] with its derivative
        if kind == "pole":
            return np.broadcast_to(c, (mt, 2)), np.zeros((mt, 2))
        if kind == "arc":
            th = th_a + (th_b - th_a) * tq
            u = np.column_stack([np.cos(th), np.sin(th)])
            return c + r * u, r * (th_b - th_a) * np.column_stack([-u[:, 1], u[:, 0]])
        num = w0[e, 0] * d[e, 1] - w0[e, 1] * d[e, 0]
        ends = []
        for a in (th_a, th_b):
            u = np.array([np.cos(a), np.sin(a)])
            ends.append(c + num / (u[0] * d[e, 1] - u[1] * d[e, 0]) * u)
        return ends[0] + tq[:, None] * (ends[1] - ends[0]), np.broadcast_to(ends[1] - ends[0], (mt, 2))

    def polar_bands(th_a, th_b):
        # pointwise limits along rays: weights stay positive even where a band pinches shut
        th = th_a + (th_b - th_a) * tq
        rho_in, rho_out = hits(th)[:2]
        u = np.column_stack([np.cos(th), np.sin(th)])
        dth = (th_b - th_a) * wt
        for side, (bl, bh) in ((1, (rho_in, np.minimum(rho_out, r))), (2, (np.maximum(rho_in, r), rho_out))):
            keep = bh > bl
            if not keep.any():
                continue
            rr = bl[keep][None, :] + s[:, None] * (bh - bl)[keep][None, :]
            pts = c + rr[..., None] * u[keep][None, :, :]
            w = ws[:, None] * (bh - bl)[keep][None, :] * rr * dth[keep][None, :]
            out[side].append([(pts.reshape(-1, 2), w.ravel())])

    def ruled_bands(th_a, th_b):
        # limit curves fixed from the midpoint ray, straight ones linear in t
        r_in, r_out, e_in, e_out = (v if v is None else v[0] for v in hits(np.array([0.5 * (th_a + th_b)])))
        inner = ("pole", None) if e_in is None else ("edge", e_in)
        bands = {1: (inner, ("arc", None) if r < r_out else ("edge", e_out)) if r > r_in else None,
                 2: (("arc", None) if r > r_in else inner, ("edge", e_out)) if r < r_out else None}
        for side, band in bands.items():
            if band is None:
                continue
            (lk, le), (uk, ue) = band
            lo_p, lo_d = limit(lk, th_a, th_b, le)
            hi_p, hi_d = limit(uk, th_a, th_b, ue)
            xs = hi_p - lo_p
            pts = lo_p[None] + s[:, None, None] * xs[None]
            xt = lo_d[None] + s[:, None, None] * (hi_d - lo_d)[None]
            det = xs[None, :, 0] * xt[..., 1] - xs[None, :, 1] * xt[..., 0]
            w = ws[:, None] * wt[None, :] * det
            out[side].append([(pts.reshape(-1, 2), w.ravel())])

    # an edge line passing near the center makes the ray distance to it nearly singular
    near_line = (np.abs(dist) < 0.1 * lens) & ~through
    out = {1: [], 2: []}
    for a, b in zip(brk[:-1], brk[1:]):
        if b - a <= 1e-15:
            continue
        mid = ref + 0.5 * (a + b)
        _, _, e_in, e_out = (v if v is None else v[0] for v in hits(np.array([mid])))
        ruled = near_line[e_out] or (e_in is not None and near_line[e_in])
        nk = _nsplit(b - a, 2 ** level) * (1 if ruled else 4)
        for k in range(nk):
            th_a = ref + a + (b - a) * k / nk
            th_b = ref + a + (b - a) * (k + 1) / nk
            (ruled_bands if ruled else polar_bands)(th_a, th_b)
    return out


def _fan_cycle(side, cycle, nodes, ls, ms, mt_s, mt_c, sub):
    coords = np.array([nodes[j][0] for j, _ in cycle])
    candidates = []
    convex = ls.kind == "line" or side == 1
    if not convex:
        candidates += [nodes[j][0] for j, _ in cycle if nodes[j][1] >= 0]
    candidates.append(coords.mean(axis=0))
    for anchor in candidates:
        parts, ok = [], True
        for _, pc in cycle:
            for sp in (pc.split(_nsplit(pc.t1 - pc.t0, sub)) if pc.curved else [pc]):
                p, w, det, scale = _sector(anchor, sp, ms, mt_c if sp.curved else mt_s)
                if np.all(np.abs(det) <= 1e-13 * np.maximum(scale, 1e-300)):
                    continue
                if np.any(det <= 0.0):
                    ok = False
                    break
                parts.append((p, w))
            if not ok:
                break
        if ok:
            return parts
    raise _Degenerate("no anchor sees the whole boundary")


def _subdivided_cell(tri, ls, tol, order, iface_order, level):
    geo = _CellGeometry()
    mt_i = npoints_for(iface_order)
    t_i, w_i = gauss_01(mt_i)

    def leaf(t):
        phi = ls(t)
        sides = vertex_sides(phi, tol)
        if sides.min() == sides.max():
            p, w = map_triangle(t, order)
            geo.add_volume(int(sides[0]), p, w)
            return
        # lone vertex: the one whose side differs from the other two
        lone = next(i for i in range(3) if sides[i] != sides[(i + 1) % 3] and sides[i] != sides[(i + 2) % 3])
        a, b, c = t[lone], t[(lone + 1) % 3], t[(lone + 2) % 3]
        fa, fb, fc = phi[lone], phi[(lone + 1) % 3], phi[(lone + 2) % 3]
        pab = a + fa / (fa - fb) * (b - a)
        pac = a + fa / (fa - fc) * (c - a)
        s_lone, s_rest = int(sides[lone]), 3 - int(sides[lone])
        for piece, s in (((a, pab, pac), s_lone), ((pab, b, c), s_rest), ((pab, c, pac), s_rest)):
            piece = np.array(piece)
            p, w = map_triangle(piece, order)
            if np.all(w == 0.0):
                continue
            geo.add_volume(s, p, w)
        seg = _Seg(pab, pac)
        n_mid = ls.normal(0.5 * (pab + pac)[None])[0]
        if (pac - pab) @ np.array([-n_mid[1], n_mid[0]]) < 0:
            seg = seg.reversed()
        g, dg = seg.eval(t_i)
        length = np.linalg.norm(dg, axis=1)
        if length[0] > 0:
            geo.add_iface(g, w_i * length, ls.normal(g))

    def recurse(t, depth):
        if depth < level:
            mids = 0.5 * (t + np.roll(t, -1, axis=0))
            samples = np.vstack([t, mids, t.mean(axis=0)[None]])
            vals = ls(samples)
            s = vertex_sides(vals, tol)
            cen = t.mean(axis=0)
            diam = np.max(np.linalg.norm(t - np.roll(t, 1, axis=0), axis=1))
            gn = np.linalg.norm(ls.grad(cen[None])[0])
            if s.min() != s.max() or abs(vals[-1]) < diam * gn:
                m01, m12, m20 = mids
                for child in ((t[0], m01, m20), (m01, t[1], m12), (m20, m12, t[2]), (m01, m12, m20)):
                    recurse(np.array(child), depth + 1)
                return
        leaf(t)

    recurse(tri, 0)
    return geo


# ----------------------------------------------------------------------------
# assembled rules
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VolumeRule:
    cells: np.ndarray
    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class InterfaceRule:
    cells: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray


@dataclass(frozen=True, eq=False)
class CutQuadrature:
    """Quadrature for the two cut subdomains and the interface.

    Cells that lie entirely in one subdomain are listed in ``uncut`` and use the
    reference rule of degree ``order``; ``cut_volume`` holds explicit rules for the
    portions of cut cells.
    """

    mesh: Mesh
    order: int
    interface_order: int
    geom_level: int
    tol: float
    uncut: dict
    cut_volume: dict | None
    interface: InterfaceRule | None

    def volume(self, side: int, order: int | None = None) -> VolumeRule:
        """Explicit points for all of subdomain ``side`` (uncut cells mapped)."""
        order = self.order if order is None else order
        cells = self.uncut[side]
        p, w = map_triangle(self.mesh.vertices[self.mesh.cells[cells]], order)
        nq = p.shape[1]
        cut = self.cut_volume[side]
        return VolumeRule(np.concatenate([np.repeat(cells, nq), cut.cells]),
                          np.concatenate([p.reshape(-1, 2), cut.points]),
                          np.concatenate([w.ravel(), cut.weights]))

    def cell_volumes(self, side: int) -> np.ndarray:
        out = np.zeros(self.mesh.num_cells)
        out[self.uncut[side]] = self.mesh.areas[self.uncut[side]]
        cut = self.cut_volume[side]
        np.add.at(out, cut.cells, cut.weights)
        return out


def default_geom_level(levelset: LevelSet, refinement_level: int = 0) -> int:
    return 0 if _is_exact(levelset) else 2 + refinement_level


def _build(mesh, classification, levelset, order, interface_order, geom_level, want_volume, want_iface):
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    if geom_level < 0:
        raise ValueError(f"geom_level must be >= 0, got {geom_level}")
    if interface_order is None:
        interface_order = order + 1
    tol = classification.tol
    vol = {1: ([], [], []), 2: ([], [], [])}
    ic, ip, iw, inn = [], [], [], []
    for c in classification.cut_cells:
        tri = mesh.vertices[mesh.cells[c]]
        geo = None
        if _is_exact(levelset):
            try:
                geo = _exact_cell(tri, levelset, tol, order, interface_order, geom_level)
            except _Degenerate as exc:
                log.warning("cell %d: exact cut failed (%s); subdividing", c, exc)
        if geo is None:
            geo = _subdivided_cell(tri, levelset, tol, order, interface_order, max(geom_level, 6 if _is_exact(levelset) else 0))
        if want_volume:
            for side in (1, 2):
                pts, ws = geo.volume[side]
                if pts:
                    p = np.concatenate(pts)
                    w = np.concatenate(ws)
                    # grazing bands can leave roundoff-sized weights of either sign
                    if np.any(w < -1e-14 * mesh.areas[c]):
                        raise GeometryError(f"negative volume weight in cell {c}")
                    keep = w > 0
                    p, w = p[keep], w[keep]
                    vol[side][0].append(np.full(len(w), c))
                    vol[side][1].append(p)
                    vol[side][2].append(w)
        if want_iface:
            if geo.iface_pts:
                p = np.concatenate(geo.iface_pts)
                ic.append(np.full(len(p), c))
                ip.append(p)
                iw.append(np.concatenate(geo.iface_w))
                inn.append(np.concatenate(geo.iface_n))
            else:
                log.warning("cell %d is cut but carries no interface segment", c)

    def cat(parts, shape):
        return np.concatenate(parts) if parts else np.empty(shape)

    cut_volume = None
    if want_volume:
        cut_volume = {s: VolumeRule(cat(vol[s][0], (0,)).astype(np.int64), cat(vol[s][1], (0, 2)),
                                    cat(vol[s][2], (0,))) for s in (1, 2)}
    iface = None
    if want_iface:
        iface = InterfaceRule(cat(ic, (0,)).astype(np.int64), cat(ip, (0, 2)), cat(iw, (0,)), cat(inn, (0, 2)))
        if np.any(iface.weights < 0):
            raise GeometryError("negative interface weight")
    uncut = {s: classification.inside(s) for s in (1, 2)}
    return CutQuadrature(mesh, order, interface_order, geom_level, tol, uncut, cut_volume, iface)


def cut_quadrature(mesh: Mesh, classification: CellClassification, levelset: LevelSet,
                   order: int, interface_order: int | None = None,
                   geom_level: int | None = None) -> CutQuadrature:
    """Volume and interface rules in one pass over the cut cells."""
    if geom_level is None:
        geom_level = default_geom_level(levelset)
    return _build(mesh, classification, levelset, order, interface_order, geom_level, True, True)


def volume_quadrature(mesh, classification, levelset, order, geom_level=None) -> CutQuadrature:
    if geom_level is None:
        geom_level = default_geom_level(levelset)
    return _build(mesh, classification, levelset, order, None, geom_level, True, False)


def interface_quadrature(mesh, classification, levelset, order, geom_level=None) -> CutQuadrature:
    if geom_level is None:
        geom_level = default_geom_level(levelset)
    return _build(mesh, classification, levelset, order, order, geom_level, False, True)
