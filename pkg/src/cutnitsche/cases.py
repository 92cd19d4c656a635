"""Manufactured interface problems with closed-form solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import ExactSolution, ProblemData
from .geometry import CircleLevelSet, LevelSet, LineLevelSet
from .mesh import Box

PI = np.pi


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    name: str
    levelset: LevelSet
    data: ProblemData
    domain: Box

    @property
    def exact(self) -> ExactSolution:
        return self.data.exact

    def self_check(self, npoints: int = 128, seed: int = 0, rtol: float = 1e-12) -> dict:
        """Residuals of the PDE, the two jump conditions and the boundary trace.

        Raises ``AssertionError`` when any relative residual exceeds ``rtol``.
        """
        rng = np.random.default_rng(seed)
        d, ex, ls, box = self.data, self.exact, self.levelset, self.domain
        x = np.column_stack([rng.uniform(box.xmin, box.xmax, 4 * npoints),
                             rng.uniform(box.ymin, box.ymax, 4 * npoints)])
        phi = ls(x)
        res = {}
        for side, mask in ((1, phi < 0), (2, phi > 0)):
            p = x[mask][:npoints]
            lap = np.trace(ex.hessian(side)(p), axis1=1, axis2=2)
            f = d.source(side)(p)
            res[f"pde{side}"] = _rel(-d.mu(side) * lap, f)

        g = _interface_points(ls, box, npoints)
        n = ls.normal(g)
        jump = ex.u1(g) - ex.u2(g)
        flux = (np.einsum("pa,pa->p", d.mu1 * ex.grad1(g) - d.mu2 * ex.grad2(g), n))
        res["dirichlet_jump"] = _rel(jump, d.g_D(g))
        res["flux_jump"] = _rel(flux, d.g_N(g, n))

        t = rng.uniform(0.0, 1.0, npoints)
        b = _boundary_points(box, t)
        side = np.where(ls(b) < 0, 1, 2)
        u = np.where(side == 1, ex.u1(b), ex.u2(b))
        res["boundary"] = _rel(d.boundary(b), u)
        bad = {k: v for k, v in res.items() if not v <= rtol}
        if bad:
            raise AssertionError(f"{self.name}: self-check failed {bad}")
        return res


def _rel(a, b):
    scale = max(1.0, float(np.max(np.abs(b))) if np.size(b) else 1.0)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0)) / scale


def _interface_points(ls, box, m):
    if isinstance(ls, CircleLevelSet):
        th = np.linspace(0.0, 2 * PI, m, endpoint=False)
        return np.asarray(ls.center) + ls.radius * np.column_stack([np.cos(th), np.sin(th)])
    if isinstance(ls, LineLevelSet):
        n = np.asarray(ls.direction)
        tang = np.array([-n[1], n[0]])
        s = np.linspace(-0.5, 0.5, m) * min(box.width, box.height)
        return np.asarray(ls.point) + s[:, None] * tang
    raise TypeError(f"no interface sampler for {type(ls).__name__}")


def _boundary_points(box, t):
    edge = (4 * t).astype(int) % 4
    s = 4 * t - np.floor(4 * t)
    x = np.where(edge == 0, box.xmin + s * box.width,
        np.where(edge == 1, box.xmax, np.where(edge == 2, box.xmax - s * box.width, box.xmin)))
    y = np.where(edge == 0, box.ymin,
        np.where(edge == 1, box.ymin + s * box.height, np.where(edge == 2, box.ymax, box.ymax - s * box.height)))
    return np.column_stack([x, y])


def _check_circle(r0, box):
    half = 0.5 * min(box.width, box.height)
    if not 0 < r0 < half:
        raise ValueError(f"radius must lie in (0, {half}), got {r0}")


def _r2(x):
    return np.einsum("pa,pa->p", x, x)


def _const_hess(c):
    return lambda x: np.broadcast_to(c * np.eye(2), (len(x), 2, 2)).copy()


def case_radial(mu1: float, mu2: float, r0: float = 0.5) -> ManufacturedCase:
    """Circular interface with continuous value and flux; ``f = -4``."""
    box = Box.square(-1.0, 1.0)
    _check_circle(r0, box)
    ex = ExactSolution(
        u1=lambda x: _r2(x) / mu1,
        grad1=lambda x: 2.0 * x / mu1,
        u2=lambda x: (_r2(x) - r0 ** 2) / mu2 + r0 ** 2 / mu1,
        grad2=lambda x: 2.0 * x / mu2,
        hess1=_const_hess(2.0 / mu1),
        hess2=_const_hess(2.0 / mu2),
    )
    zero = lambda x, *a: np.zeros(len(x))
    data = ProblemData(mu1, mu2, f=lambda x: np.full(len(x), -4.0), g_D=zero, g_N=zero,
                       boundary=ex.u2, exact=ex)
    return ManufacturedCase("radial", CircleLevelSet((0.0, 0.0), r0), data, box)


def _sin_sin(x):
    return np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])


def _cos_cos(x):
    return np.cos(PI * x[:, 0]) * np.cos(PI * x[:, 1])


def _grad_sin_sin(x):
    return PI * np.column_stack([np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1]),
                                 np.sin(PI * x[:, 0]) * np.cos(PI * x[:, 1])])


def _grad_cos_cos(x):
    return -PI * np.column_stack([np.sin(PI * x[:, 0]) * np.cos(PI * x[:, 1]),
                                  np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1])])


def _hess(diag, off):
    def h(x):
        a, b = diag(x), off(x)
        return -PI ** 2 * np.stack([np.stack([a, -b], -1), np.stack([-b, a], -1)], -2)
    return h


def case_trig_jump(mu1: float, mu2: float, r0: float = 0.5) -> ManufacturedCase:
    """Unrelated smooth functions on the two sides, so both jumps are nonzero."""
    box = Box.square(-1.0, 1.0)
    _check_circle(r0, box)
    ex = ExactSolution(u1=_sin_sin, grad1=_grad_sin_sin, u2=_cos_cos, grad2=_grad_cos_cos,
                       hess1=_hess(_sin_sin, _cos_cos), hess2=_hess(_cos_cos, _sin_sin))
    data = ProblemData(
        mu1, mu2,
        f=(lambda x: 2 * PI ** 2 * mu1 * _sin_sin(x), lambda x: 2 * PI ** 2 * mu2 * _cos_cos(x)),
        g_D=lambda x: _sin_sin(x) - _cos_cos(x),
        g_N=lambda x, n: np.einsum("pa,pa->p", mu1 * _grad_sin_sin(x) - mu2 * _grad_cos_cos(x), n),
        boundary=_cos_cos,
        exact=ex,
    )
    return ManufacturedCase("trig-jump", CircleLevelSet((0.0, 0.0), r0), data, box)


def case_linear_patch(offset: float = 0.5 + 1e-3 * np.sqrt(2.0)) -> ManufacturedCase:
    """``u = 1 + x + 2y`` on both sides of the line ``x = offset``."""
    box = Box.square(0.0, 1.0)
    if not box.xmin < offset < box.xmax:
        raise ValueError(f"offset must lie inside (0, 1), got {offset}")
    u = lambda x: 1.0 + x[:, 0] + 2.0 * x[:, 1]
    g = lambda x: np.broadcast_to([1.0, 2.0], x.shape).copy()
    ex = ExactSolution(u, g, u, g, _const_hess(0.0), _const_hess(0.0))
    zero = lambda x, *a: np.zeros(len(x))
    data = ProblemData(1.0, 1.0, f=zero, g_D=zero, g_N=zero, boundary=u, exact=ex)
    return ManufacturedCase("linear-patch", LineLevelSet.vertical(offset), data, box)


CASES = {"radial": case_radial, "trig-jump": case_trig_jump, "linear-patch": case_linear_patch}
