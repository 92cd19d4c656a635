"""Reference quadrature rules on [0, 1] and the unit triangle."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_01(m: int) -> tuple[np.ndarray, np.ndarray]:
    """``m``-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def npoints_for(order: int) -> int:
    return max(1, (order + 2) // 2)


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle, exact to degree ``order``.

    Points are barycentric-free reference coordinates (xi, eta); weights sum to 1/2.
    """
    m = npoints_for(order + 1)
    s, ws = gauss_01(m)
    t, wt = gauss_01(npoints_for(order))
    S, T = np.meshgrid(s, t, indexing="ij")
    # (s, t) -> s * ((1 - t) e1 + t e2), jacobian s
    xi = (S * (1.0 - T)).ravel()
    eta = (S * T).ravel()
    w = (np.outer(ws * s, wt)).ravel()
    pts = np.column_stack([xi, eta])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def map_triangle(tri: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical points/weights of ``triangle_rule`` on triangle(s) ``tri`` of shape (..., 3, 2)."""
    ref, w = triangle_rule(order)
    tri = np.asarray(tri, dtype=float)
    e1 = tri[..., 1, :] - tri[..., 0, :]
    e2 = tri[..., 2, :] - tri[..., 0, :]
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    pts = (tri[..., None, 0, :] + ref[:, 0, None] * e1[..., None, :]
           + ref[:, 1, None] * e2[..., None, :])
    return pts, np.abs(det)[..., None] * w
