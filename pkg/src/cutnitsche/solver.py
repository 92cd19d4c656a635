"""Sparse direct/iterative solves and 2-norm condition estimates."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESTART = 50
MAXITER = 2000


class SingularSystemError(RuntimeError):
    pass


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SolveReport:
    x: np.ndarray
    residual: float
    method: str
    iterations: int | None = None
    pivots_ok: bool = True


def _matrix(system):
    A = system.A if hasattr(system, "A") else system
    return sp.csc_matrix(A)


def _rhs(system, b):
    if b is None:
        b = getattr(system, "b", None)
    if b is None:
        raise ValueError("no right-hand side given")
    return np.asarray(b, dtype=float)


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return r / nb if nb > 0 else r


def factorize(A: sp.csc_matrix):
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = spla.splu(A)
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        raise SingularSystemError(f"LU factorization failed: {exc}") from exc
    d = np.abs(lu.U.diagonal())
    if d.size and (d.min() == 0 or not np.all(np.isfinite(d))):
        raise SingularSystemError("zero pivot in LU factorization")
    return lu


def _pivot_health(lu) -> bool:
    d = np.abs(lu.U.diagonal())
    return bool(d.size == 0 or d.min() > 1e3 * np.finfo(float).eps * d.max())


def _direct(A, b, tol):
    if b.size == 0:
        return SolveReport(b.copy(), 0.0, "direct")
    lu = factorize(A)
    x = lu.solve(b)
    res = _relres(A, x, b)
    if res > tol:
        # one step of iterative refinement
        x = x + lu.solve(b - A @ x)
        res = _relres(A, x, b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution")
    if res > tol:
        raise SolverFailure(f"direct solve residual {res:.3e} above tolerance {tol:.1e}")
    return SolveReport(x, res, "direct", None, _pivot_health(lu))


def _iterative(A, b, tol):
    if b.size == 0:
        return SolveReport(b.copy(), 0.0, "iterative", 0)
    try:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError as exc:
        log.info("ILU failed (%s); falling back to LU", exc)
        return _fallback(A, b, tol)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=RESTART, maxiter=MAXITER, M=M,
                         callback=cb, callback_type="pr_norm")
    res = _relres(A, x, b)
    if info != 0 or res > tol or not np.all(np.isfinite(x)):
        log.info("GMRES stalled (info=%d, residual %.2e); falling back to LU", info, res)
        return _fallback(A, b, tol)
    return SolveReport(x, res, "iterative", count[0])


def _fallback(A, b, tol):
    try:
        rep = _direct(A, b, tol)
    except SolverFailure as exc:
        raise SolverFailure(f"iterative solve and direct fallback failed: {exc}") from exc
    return SolveReport(rep.x, rep.residual, "direct", None, rep.pivots_ok)


def solve(system, tol: float = 1e-10, method: str = "direct", b=None) -> SolveReport:
    """Solve ``A x = b`` for a LinearSystem (or a bare sparse matrix plus ``b``)."""
    if not 0 < tol < 1:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    A = _matrix(system)
    b = _rhs(system, b)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.size:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if method == "direct":
        return _direct(A, b, tol)
    if method == "iterative":
        return _iterative(A, b, tol)
    raise ValueError(f"unknown method {method!r}")


def estimate_condition(system, iters: int = 200, rtol: float = 1e-6, seed: int = 0) -> float:
    """``sigma_max / sigma_min`` by power iteration on ``A^T A`` and its inverse."""
    A = _matrix(system)
    n = A.shape[0]
    if n == 0:
        return 1.0
    lu = factorize(A)
    AT = A.T.tocsc()
    rng = np.random.default_rng(seed)

    def power(apply):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = apply(v)
            new = np.linalg.norm(w)
            if not np.isfinite(new) or new == 0:
                raise SingularSystemError("breakdown in condition estimate")
            v = w / new
            if abs(new - lam) <= rtol * new:
                lam = new
                break
            lam = new
        return lam

    smax2 = power(lambda v: AT @ (A @ v))
    # (A^T A)^{-1} v = A^{-1} A^{-T} v
    sinv2 = power(lambda v: lu.solve(lu.solve(v, trans="T")))
    return float(np.sqrt(smax2 * sinv2))
