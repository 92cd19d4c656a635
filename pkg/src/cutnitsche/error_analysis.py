"""Error norms, convergence rates and the convergence table."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .fe_space import FESpace
from .forms import ExactSolution, NitscheWeights
from .geometry import CutQuadrature, LevelSet, cut_quadrature

# rates between errors this small carry no information
ROUNDOFF_FLOOR = 1e-10


def error_quadrature(space: FESpace, levelset: LevelSet, geom_level: int) -> CutQuadrature:
    """Cut rules of order ``2k+2`` for measuring errors."""
    k = space.k
    return cut_quadrature(space.mesh, space.classification, levelset, 2 * k + 2, 2 * k + 2, geom_level)


def _require(exact):
    if exact is None:
        raise ValueError("an exact solution is required")


def _side_errors(space, coeffs, exact, quad, side, gradient):
    vr = quad.volume(side)
    if len(vr.cells) == 0:
        return 0.0
    uh, gh = space.evaluate(coeffs, side, vr.cells, vr.points)
    if gradient:
        e = exact.gradient(side)(vr.points) - gh
        return float(vr.weights @ np.einsum("pa,pa->p", e, e))
    e = exact.value(side)(vr.points) - uh
    return float(vr.weights @ e ** 2)


def l2_error(space: FESpace, coefficients, exact: ExactSolution, quad: CutQuadrature) -> float:
    _require(exact)
    return math.sqrt(sum(_side_errors(space, coefficients, exact, quad, s, False) for s in (1, 2)))


def h1_errors(space: FESpace, coefficients, exact: ExactSolution, quad: CutQuadrature) -> tuple[float, float]:
    """Unweighted gradient errors on each subdomain."""
    _require(exact)
    return tuple(math.sqrt(_side_errors(space, coefficients, exact, quad, s, True)) for s in (1, 2))


def interface_jump_error(space, coefficients, exact, quad) -> float:
    """``|| h^{-1/2} (g_D - [[u_h]]) ||_Gamma^2`` with ``g_D`` taken from the exact pair."""
    it = quad.interface
    if len(it.cells) == 0:
        return 0.0
    u1, _ = space.evaluate(coefficients, 1, it.cells, it.points)
    u2, _ = space.evaluate(coefficients, 2, it.cells, it.points)
    gd = exact.u1(it.points) - exact.u2(it.points)
    e = gd - (u1 - u2)
    return float(it.weights @ (e ** 2 / space.mesh.cell_diameters[it.cells]))


def energy_error(space: FESpace, coefficients, exact: ExactSolution, quad: CutQuadrature,
                 weights: NitscheWeights, mu: tuple[float, float], variant: str = "penalized",
                 ghost: float | None = None) -> float:
    """Error in the interface energy norm.

    For the penalty-free variant pass ``ghost = s_h(u_h, u_h)`` (see
    ``forms.ghost_seminorm``); ``s_h`` annihilates the smooth exact solution, so
    this is the ghost part of the error.
    """
    _require(exact)
    e1, e2 = h1_errors(space, coefficients, exact, quad)
    val = mu[0] * e1 ** 2 + mu[1] * e2 ** 2
    val += weights.c0 * interface_jump_error(space, coefficients, exact, quad)
    if variant == "penalty-free":
        if ghost is None:
            raise ValueError("penalty-free energy error needs s_h(u_h, u_h)")
        if ghost < 0:
            raise ValueError("ghost seminorm must be nonnegative")
        val += ghost
    elif variant != "penalized":
        raise ValueError(f"unknown variant {variant!r}")
    return math.sqrt(max(val, 0.0))


def weighted_h2_seminorm(exact: ExactSolution, quad: CutQuadrature, mu: tuple[float, float]) -> float:
    """``mu_1^{1/2} |u_1|_2 + mu_2^{1/2} |u_2|_2`` over the two subdomains."""
    total = 0.0
    for side in (1, 2):
        hess = exact.hessian(side)
        if hess is None:
            raise ValueError("exact solution lacks second derivatives")
        vr = quad.volume(side)
        H = hess(vr.points)
        total += math.sqrt(mu[side - 1] * float(vr.weights @ np.einsum("pab,pab->p", H, H)))
    return total


def eoc(errors, hs, floor: float = 0.0) -> list[float]:
    """Rates ``log(e_{r-1}/e_r) / log(h_{r-1}/h_r)``; ``nan`` where undefined."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.ndim != 1 or len(errors) < 2:
        raise ValueError("need two equally long sequences with at least two entries")
    if np.any(hs <= 0):
        raise ValueError("mesh sizes must be positive")
    out = []
    for r in range(1, len(errors)):
        a, b = errors[r - 1], errors[r]
        if not (a > floor and b > floor) or hs[r - 1] == hs[r]:
            out.append(float("nan"))
        else:
            out.append(float(np.log(a / b) / np.log(hs[r - 1] / hs[r])))
    return out


@dataclass
class Row:
    level: int
    h: float
    ndof: int
    err_l2: float
    err_energy: float
    err_h1_1: float
    err_h1_2: float
    eoc_l2: float = float("nan")
    eoc_energy: float = float("nan")
    cond: float = float("nan")


COLUMNS = [f.name for f in fields(Row)]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v)) if math.isfinite(v) else ("inf" if v == math.inf else "nan")


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row: Row) -> None:
        if self.rows and not row.h < self.rows[-1].h:
            raise ValueError("mesh size must decrease down the table")
        self.rows.append(row)
        self._rates()

    def _rates(self):
        if len(self.rows) < 2:
            return
        hs = [r.h for r in self.rows]
        l2 = eoc([r.err_l2 for r in self.rows], hs, ROUNDOFF_FLOOR)
        en = eoc([r.err_energy for r in self.rows], hs, ROUNDOFF_FLOOR)
        for r, a, b in zip(self.rows[1:], l2, en):
            r.eoc_l2, r.eoc_energy = a, b

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            return v if not isinstance(v, float) or math.isfinite(v) else None
        rows = [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows]
        return json.dumps({"columns": COLUMNS, "meta": self.meta, "rows": rows}, indent=2)

    def write(self, path, fmt: str = "csv") -> None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        Path(path).write_text(self.to_csv() if fmt == "csv" else self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceTable":
        doc = json.loads(text)
        rows = [Row(**{k: (float("nan") if v is None else v) for k, v in r.items()}) for r in doc["rows"]]
        return cls(rows, doc.get("meta", {}))
