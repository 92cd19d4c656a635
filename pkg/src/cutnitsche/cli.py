"""Command-line driver for convergence studies and conditioning sweeps."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import forms
from .cases import CASES, ManufacturedCase
from .error_analysis import (ConvergenceTable, Row, energy_error, error_quadrature, h1_errors,
                             l2_error)
from .fe_space import build_space
from .geometry import CircleLevelSet, classify_cells, cut_quadrature, default_geom_level
from .mesh import Box, build_structured_mesh
from .solver import SingularSystemError, estimate_condition, solve

log = logging.getLogger(__name__)

VARIANTS = ("penalized", "penalty-free")


class LevelError(RuntimeError):
    def __init__(self, level, exc):
        super().__init__(f"level {level}: {type(exc).__name__}: {exc}")
        self.level = level


@dataclass(frozen=True)
class RunConfig:
    case: str = "radial"
    variant: str = "penalized"
    k: int = 1
    mu1: float = 1.0
    mu2: float = 1.0
    gamma_g: float = 0.5
    r0: float | None = None  # circle radius, or line offset for the patch case
    n0: int = 8
    levels: int = 4
    solver: str = "direct"
    fmt: str = "csv"
    out: str | None = None
    ghost_in_penalized: bool = False
    condition: bool = False

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {sorted(CASES)}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.k not in (1, 2):
            raise ValueError(f"k must be 1 or 2, got {self.k}")
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("mu1 and mu2 must be positive")
        if self.gamma_g < 0:
            raise ValueError("gamma_g must be nonnegative")
        if self.n0 < 1 or self.levels < 1:
            raise ValueError("n0 and levels must be positive")
        if self.solver not in ("direct", "iterative"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {self.fmt!r}")

    def make_case(self) -> ManufacturedCase:
        if self.case == "linear-patch":
            return CASES[self.case]() if self.r0 is None else CASES[self.case](self.r0)
        kw = {} if self.r0 is None else {"r0": self.r0}
        return CASES[self.case](self.mu1, self.mu2, **kw)

    @property
    def uses_ghost(self) -> bool:
        return self.variant == "penalty-free" or self.ghost_in_penalized


@dataclass(eq=False)
class Discretization:
    mesh: object
    classification: object
    quad: object
    space: object
    terms: dict
    system: forms.LinearSystem
    geom_level: int


def discretize(case: ManufacturedCase, n: int, cfg: RunConfig, refinement_level: int = 0,
               rhs: bool = True) -> Discretization:
    """Mesh, classify, integrate and assemble one level."""
    mesh = build_structured_mesh(n, case.domain)
    ls = case.levelset
    cl = classify_cells(mesh, ls)
    gl = default_geom_level(ls, refinement_level)
    quad = cut_quadrature(mesh, cl, ls, 2 * cfg.k, 2 * cfg.k + 1, gl)
    space = build_space(mesh, cl, cfg.k)
    gamma = cfg.gamma_g if cfg.uses_ghost else 0.0
    terms = forms.assemble_terms(space, quad, case.data, gamma)
    if cfg.variant == "penalized":
        system = forms.assemble_penalized(space, quad, case.data, gamma, terms=terms)
    else:
        system = forms.assemble_penalty_free(space, quad, case.data, gamma, terms=terms)
    return Discretization(mesh, cl, quad, space, terms, system, gl)


def run_level(cfg: RunConfig, level: int) -> Row:
    case = cfg.make_case()
    n = cfg.n0 * 2 ** level
    t0 = time.perf_counter()
    try:
        d = discretize(case, n, cfg, level)
        rep = solve(d.system, method=cfg.solver)
        u = d.system.expand(rep.x)
        eq = error_quadrature(d.space, case.levelset, d.geom_level + 1)
        ex = case.exact
        e1, e2 = h1_errors(d.space, u, ex, eq)
        variant = "penalty-free" if cfg.uses_ghost else "penalized"
        mu = (case.data.mu1, case.data.mu2)
        gh = forms.ghost_seminorm(d.space, case.data, cfg.gamma_g, u) if cfg.uses_ghost else None
        en = energy_error(d.space, u, ex, eq, case.data.weights, mu, variant, gh)
        cond = float("nan")
        if cfg.condition:
            try:
                cond = estimate_condition(d.system)
            except SingularSystemError:
                cond = math.inf
        row = Row(level, d.mesh.h, d.space.ndof, l2_error(d.space, u, ex, eq), en, e1, e2, cond=cond)
    except Exception as exc:
        raise LevelError(level, exc) from exc
    log.info("level %d: n=%d ndof=%d l2=%.3e energy=%.3e (%.1fs)", level, n, row.ndof,
             row.err_l2, row.err_energy, time.perf_counter() - t0)
    return row


def _workers(n):
    cap = os.environ.get("CUTNITSCHE_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, limit))


def run_convergence(cfg: RunConfig) -> ConvergenceTable:
    """One row per level ``n = n0 * 2**level``; writes the table when ``cfg.out`` is set."""
    cfg.make_case().self_check()
    with ThreadPoolExecutor(_workers(cfg.levels)) as pool:
        # finest levels first so the longest job starts early
        futures = {l: pool.submit(run_level, cfg, l) for l in reversed(range(cfg.levels))}
        rows = [futures[l].result() for l in range(cfg.levels)]
    meta = {k: v for k, v in vars(cfg).items() if k not in ("out", "fmt")}
    table = ConvergenceTable(meta=meta)
    for r in rows:
        table.add(r)
    if cfg.out:
        table.write(cfg.out, cfg.fmt)
    return table


# ----------------------------------------------------------------------------
# conditioning sweep
# ----------------------------------------------------------------------------

SWEEP_ANGLE = 0.3  # direction of approach, away from mesh lines
SWEEP_VERTEX = (0.5, 0.0)


def sweep_levelset(offset: float, h: float, r0: float, vertex=SWEEP_VERTEX, angle=SWEEP_ANGLE) -> CircleLevelSet:
    """Circle of radius ``r0`` with ``phi(vertex) = -offset * h``.

    As ``offset`` shrinks the circle passes ever closer to ``vertex``, leaving
    slivers of subdomain 1 in the surrounding cells.
    """
    e = np.array([math.cos(angle), math.sin(angle)])
    c = np.asarray(vertex) - (r0 - offset * h) * e
    return CircleLevelSet(tuple(c), r0)


@dataclass
class SweepRow:
    offset: float
    kappa: float
    kappa_no_ghost: float = float("nan")


def _kappa(case, n, cfg) -> float:
    try:
        d = discretize(case, n, cfg, 0)
        return estimate_condition(d.system)
    except SingularSystemError:
        return math.inf


def run_conditioning_sweep(cfg: RunConfig, offsets, compare_no_ghost: bool = False) -> list[SweepRow]:
    """Condition estimates of the reduced system as the interface approaches a vertex."""
    base = cfg.make_case()
    mesh = build_structured_mesh(cfg.n0, base.domain)
    r0 = 0.5 if cfg.r0 is None else cfg.r0
    rows = []
    for off in offsets:
        ls = sweep_levelset(off, mesh.h, r0)
        case = replace(base, levelset=ls)
        row = SweepRow(float(off), _kappa(case, cfg.n0, cfg))
        if compare_no_ghost:
            row.kappa_no_ghost = _kappa(case, cfg.n0, replace(cfg, gamma_g=0.0))
        log.info("offset %.1e: kappa %.3e (no ghost %.3e)", off, row.kappa, row.kappa_no_ghost)
        rows.append(row)
    return rows


def sweep_to_csv(rows) -> str:
    lines = ["offset,kappa,kappa_no_ghost"]
    for r in rows:
        lines.append(",".join(repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else "nan")
                              for v in (r.offset, r.kappa, r.kappa_no_ghost)))
    return "\n".join(lines) + "\n"


def default_offsets(count: int = 16) -> np.ndarray:
    return np.logspace(-1, -8, count)


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutnitsche", description="Unfitted Nitsche interface solver: convergence and conditioning runs.")
    p.add_argument("--case", choices=sorted(CASES), default="radial")
    p.add_argument("--variant", choices=VARIANTS, default="penalized")
    p.add_argument("--k", type=int, choices=(1, 2), default=1)
    p.add_argument("--mu1", type=float, default=1.0)
    p.add_argument("--mu2", type=float, default=1.0)
    p.add_argument("--gamma-g", type=float, default=0.5)
    p.add_argument("--r0", type=float, default=None, help="circle radius (line offset for linear-patch)")
    p.add_argument("--n0", type=int, default=8)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--solver", choices=("direct", "iterative"), default="direct")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.add_argument("--cond-sweep", action="store_true", help="run the interface-position conditioning sweep")
    p.add_argument("--no-ghost", action="store_true", help="add a gamma_g=0 comparison column to the sweep")
    p.add_argument("--offsets", type=int, default=16, help="number of sweep offsets in [1e-8, 1e-1]")
    p.add_argument("--ghost-penalized", action="store_true", help="add the ghost penalty to the penalized variant")
    p.add_argument("--condition", action="store_true", help="estimate the condition number on every level")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(args.case, args.variant, args.k, args.mu1, args.mu2, args.gamma_g, args.r0,
                        args.n0, args.levels, args.solver, args.fmt, args.out,
                        args.ghost_penalized, args.condition)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.cond_sweep:
            rows = run_conditioning_sweep(cfg, default_offsets(args.offsets), args.no_ghost)
            text = sweep_to_csv(rows)
            if args.fmt == "json":
                text = json.dumps([{k: (v if math.isfinite(v) else None) for k, v in vars(r).items()}
                                   for r in rows], indent=2)
            if cfg.out:
                with open(cfg.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
        else:
            table = run_convergence(replace(cfg, out=None))
            text = table.to_csv() if cfg.fmt == "csv" else table.to_json()
            if cfg.out:
                table.write(cfg.out, cfg.fmt)
            else:
                sys.stdout.write(text)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
