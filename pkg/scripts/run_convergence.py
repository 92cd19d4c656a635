#!/usr/bin/env python3
"""Run the standard convergence studies and write one CSV per study.

    python scripts/run_convergence.py --outdir results/
    python scripts/run_convergence.py --only radial-penalized --levels 6
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from cutnitsche.cli import RunConfig, run_convergence

STUDIES = {
    "radial-penalized": RunConfig(case="radial", variant="penalized", k=1, mu1=1.0, mu2=1000.0, n0=8, levels=5),
    "radial-penalty-free": RunConfig(case="radial", variant="penalty-free", k=1, mu1=1.0, mu2=1000.0,
                                     gamma_g=0.5, n0=8, levels=5),
    "trig-jump-p2": RunConfig(case="trig-jump", variant="penalized", k=2, mu1=1.0, mu2=10.0, n0=8, levels=5),
    "radial-mu1": RunConfig(case="radial", k=1, mu1=1.0, mu2=1.0, n0=8, levels=5),
    "radial-mu10": RunConfig(case="radial", k=1, mu1=1.0, mu2=10.0, n0=8, levels=5),
    "patch": RunConfig(case="linear-patch", k=1, n0=4, levels=3),
}


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--outdir", type=Path, default=Path("results"))
    p.add_argument("--only", choices=sorted(STUDIES), action="append")
    p.add_argument("--levels", type=int, default=None, help="override the level count of every study")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args.outdir.mkdir(parents=True, exist_ok=True)
    for name in args.only or STUDIES:
        cfg = STUDIES[name]
        if args.levels:
            cfg = replace(cfg, levels=args.levels)
        table = run_convergence(replace(cfg, out=str(args.outdir / f"{name}.csv")))
        last = table.rows[-1]
        print(f"{name:22s} final EOC L2 {last.eoc_l2:.3f}  energy {last.eoc_energy:.3f}")


if __name__ == "__main__":
    main()
