#!/usr/bin/env python3
"""Numerical census of mean-field equilibria, with local stability of each point.

For each interior zero the script prints the eigenvalues of the
finite-difference Jacobian, so attracting points, saddles and the slow
convergence rate near ``pi`` can be read off directly.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from factcheck.config import parse_float_list
from factcheck.lyapunov import level_constants, lyapunov_report
from factcheck.meanfield import fd_jacobian, find_equilibria


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pi", default="0.1,0.2,0.3")
    p.add_argument("--starts", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="write the equilibrium set here")
    args = p.parse_args(argv)

    pi = np.array(parse_float_list(args.pi))
    eq = find_equilibria(pi, multistart=args.starts, seed=args.seed)
    print(f"{len(eq.interior)} interior zeros from {args.starts} starts; metadata {eq.metadata}")
    for e in eq.interior:
        eig = np.sort(np.linalg.eigvals(fd_jacobian(e.x.values, pi)).real)
        print(f"  x = {np.round(e.x.values, 9).tolist()}  residual {e.residual:.1e}  {e.tag}  eigenvalues {np.round(eig, 4).tolist()}")
    lc = level_constants(pi)
    print(f"boundary zeros (V = {np.round(lc.boundary_equilibrium_values, 6).tolist()}):")
    for b in eq.boundary:
        rep = lyapunov_report(b, pi)
        print(f"  x = {np.round(b.values, 6).tolist()}  V {rep.V:.6f}  residual {rep.residual:.1e}")
    print(f"M_min = {lc.M_min:.7f}")
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(eq.to_json() + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
