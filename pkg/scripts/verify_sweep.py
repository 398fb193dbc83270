#!/usr/bin/env python3
"""Certificate sweep over agent counts and seeds; writes ``n,seed,checks_run,max_violation``.

Random unreliabilities for each (n, seed) are drawn from (0.02, 0.48).  The
process exits with status 3 if any check fails anywhere.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from factcheck.config import ExperimentConfig
from factcheck.harness import VerifyReport, verify_suite


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", default="2,3,4,5,6")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--out", default="verify_sweep.csv")
    args = p.parse_args(argv)

    lines = [VerifyReport.SWEEP_HEADER]
    failed = []
    for n in (int(v) for v in args.n.split(",")):
        for seed in range(args.seeds):
            rng = np.random.default_rng([n, seed])
            pi = tuple(float(v) for v in rng.uniform(0.02, 0.48, n))
            report = verify_suite(
                ExperimentConfig(pi=pi, seed=seed, horizon=args.horizon),
                samples=args.samples,
                draws=args.draws,
            )
            lines.append(report.sweep_row())
            status = "ok" if report.passed else "FAILED " + ",".join(report.failed)
            print(f"n={n} seed={seed}: {status}, max violation/tol = {report.max_violation:.3g}", flush=True)
            if not report.passed:
                failed.append((n, seed, report.failed))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 3 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
