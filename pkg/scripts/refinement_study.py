"""Compare converged solutions and monitor constants under N -> 2N.

    python3 scripts/refinement_study.py configs/refinement.yaml --N 16 32 64
"""

import argparse
import time

import numpy as np

from fuyau.config import build_problem, load_config
from fuyau.continuation import run_continuation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--N", type=int, nargs="+", default=[16, 32])
    args = ap.parse_args()
    cfg = load_config(args.config)
    prev = None
    for N in sorted(args.N):
        t0 = time.perf_counter()
        tr = run_continuation(build_problem(cfg, N=N))
        rep = tr.reports[-1]
        line = (f"N={N:3d}  {time.perf_counter() - t0:7.1f}s  residual {tr.final.residual_sup:.2e}  "
                f"M0 {rep.M0:.6f}  hess/grad {rep.c19_ratio:.6f}  grad-ineq gap {rep.lemma21_gap:.3e}")
        if prev is not None:
            # the coarse grid is every other point of the fine one
            step = N // prev[0]
            fine = tr.final.phi[tuple(slice(None, None, step) if s > 1 else slice(None) for s in tr.final.phi.shape)]
            line += (f"  |dphi| {np.max(np.abs(fine - prev[1])):.2e}"
                     f"  hess/grad drift {abs(rep.c19_ratio - prev[2]) / abs(rep.c19_ratio):.2%}")
        print(line, flush=True)
        prev = (N, tr.final.phi, rep.c19_ratio)


if __name__ == "__main__":
    main()
