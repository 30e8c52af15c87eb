"""Solve one scenario for several A and tabulate M0, the Hessian/gradient ratio, the gradient-inequality gap
and the monotonicity gaps.

    python3 scripts/a_sweep.py configs/acceptance_n2.yaml --A 0.025 0.05 0.1 --csv runs/a_sweep.csv
"""

import argparse
import csv
import math
import time

from fuyau.config import build_problem, load_config
from fuyau.continuation import run_continuation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--A", type=float, nargs="+", required=True)
    ap.add_argument("--N", type=int)
    ap.add_argument("--csv")
    args = ap.parse_args()
    cfg = load_config(args.config)
    As = sorted(args.A)
    rows, phis = [], []
    for A in As:
        t0 = time.perf_counter()
        tr = run_continuation(build_problem(cfg, A=A, N=args.N))
        rep = tr.reports[-1]
        phis.append(tr.final.phi)
        rows.append({"A": A, "seconds": round(time.perf_counter() - t0, 1), "steps": len(tr.states) - 1,
                     "residual": tr.final.residual_sup, "M0": rep.M0, "c19_ratio": rep.c19_ratio,
                     "lemma21_gap": rep.lemma21_gap, "m2_min": min(s.cone_margins[1] for s in tr.states)})
        print(rows[-1], flush=True)
    for row, (phi, phit), At in zip(rows, zip(phis, phis[1:]), As[1:]):
        gap = phi - phit
        row.update(next_A=At, min_gap=float(gap.min()), log_ratio=math.log(At / row["A"]))
        print(f"A={row['A']:g} vs {At:g}: min gap {gap.min():.6f}, log ratio {row['log_ratio']:.6f}")
    if args.csv:
        fields = sorted({k for r in rows for k in r})
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
