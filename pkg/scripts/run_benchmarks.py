#!/usr/bin/env python3
"""Reproduce the synthetic benchmark tables.

Runs every case (or a chosen subset) against the builtin oracles, writes
one CSV and one JSON report per case into --out, and prints a summary
table with per-case wall time.  The accuracy bars themselves are asserted
by tests/test_acceptance.py; this script is the exploratory counterpart
where you can vary seeds, sample counts, and methods freely.

Typical runs:

    python scripts/run_benchmarks.py                      # full suite, ~6 min
    python scripts/run_benchmarks.py --case hub-one-node
    python scripts/run_benchmarks.py --quick              # 1 seed, smoke sizes
"""

import argparse
import dataclasses
import os
import sys
import time

from hsic_explain.benchmarks import CASE_IDS, default_case, run_case, write_csv, write_json


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", action="append", choices=CASE_IDS, dest="cases",
                    help="run only this case (repeatable); default: all")
    ap.add_argument("--methods", default="l1,group,fused")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--jobs", type=int, default=max(1, min(4, os.cpu_count() or 1)))
    ap.add_argument("--out", default="results")
    ap.add_argument("--quick", action="store_true",
                    help="single seed and reduced sample counts; noisy numbers, fast feedback")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    cases = tuple(args.cases) if args.cases else CASE_IDS
    methods = tuple(args.methods.split(","))
    seeds = (0,) if args.quick else tuple(int(s) for s in args.seeds.split(","))
    os.makedirs(args.out, exist_ok=True)

    all_rows = []
    for cid in cases:
        case = default_case(cid)
        if args.quick:
            case = dataclasses.replace(case, m_samples=min(case.m_samples, 121))
        t0 = time.perf_counter()
        result = run_case(case, methods=methods, seeds=seeds, jobs=args.jobs)
        elapsed = time.perf_counter() - t0
        write_csv(result.rows, os.path.join(args.out, f"{cid}.csv"))
        write_json(result, os.path.join(args.out, f"{cid}.json"))
        all_rows.extend(result.rows)
        print(f"# {cid}: {elapsed:.1f}s", file=sys.stderr)

    print(f"{'case':<14} {'method':<7} {'metric':<14} {'mean':>6} {'stddev':>7} {'n':>3}")
    for r in all_rows:
        print(f"{r.case_id:<14} {r.method:<7} {r.metric:<14} {r.mean:6.3f} {r.stddev:7.3f} {r.n:>3}")
    print(f"reports written to {args.out}/", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
