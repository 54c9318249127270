#!/usr/bin/env python3
"""Compare input-kernel choices on the series-chunk case.

The (node, time) unit features after walk noise are continuous, so the
"auto" default scores them with a Gaussian kernel on the raw values.  The
alternative treats features as labels: binarize at 0.5 and use a delta
kernel.  Both are legitimate readings of the construction; this script
runs the case under each and prints the precision tables side by side.

    python scripts/case5_kernels.py              # 3 seeds, ~5 min
    python scripts/case5_kernels.py --seeds 0    # quick look
"""

import argparse
import dataclasses
import os
import sys
import time

from hsic_explain.benchmarks import default_case, run_case
from hsic_explain.kernels import KernelConfig

CONFIGS = (
    ("gaussian-raw", KernelConfig(input_kernel="gaussian")),
    ("delta-binarized", KernelConfig(input_kernel="delta")),
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--methods", default="l1,group,fused")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--jobs", type=int, default=max(1, min(4, os.cpu_count() or 1)))
    args = ap.parse_args(argv)
    methods = tuple(args.methods.split(","))
    seeds = tuple(int(s) for s in args.seeds.split(","))

    tables = {}
    for name, kconf in CONFIGS:
        case = dataclasses.replace(default_case("series-chunk"), kernels=kconf)
        t0 = time.perf_counter()
        result = run_case(case, methods=methods, seeds=seeds, jobs=args.jobs)
        print(f"# {name}: {time.perf_counter() - t0:.1f}s", file=sys.stderr)
        tables[name] = {r.method: r for r in result.rows if r.metric == "precision@tn"}

    print(f"{'method':<7} " + " ".join(f"{name:>18}" for name, _ in CONFIGS))
    for method in methods:
        cells = []
        for name, _ in CONFIGS:
            r = tables[name][method]
            cells.append(f"{r.mean:.3f} (+-{r.stddev:.3f})")
        print(f"{method:<7} " + " ".join(f"{c:>18}" for c in cells))
    return 0


if __name__ == "__main__":
    sys.exit(main())
