"""Run every experiment and write summaries under one directory.

Usage: python3 scripts/reproduce_all.py [--scale 0.25] [--out results]
"""

import argparse
import sys
import time

from localkernels.experiments import FIGURES, run_figure, write_summary


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scale", type=float, default=1.0, help="fraction of the full-size point count")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--only", nargs="*", choices=FIGURES, help="subset of experiments")
    args = p.parse_args(argv)

    failed = []
    for fig in args.only or FIGURES:
        t0 = time.perf_counter()
        result = run_figure(fig, args.scale)
        write_summary(result, args.out, {"scale": args.scale})
        print(f"{fig}: {'PASS' if result.passed else 'FAIL'} ({time.perf_counter() - t0:.1f} s)")
        for c in result.checks:
            print(f"  {c.name}: {c.value:.6g} {c.comparison} {c.threshold:.6g}")
        if not result.passed:
            failed.append(fig)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
