"""Write the standard sample manifolds to CSV.

Usage: python3 scripts/generate_data.py [--out data] [--grid 100]
"""

import argparse
import sys
from pathlib import Path

from localkernels import cli
from localkernels.cli import MANIFOLDS


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="data", help="output directory")
    p.add_argument("--grid", type=int, default=100, help="torus grid side")
    args = p.parse_args(argv)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for name in MANIFOLDS:
        code = cli.main(["generate", name, "--grid", str(args.grid), "--out", args.out])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
