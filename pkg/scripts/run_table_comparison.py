#!/usr/bin/env python3
"""Run the classic layer suite on all three architectures at 128 and 512
PEs and print the comparison table (normalized accesses, performance,
area efficiency).  Writes report.tsv plus per-cell stats under --out."""

import argparse
import sys

from vectormesh.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/table_comparison")
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--spatial", type=int, default=None)
    args = ap.parse_args()
    argv = ["sweep", "--workload", "classic", "--out", args.out,
            "--workers", str(args.workers)]
    if args.spatial:
        argv += ["--spatial", str(args.spatial)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
