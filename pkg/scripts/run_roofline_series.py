#!/usr/bin/env python3
"""Produce roofline coordinate files.

The first series covers the classic suite on all architectures; the
second covers the mesh machine alone on the modern and spatial-matching
layers it is the only one to support.  Output: (operational intensity,
GOPS) TSV files a plotting tool can consume directly.
"""

import argparse
import sys
from pathlib import Path

from vectormesh.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/roofline")
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()
    out = Path(args.out)

    rc = cli_main(["sweep", "--workload", "classic", "--workers", str(args.workers),
                   "--out", str(out / "classic")])
    if rc:
        return rc
    rc = cli_main(["report", "--input", str(out / "classic" / "report.tsv"),
                   "--out", str(out / "classic")])
    if rc:
        return rc

    modern = ",".join([
        "DL DCONV3 d2", "DL DCONV3 d4", "DL DDW3 d2", "ES CONV3 PS",
        "MN DW3", "MN DW3 s2", "MN PW1", "CORR S3", "CORR S9",
    ])
    rc = cli_main(["sweep", "--arch", "vectormesh", "--workload", modern,
                   "--workers", str(args.workers), "--out", str(out / "exclusive")])
    if rc:
        return rc
    return cli_main(["report", "--input", str(out / "exclusive" / "report.tsv"),
                     "--out", str(out / "exclusive")])


if __name__ == "__main__":
    sys.exit(main())
