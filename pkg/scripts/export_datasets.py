#!/usr/bin/env python3
"""Export the wine and crabs data sets to CSV for the real-data checks.

Neither data set ships with the package. This script writes

  wine.csv   13 chemical measurements plus a ``Class`` column (1, 2, 3)
  crabs.csv  MASS::crabs columns ``sp, sex, index, FL, RW, CL, CW, BD``

Sources, tried in order:

  wine   scikit-learn's ``load_wine`` (identical values to gclus::wine),
         or an R installation with the gclus package
  crabs  an R installation with MASS, or a local ``crabs.csv`` such as the
         one bundled inside the ``pydataset`` source distribution

R route, if you prefer it:

  Rscript -e 'library(gclus); data(wine); write.csv(wine, "wine.csv", row.names=FALSE)'
  Rscript -e 'library(MASS); write.csv(crabs, "crabs.csv", row.names=FALSE)'

Then point the acceptance tests at the files:

  RGPCM_WINE_CSV=wine.csv RGPCM_CRABS_CSV=crabs.csv pytest tests/test_acceptance.py
"""
from __future__ import annotations

import argparse
import csv
import os
import shutil
import subprocess
import sys


def export_wine(path: str) -> bool:
    try:
        from sklearn.datasets import load_wine
    except ImportError:
        return _rscript("library(gclus); data(wine); write.csv(wine, '%s', row.names=FALSE)" % path)
    w = load_wine()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["Class"] + list(w.feature_names))
        for label, row in zip(w.target, w.data):
            out.writerow([int(label) + 1] + [repr(float(v)) for v in row])
    return True


def export_crabs(path: str, source: str | None) -> bool:
    if source:
        shutil.copyfile(source, path)
        return True
    return _rscript("library(MASS); write.csv(crabs, '%s', row.names=FALSE)" % path)


def _rscript(expr: str) -> bool:
    if shutil.which("Rscript") is None:
        return False
    return subprocess.run(["Rscript", "-e", expr], check=False).returncode == 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--crabs-source", help="existing crabs CSV to copy (e.g. from pydataset)")
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    status = 0
    for name, ok in (
        ("wine", export_wine(os.path.join(args.out, "wine.csv"))),
        ("crabs", export_crabs(os.path.join(args.out, "crabs.csv"), args.crabs_source)),
    ):
        print(f"{name}: {'written' if ok else 'no source available'}")
        status |= not ok
    return status


if __name__ == "__main__":
    sys.exit(main())
