"""Convert the raw UCI Adult files into one headed CSV.

Train and test files are concatenated; "?" cells become empty (and are
dropped later by the loader) and the trailing "." on test labels is removed.

    python scripts/prepare_adult.py data/adult data/adult.csv
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

COLUMNS = ["age", "workclass", "fnlwgt", "education", "education-num", "marital-status", "occupation",
           "relationship", "race", "sex", "capital-gain", "capital-loss", "hours-per-week", "native-country",
           "income"]


def rows(path: Path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(COLUMNS):
                continue
            cells[-1] = cells[-1].rstrip(".")
            yield ["" if c == "?" else c for c in cells]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw_dir", type=Path)
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    n = 0
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for name in ("adult.data", "adult.test"):
            for r in rows(args.raw_dir / name):
                w.writerow(r)
                n += 1
    print(f"wrote {n} rows to {args.out}")


if __name__ == "__main__":
    main()
