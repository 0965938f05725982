"""Reduce a raw HMDA loan-application-register CSV to the columns the presets use.

``loan_status`` is derived from ``action_taken_name``: originated or approved
applications become "Accepted", denials become "Denied" and every other action
(withdrawn, incomplete, purchased, preapproval) is dropped.

    python3 scripts/prepare_hdma.py hmda_2016_wa_all-records_labels.csv data/hdma.csv
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

KEEP = ["applicant_race_name_1", "property_type_name", "owner_occupancy_name", "applicant_sex_name",
        "loan_type_name", "loan_amount_000s", "applicant_income_000s"]
ACCEPTED = {"Loan originated", "Application approved but not accepted"}
DENIED = {"Application denied by financial institution"}


def status(action: str) -> str | None:
    if action in ACCEPTED:
        return "Accepted"
    if action in DENIED:
        return "Denied"
    return None


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw", type=Path)
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    kept = dropped = 0
    with open(args.raw, newline="") as src, open(args.out, "w", newline="") as dst:
        reader = csv.DictReader(src)
        missing = [c for c in KEEP + ["action_taken_name"] if c not in (reader.fieldnames or ())]
        if missing:
            raise SystemExit(f"error: {args.raw} lacks columns {missing}")
        w = csv.writer(dst, lineterminator="\n")
        w.writerow(KEEP + ["loan_status"])
        for row in reader:
            s = status(row["action_taken_name"])
            if s is None:
                dropped += 1
                continue
            w.writerow([row[c] for c in KEEP] + [s])
            kept += 1
    print(f"wrote {kept} rows to {args.out} ({dropped} other actions dropped)")


if __name__ == "__main__":
    main()
