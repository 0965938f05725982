"""Prepare the Adult CSV if needed and run the full pipeline on it.

    python3 scripts/run_adult.py --out out/adult [--quick]
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from causal_disparity.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
QUICK = {"bootstrap": 5, "audit_bootstrap": 20, "forest": {"num_trees": 100}}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "out" / "adult")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--quick", action="store_true", help="few replicates and trees, for a smoke run")
    args = ap.parse_args()

    csv_path = ROOT / "data" / "adult.csv"
    if not csv_path.is_file():
        subprocess.run([sys.executable, str(ROOT / "scripts" / "prepare_adult.py"), str(ROOT / "data" / "adult"),
                        str(csv_path)], check=True)
    config = ROOT / "configs" / "adult.json"
    with tempfile.TemporaryDirectory() as tmp:
        if args.quick:
            raw = json.loads(config.read_text()) | QUICK
            raw["dataset"] = str(csv_path)
            config = Path(tmp) / "adult-quick.json"
            config.write_text(json.dumps(raw))
        argv = ["pipeline", "--config", str(config), "--out", str(args.out)]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        code = cli_main(argv)
    if code == 0:
        report = json.loads((args.out / "decomposition.json").read_text())
        print(json.dumps(report, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
