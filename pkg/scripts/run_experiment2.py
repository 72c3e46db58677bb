#!/usr/bin/env python3
"""Run the two-operation controlled experiment and print MAP tables.

Both core rules are applied with equal probability; the frequency baseline is
reported alongside compression ranking. Default is the reduced grid; --full
uses d=10 with e in 1..80 per the larger protocol.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from opminer.evalharness import GridSpec, ThresholdSpec, format_map_tables, run_grid, write_report_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--full", action="store_true", help="paper-scale grid")
    parser.add_argument("--out", default="runs/experiment2")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--seeds", type=int, default=5, help="seeds per cell (reduced grid)")
    args = parser.parse_args()

    if args.full:
        spec = GridSpec(
            d_values=(10,),
            e_values=tuple(range(1, 81)),
            p_values=tuple(round(0.1 * i, 1) for i in range(1, 11)),
            seeds=(1,),
            rules="experiment2",
            threshold=ThresholdSpec("calibrate"),
            ks=(1, 2, 5, 10),
            jobs=args.jobs,
        )
    else:
        spec = GridSpec(
            d_values=(10,),
            e_values=(5, 10, 20),
            p_values=(0.1, 0.2),
            seeds=tuple(range(1, args.seeds + 1)),
            rules="experiment2",
            threshold=ThresholdSpec("calibrate"),
            ks=(1, 2, 5, 10),
            jobs=args.jobs,
        )

    result = run_grid(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(result.rows, out / "report.csv", ks=spec.ks)
    print(format_map_tables(result.rows), end="")
    if result.errors:
        print(f"{len(result.errors)} cells failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
