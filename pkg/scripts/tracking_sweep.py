#!/usr/bin/env python3
"""Tracking summary across seeds, mean segment durations and N; one CSV row per run.

    python3 scripts/tracking_sweep.py --n 16 32 --segments 1 3 10 --seeds 10 --out sweep.csv
"""

import argparse
from dataclasses import replace
from pathlib import Path

from thzbeam.config import reference_scenario
from thzbeam.experiments import load_book, track_once, write_csv

COLUMNS = ("n", "mean_segment_s", "seed", "training", "mode1", "mode2", "mode2_success", "min_norm_gain",
           "outage_count", "within_3db_fraction", "complete")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, nargs="+", default=[16])
    p.add_argument("--segments", type=float, nargs="+", default=[3.0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--horizon", type=float, default=30.0)
    p.add_argument("--out", type=Path, default=Path("tracking_sweep.csv"))
    args = p.parse_args()

    rows = []
    for n in args.n:
        scen = replace(reference_scenario(), n=n, horizon_s=args.horizon)
        book = load_book(scen)
        for seg in args.segments:
            s_cfg = replace(scen, mean_segment_s=seg)
            for seed in range(args.seeds):
                s = track_once(s_cfg, seed, book)[0].summary()
                e = s["events"]
                rows.append((n, seg, seed, e["training"], e["mode1"], e["mode2"], e["mode2_success"],
                             s["min_norm_gain"], s["outage_count"], s["within_3db_fraction"], s["complete"]))
                print(" ".join(str(x) for x in rows[-1]))
    write_csv(args.out, "tracking_sweep", COLUMNS, rows)


if __name__ == "__main__":
    main()
