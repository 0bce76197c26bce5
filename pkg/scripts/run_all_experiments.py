#!/usr/bin/env python3
"""Run every experiment sweep into one output directory.

    python3 scripts/run_all_experiments.py --out results --trials 500
    python3 scripts/run_all_experiments.py --reference --out results_reference
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from thzbeam.config import EXPERIMENTS, ExperimentConfig, ScenarioConfig, load_scenario, reference_scenario
from thzbeam.experiments import run_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--config", type=Path, help="scenario file")
    p.add_argument("--reference", action="store_true", help="reference operating point (N=32, B*t symbols per test)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seeds", type=int, default=5, help="trajectories for tracking_trace")
    p.add_argument("--codebook-dir", help="reuse stored codebooks")
    p.add_argument("--only", nargs="*", choices=EXPERIMENTS, default=EXPERIMENTS)
    args = p.parse_args()

    scen = reference_scenario() if args.reference else load_scenario(args.config) if args.config else ScenarioConfig()
    base = ExperimentConfig(seed=args.seed, trials=args.trials, seeds=args.seeds, out=str(args.out),
                            codebook_dir=args.codebook_dir, scenario=scen)
    sweeps = {
        "patterns": {},
        "snr_vs_n": {"n_values": (4, 8, 16)},
        "worstcase_vs_tests": {"n_values": (8, 16)},
        "align_vs_snr": {"n_values": (16,), "snr_db": tuple(float(x) for x in range(-10, 90, 10))},
        "tracking_trace": {},
    }
    for name in args.only:
        t0 = time.perf_counter()
        paths = run_experiment(replace(base, experiment=name, **sweeps[name]))
        print(f"{name:20s} {time.perf_counter() - t0:7.1f} s  " + " ".join(str(x) for x in paths))


if __name__ == "__main__":
    main()
