"""Command-line entry point: ``thzbeam {codebook,pattern,train,track,experiment,scenario}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .channel import Link
from .codebook import cache_name, load_codebook, save_codebook
from .config import (EXPERIMENTS, VARIANTS, ExperimentConfig, ScenarioConfig, default_scenario, reference_scenario,
                     load_mapping, warn_if_heavy)
from .training import matched_pair, oracle_pair, random_channel


def _csv_list(kind):
    return lambda s: tuple(kind(x) for x in s.split(",") if x)


def _load_config(path) -> tuple[ScenarioConfig | None, ExperimentConfig | None]:
    if path is None:
        return None, None
    data = load_mapping(path)
    if "experiment" in data or "scenario" in data:
        exp = ExperimentConfig.from_dict(data)
        return exp.scenario, exp
    return ScenarioConfig.from_dict(data), None


def _scenario(args) -> ScenarioConfig:
    scen, _ = _load_config(args.config)
    if args.reference:
        scen = reference_scenario()
    scen = scen or ScenarioConfig()
    if getattr(args, "n", None):
        scen = replace(scen, n=args.n)
    return scen


def cmd_scenario(args) -> int:
    out = ex.prepare_out(args.out) / ("reference_scenario.yaml" if args.reference else "scenario.yaml")
    data = default_scenario(out, reference=args.reference)
    print(json.dumps({"path": str(out), "noise_dbm": data["noise_dbm"], "antenna_gain_db": data["antenna_gain_db"]}))
    return 0


def cmd_codebook(args) -> int:
    scen = _scenario(args)
    out = ex.prepare_out(args.out)
    book = ex.load_book(scen, scen.n, args.variant)[1]
    w = scen.buffer_width if args.variant == "proposed" else 0
    path = save_codebook(out / cache_name(scen.n, scen.upa, w, scen.buffer_gain, scen.ridge), book)
    print(json.dumps({"path": str(path), "n": scen.n, "stages": book.S, "variant": book.variant}))
    return 0


def cmd_pattern(args) -> int:
    scen = _scenario(args)
    cfg = ExperimentConfig("patterns", pattern_stages=args.stages, pattern_step_deg=args.step_deg, seed=args.seed,
                           out=args.out, scenario=scen)
    for p in ex.run_experiment(cfg):
        print(p)
    return 0


def cmd_train(args) -> int:
    scen = _scenario(args)
    budget = scen.budget
    if args.snr is not None:
        budget = budget.with_link_snr(args.snr, scen.upa)
    chan_ss, noise_ss = np.random.SeedSequence(args.seed).spawn(2)
    real = random_channel(np.random.default_rng(chan_ss), budget, scen.upa, scen.nlos_paths, scen.nlos_level_db)
    link = Link(real, budget, np.random.default_rng(noise_ss), scen.symbols_per_test)
    books = {}
    if args.codebook is not None:
        books[args.variant] = load_codebook(args.codebook)
    res = ex.train_variant(args.variant, link, scen, scen.n, None, books)
    book = books[args.variant]
    best = oracle_pair(real, book, book) if scen.nlos_paths else matched_pair(real, book, book)
    record = {
        "variant": args.variant,
        "n": scen.n,
        "seed": args.seed,
        "tx_upa": res.tx_upa,
        "rx_upa": res.rx_upa,
        "tx_index": res.tx_index,
        "rx_index": res.rx_index,
        "measurement_slots": res.measurement_slots,
        "aligned": res.pair == best,
        "snr_db": res.snr_db,
        "link_snr_db": budget.link_snr_db(scen.upa),
    }
    text = json.dumps(record, indent=2, sort_keys=True)
    (ex.prepare_out(args.out) / "train.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_track(args) -> int:
    scen = _scenario(args)
    cfg = ExperimentConfig("tracking_trace", seeds=args.seeds, seed=args.seed, out=args.out, scenario=scen)
    paths = ex.run_experiment(cfg)
    print(json.dumps(json.loads(paths[1].read_text()), indent=2, sort_keys=True))
    return 0


def cmd_experiment(args) -> int:
    scen, exp = _load_config(args.config)
    exp = exp or ExperimentConfig(scenario=scen or ScenarioConfig())
    changes = {"experiment": args.name, "seed": args.seed, "out": args.out}
    for key in ("trials", "seeds", "n_values", "snr_db", "test_counts", "variants"):
        val = getattr(args, key)
        if val is not None:
            changes[key] = val
    if args.reference:
        changes["scenario"] = reference_scenario()
    exp = replace(exp, **changes)
    if exp.experiment == "tracking_trace":
        warn_if_heavy(exp.scenario)
    for p in ex.run_experiment(exp):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--config", type=Path, help="scenario or experiment file (.yaml/.yml/.json)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--reference", action="store_true", help="reference operating point (N=32, B*t symbols per test)")

    p = argparse.ArgumentParser(prog="thzbeam", description="QUPA beam training and tracking simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scenario", parents=[common], help="write the default scenario file")
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("codebook", parents=[common], help="build and store a hierarchical codebook")
    s.add_argument("--n", type=int)
    s.add_argument("--variant", choices=ex.GB_VARIANTS, default="proposed")
    s.set_defaults(func=cmd_codebook)

    s = sub.add_parser("pattern", parents=[common], help="export wide and narrow beam patterns of UPA 1")
    s.add_argument("--n", type=int)
    s.add_argument("--stages", type=_csv_list(int), default=(0, 1, 2, 3))
    s.add_argument("--step-deg", type=float, default=1.0)
    s.set_defaults(func=cmd_pattern)

    s = sub.add_parser("train", parents=[common], help="train one random link and print a JSON record")
    s.add_argument("--n", type=int)
    s.add_argument("--variant", choices=VARIANTS, default="proposed")
    s.add_argument("--codebook", type=Path, help="stored codebook file (hierarchical variants only)")
    s.add_argument("--snr", type=float, help="override the matched-link SNR in dB")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", parents=[common], help="run the tracking procedure on seeded trajectories")
    s.add_argument("--n", type=int)
    s.add_argument("--seeds", type=int, default=1)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("experiment", parents=[common], help="run one experiment sweep")
    s.add_argument("name", choices=EXPERIMENTS)
    s.add_argument("--trials", type=int)
    s.add_argument("--seeds", type=int)
    s.add_argument("--n-values", dest="n_values", type=_csv_list(int))
    s.add_argument("--snr-db", dest="snr_db", type=_csv_list(float))
    s.add_argument("--test-counts", dest="test_counts", type=_csv_list(int))
    s.add_argument("--variants", type=_csv_list(str))
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"thzbeam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
