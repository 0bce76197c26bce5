"""Seeded experiment sweeps that write CSV series and JSON summaries.

Seed splitting: ``SeedSequence(seed)`` is spawned once per trial (or per tracking
seed); each trial child spawns a channel stream and a noise stream. Trial ``t``
therefore sees the same channel for every N, variant and SNR point, and output
rows are ordered by loop index, never by completion order.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from pathlib import Path

import numpy as np

from .channel import Link
from .codebook import (QupaCodebook, benchmark_uniform_real, benchmark_uniform_virtual, build_qupa_codebook, cache_name,
                       eta_worst)
from .config import SCHEMA_VERSION, ExperimentConfig, ScenarioConfig, warn_if_heavy
from .geometry import beam_gains, Beamformer, UpaConfig
from .mobility import MobileChannel, Trajectory
from .tracking import ProcedureConfig, run_procedure
from .training import (TrainingResult, alignment_rate, exhaustive_train, gb_train, matched_pair, oracle_pair, pair_snr_db,
                       random_channel)

GB_VARIANTS = ("proposed", "strict-benchmark")


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, experiment: str, columns, rows) -> Path:
    """CSV with a schema comment line, a header row naming every column, then the rows."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# thzbeam {experiment} schema={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def prepare_out(out) -> Path:
    """Create the output directory and fail fast if it is not writable."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    return out


# -------------------------------------------------------------- codebooks


def load_book(scen: ScenarioConfig, n: int | None = None, variant: str = "proposed", cache_dir=None) -> QupaCodebook:
    """Hierarchical codebook for a GB variant; cached files are reused, missing ones built."""
    n = scen.n if n is None else n
    w = scen.buffer_width if variant == "proposed" else 0
    if cache_dir is not None:
        if not (Path(cache_dir) / cache_name(n, scen.upa, w, scen.buffer_gain, scen.ridge)).exists():
            warnings.warn(f"codebook N={n} w={w} not cached in {cache_dir}; building it", stacklevel=2)
    return build_qupa_codebook(n, scen.upa, w=w, chi=scen.buffer_gain, cache_dir=cache_dir, ridge=scen.ridge)


def narrow_set(variant: str, n: int, cfg: UpaConfig) -> np.ndarray:
    """(N^2, N_a) narrow weights in UPA-1 coordinates for the benchmark placements."""
    make = {"uniform-real": benchmark_uniform_real, "uniform-virtual": benchmark_uniform_virtual}[variant]
    return np.array([b.weights for b in make(n, 1, cfg)])


def train_variant(variant: str, link: Link, scen: ScenarioConfig, n: int, cache_dir=None, books=None) -> TrainingResult:
    """GB training for the hierarchical variants, exhaustive search over the narrow set otherwise."""
    books = {} if books is None else books
    if variant not in books:
        if variant in GB_VARIANTS or variant == "exhaustive":
            books[variant] = load_book(scen, n, "proposed" if variant == "exhaustive" else variant, cache_dir)
        else:
            books[variant] = narrow_set(variant, n, scen.upa)
    book = books[variant]
    if variant in GB_VARIANTS:
        return gb_train(link, book, book, check=False)
    return exhaustive_train(link, book, book, check=False)


def _narrow_rows(book) -> np.ndarray:
    return book[1].stages[-1] if isinstance(book, QupaCodebook) else book


def one_side_gains(book, real, res: TrainingResult, cfg: UpaConfig) -> tuple[float, float]:
    """Normalized LoS beam gains |a^H w| achieved by the trained pair at each endpoint."""
    rows = _narrow_rows(book)
    out = []
    for d, upa, idx in ((real.los.departure, res.tx_upa, res.tx_index), (real.los.arrival, res.rx_upa, res.rx_index)):
        out.append(float(beam_gains(Beamformer(rows[idx - 1], cfg.for_upa(upa)), d.azimuth, d.elevation)))
    return out[0], out[1]


# -------------------------------------------------------------- experiments


def run_patterns(cfg: ExperimentConfig, out: Path) -> list[Path]:
    scen = cfg.scenario
    book = load_book(scen, None, "proposed", cfg.codebook_dir)[1]
    step = math.radians(cfg.pattern_step_deg)
    az = np.arange(-np.pi / 4, np.pi / 4 + step / 2, step)
    el = np.arange(np.pi / 4, 3 * np.pi / 4 + step / 2, step)
    AZ, EL = np.meshgrid(az, el)

    def rows():
        for s in cfg.pattern_stages:
            if s > book.S:
                continue
            for i in range(1, 2**s + 1):
                g = beam_gains(book.beam(s, i), AZ, EL)
                for (r, c), val in np.ndenumerate(g):
                    yield s, i, 1, round(math.degrees(AZ[r, c]), 9), round(math.degrees(EL[r, c]), 9), float(val)

    return [write_csv(out / "patterns.csv", "patterns", ("stage", "index", "upa", "azimuth_deg", "elevation_deg", "gain"), rows())]


def _trial_streams(seed: int, trials: int):
    return [ss.spawn(2) for ss in np.random.SeedSequence(seed).spawn(trials)]


def best_pair(book, real, nlos: int):
    """Noiseless optimum of a narrow set: the aligned outcome of any successful training."""
    return oracle_pair(real, book, book) if nlos else matched_pair(real, book, book)


def run_snr_vs_n(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Post-alignment SNR of each narrow-beam placement against the worst-case guarantee line."""
    scen = cfg.scenario
    budget = scen.budget
    link_snr = budget.link_snr_db(scen.upa)
    streams = _trial_streams(cfg.seed, cfg.trials)
    rows, summary = [], {}
    for n in cfg.n_values:
        bound = eta_worst(n, scen.ny, scen.nz).eta_worst
        for variant in cfg.variants:
            if variant in GB_VARIANTS or variant == "exhaustive":
                book = load_book(scen, n, variant if variant in GB_VARIANTS else "proposed", cfg.codebook_dir)
            else:
                book = narrow_set(variant, n, scen.upa)
            snrs = []
            for chan_ss, _ in streams:
                real = random_channel(np.random.default_rng(chan_ss), budget, scen.upa, scen.nlos_paths, scen.nlos_level_db)
                snrs.append(pair_snr_db(Link(real, budget), book, book, best_pair(book, real, scen.nlos_paths)))
            worst = link_snr + 40 * math.log10(bound)
            row = (n, variant, cfg.trials, float(np.mean(snrs)), float(np.min(snrs)), worst, link_snr)
            rows.append(row)
            summary[f"N{n}/{variant}"] = dict(zip(("mean_snr_db", "min_snr_db"), row[3:5]))
    cols = ("n", "variant", "trials", "mean_snr_db", "min_snr_db", "worst_case_snr_db", "link_snr_db")
    return [write_csv(out / "snr_vs_n.csv", "snr_vs_n", cols, rows), write_json(out / "snr_vs_n.json", summary)]


def run_worstcase_vs_tests(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Running minima of the one-sided normalized gain over random directions.

    ``running_min_gain`` follows the GB-trained pair on the scenario link;
    ``running_min_best_gain`` follows the best narrow pair of the same codebook.
    """
    scen = cfg.scenario
    budget = scen.budget
    total = max(cfg.test_counts)
    streams = _trial_streams(cfg.seed, total)
    marks = set(cfg.test_counts)
    rows = []
    for n in cfg.n_values:
        book = load_book(scen, n, "proposed", cfg.codebook_dir)
        bound = eta_worst(n, scen.ny, scen.nz).eta_worst
        trained = best = math.inf
        for t, (chan_ss, noise_ss) in enumerate(streams, start=1):
            real = random_channel(np.random.default_rng(chan_ss), budget, scen.upa, scen.nlos_paths, scen.nlos_level_db)
            link = Link(real, budget, np.random.default_rng(noise_ss), scen.symbols_per_test)
            res = gb_train(link, book, book, check=False)
            trained = min(trained, *one_side_gains(book, real, res, scen.upa))
            opt = TrainingResult(*best_pair(book, real, scen.nlos_paths), 0)
            best = min(best, *one_side_gains(book, real, opt, scen.upa))
            if t in marks:
                rows.append((n, t, trained, best, bound))
    cols = ("n", "tests", "running_min_gain", "running_min_best_gain", "eta_worst")
    return [write_csv(out / "worstcase_vs_tests.csv", "worstcase_vs_tests", cols, rows)]


def run_align_vs_snr(cfg: ExperimentConfig, out: Path) -> list[Path]:
    scen = cfg.scenario
    rows = []
    for n in cfg.n_values:
        for variant in GB_VARIANTS:
            book = load_book(scen, n, variant, cfg.codebook_dir)
            rate = alignment_rate(cfg.snr_db, n, trials=cfg.trials, rng=cfg.seed, cfg=scen.upa,
                                  symbols=scen.symbols_per_test, budget=scen.budget, nlos=scen.nlos_paths, codebook=book)
            rows.extend((n, variant, snr, cfg.trials, float(r)) for snr, r in zip(cfg.snr_db, rate))
    cols = ("n", "variant", "link_snr_db", "trials", "alignment_rate")
    return [write_csv(out / "align_vs_snr.csv", "align_vs_snr", cols, rows)]


TIMELINE_COLUMNS = ("seed", "t_ms", "state", "alice_upa", "alice_row", "alice_col", "bob_upa", "bob_row", "bob_col",
                    "snr_db", "threshold_db", "norm_gain", "upper_gain")


def track_once(scen: ScenarioConfig, seed: int, book: QupaCodebook | None = None, cache_dir=None):
    """One tracking run on a seeded trajectory; returns (ProcedureResult, Trajectory)."""
    book = book or load_book(scen, None, "proposed", cache_dir)
    traj_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    traj = Trajectory.generate(scen.trajectory(int(traj_ss.generate_state(1)[0])))
    chan = MobileChannel(traj, scen.budget, scen.upa)
    res = run_procedure(chan, book, scen.budget, np.random.default_rng(noise_ss),
                        ProcedureConfig(scen.horizon_s, scen.block_s), scen.symbols_per_test, scen.test_duration_s,
                        scen.buffer_width, scen.buffer_gain, scen.ridge)
    return res, traj


def timeline_rows(seed: int, res):
    for r in res.rows:
        a, b = r.pair.alice, r.pair.bob
        yield (seed, r.t_ms, r.state, a.upa, a.row, a.col, b.upa, b.row, b.col, r.snr_db, r.threshold_db, r.norm_gain,
               r.upper_gain)


def run_tracking_trace(cfg: ExperimentConfig, out: Path) -> list[Path]:
    scen = cfg.scenario
    warn_if_heavy(scen)
    book = load_book(scen, None, "proposed", cfg.codebook_dir)
    rows, summary = [], {}
    for s in range(cfg.seeds):
        seed = cfg.seed + s
        res, _ = track_once(scen, seed, book)
        rows.extend(timeline_rows(seed, res))
        summary[str(seed)] = res.summary()
    return [write_csv(out / "tracking_trace.csv", "tracking_trace", TIMELINE_COLUMNS, rows),
            write_json(out / "tracking_trace.json", summary)]


RUNNERS = {
    "patterns": run_patterns,
    "snr_vs_n": run_snr_vs_n,
    "worstcase_vs_tests": run_worstcase_vs_tests,
    "align_vs_snr": run_align_vs_snr,
    "tracking_trace": run_tracking_trace,
}


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    out = prepare_out(cfg.out)
    return RUNNERS[cfg.experiment](cfg, out)
