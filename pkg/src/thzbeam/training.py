"""Exhaustive and grid-based (GB) beam training between two QUPAs.

Alice transmits on UPA ``tx_upa`` with narrow codeword ``tx_index`` and Bob receives
on ``rx_upa`` with ``rx_index`` (both 1-based). Links are reciprocal, so steps where
Bob transmits reuse the same amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelRealization, Link, LinkBudget, los_channel, measure_power, pair_amplitudes, sample_nlos
from .codebook import QupaCodebook, build_qupa_codebook, children, stages_for
from .geometry import N_UPAS, Direction, UpaConfig, sector_of, steering


@dataclass(frozen=True)
class TrainingResult:
    tx_upa: int
    rx_upa: int
    tx_index: int
    rx_index: int
    measurement_slots: int
    aligned: bool | None = None
    snr_db: float = float("nan")

    @property
    def pair(self) -> tuple[int, int, int, int]:
        return self.tx_upa, self.rx_upa, self.tx_index, self.rx_index


def gb_slots(n: int) -> int:
    """4 log2(N^2) + 4: four Phase-1 slots plus two tests per stage on each side."""
    return 4 * stages_for(n) + 4


def exhaustive_slots(n: int) -> int:
    return 16 * n**4


def _as_link(channel, budget: LinkBudget | None, rng, symbols: int) -> Link:
    if isinstance(channel, Link):
        return channel
    return Link(channel, budget or channel.budget, rng, symbols)


def _narrow_rows(book) -> np.ndarray:
    """(N^2, N_a) narrow weights in local coordinates; shared by all four UPAs."""
    if isinstance(book, QupaCodebook):
        return book[1].stages[-1]
    return np.asarray(book, dtype=complex)


def pair_table(real: ChannelRealization, alice, bob) -> np.ndarray:
    """Noiseless amplitudes w^H H f of every narrow pair, shape (4, 4, N_a^2, N_b^2) as [k, m, a, b]."""
    fa = _narrow_rows(alice)
    wb = _narrow_rows(bob)
    out = np.zeros((N_UPAS, N_UPAS, fa.shape[0], wb.shape[0]), dtype=complex)
    for k in range(1, N_UPAS + 1):
        for m in range(1, N_UPAS + 1):
            out[k - 1, m - 1] = pair_amplitudes(real, k, fa, m, wb).T
    return out


def _unravel(flat: int, shape) -> tuple[int, int, int, int]:
    k, m, a, b = np.unravel_index(flat, shape)
    return int(k) + 1, int(m) + 1, int(a) + 1, int(b) + 1


def oracle_pair(real: ChannelRealization, alice, bob) -> tuple[int, int, int, int]:
    """Noiseless argmax over all 16 N^4 narrow pairs; ties go to the lowest (k, m, a, b)."""
    tab = np.abs(pair_table(real, alice, bob))
    return _unravel(int(np.argmax(tab)), tab.shape)


def matched_pair(real: ChannelRealization, alice, bob) -> tuple[int, int, int, int]:
    """Analytic optimum for a LoS-only channel: the per-side best narrow beam."""
    los = real.los
    fa = _narrow_rows(alice)
    wb = _narrow_rows(bob)
    best = []
    for d, rows in ((los.departure, fa), (los.arrival, wb)):
        k = sector_of(d)
        if k is None:
            raise ValueError(f"direction {d} outside every sector")
        g = np.abs(rows @ steering(real.cfg.for_upa(k), d.azimuth, d.elevation).conj())
        best.append((k, int(np.argmax(g)) + 1))
    return best[0][0], best[1][0], best[0][1], best[1][1]


def pair_snr_db(link: Link, alice, bob, pair) -> float:
    k, m, a, b = pair
    g = pair_amplitudes(link.channel(), k, _narrow_rows(alice)[a - 1], m, _narrow_rows(bob)[b - 1])[0, 0]
    return float(10 * math.log10(max(link.budget.snr_scale * abs(g) ** 2, 1e-30)))


def exhaustive_train(channel, alice, bob=None, budget: LinkBudget | None = None, rng: np.random.Generator | None = None,
                     symbols: int = 1, check: bool = True) -> TrainingResult:
    """Measure all 16 N^4 narrow-beam pairs and keep the strongest."""
    bob = alice if bob is None else bob
    link = _as_link(channel, budget, rng, symbols)
    real = link.channel()
    amps = pair_table(real, alice, bob)
    power = measure_power(link.budget, amps, link.rng, link.symbols)
    pair = _unravel(int(np.argmax(power)), power.shape)
    link.charge(power.size)
    aligned = pair == _unravel(int(np.argmax(np.abs(amps))), amps.shape) if check else None
    return TrainingResult(*pair, power.size, aligned, pair_snr_db(link, alice, bob, pair))


def _descend(link: Link, own: QupaCodebook, upa: int, other: tuple[int, np.ndarray], own_is_alice: bool) -> int:
    """Walk stages 1..S of ``own[upa]`` testing both children per stage; returns the narrow index."""
    book = own[upa]
    i = 1
    for s in range(1, book.S + 1):
        cand = children(s - 1, i, book.n)
        powers = []
        for c in cand:
            mine = [(upa, book.stages[s][c - 1])]
            powers.append(link.test(mine, [other]) if own_is_alice else link.test([other], mine))
        i = cand[1] if powers[1] > powers[0] else cand[0]
    return i


def gb_train(channel, alice: QupaCodebook, bob: QupaCodebook | None = None, budget: LinkBudget | None = None,
             rng: np.random.Generator | None = None, symbols: int = 1, check: bool = True) -> TrainingResult:
    """Two-phase GB training: UPA pair from stage-0 beams, then two hierarchical descents."""
    bob = alice if bob is None else bob
    link = _as_link(channel, budget, rng, symbols)
    start = link.slots
    real0 = link.channel()
    wide_a = {k: alice[k].stages[0][0] for k in range(1, N_UPAS + 1)}
    wide_b = {m: bob[m].stages[0][0] for m in range(1, N_UPAS + 1)}

    # Phase 1, step 1: all Alice UPAs transmit; Bob's four UPAs listen in parallel.
    tx = list(wide_a.items())
    p = [link.test(tx, [(m, wide_b[m])], parallel=N_UPAS) for m in range(1, N_UPAS + 1)]
    link.charge(2)
    B = int(np.argmax(p)) + 1
    # Step 2: Bob transmits from B*; Alice's UPAs listen in parallel.
    p = [link.test([(k, wide_a[k])], [(B, wide_b[B])], parallel=N_UPAS) for k in range(1, N_UPAS + 1)]
    link.charge(2)
    A = int(np.argmax(p)) + 1

    # Phase 2: Alice descends against Bob's stage-0 beam, then Bob against Alice's narrow beam.
    a = _descend(link, alice, A, (B, wide_b[B]), own_is_alice=True)
    b = _descend(link, bob, B, (A, alice[A].stages[-1][a - 1]), own_is_alice=False)
    pair = (A, B, a, b)
    aligned = pair == oracle_pair(real0, alice, bob) if check else None
    return TrainingResult(*pair, link.slots - start, aligned, pair_snr_db(link, alice, bob, pair))


# ------------------------------------------------------------ Monte Carlo


def sample_covered_direction(rng: np.random.Generator) -> Direction:
    """Uniform over the solid angle covered by the four sectors."""
    az = rng.uniform(-np.pi, np.pi)
    el = math.acos(rng.uniform(-math.sqrt(0.5), math.sqrt(0.5)))
    return Direction(az, el)


def random_channel(rng: np.random.Generator, budget: LinkBudget, cfg: UpaConfig, nlos: int = 0, nlos_level_db: float = -15.0) -> ChannelRealization:
    dep = sample_covered_direction(rng)
    arr = sample_covered_direction(rng)
    phase = rng.uniform(0, 2 * np.pi)
    base = los_channel(dep, arr, budget, cfg, phase=phase)
    paths = sample_nlos(rng, nlos, base.los.complex_gain, nlos_level_db) if nlos else []
    return los_channel(dep, arr, budget, cfg, nlos=paths, phase=phase)


def alignment_rate(snr_sweep: Sequence[float], n: int, codebook_variant: str = "proposed", trials: int = 500,
                   rng: np.random.Generator | int | None = 0, cfg: UpaConfig | None = None, symbols: int = 1,
                   budget: LinkBudget | None = None, nlos: int = 0, codebook: QupaCodebook | None = None) -> np.ndarray:
    """Fraction of trials whose GB result equals the noiseless exhaustive oracle, per link SNR (dB).

    Trial ``t`` uses the same channel and noise stream at every SNR point and for every
    codebook variant, so curves are directly comparable.
    """
    cfg = cfg or UpaConfig()
    budget = budget or LinkBudget()
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if codebook is None:
        w = {"proposed": 1, "strict": 0}[codebook_variant]
        codebook = build_qupa_codebook(n, cfg, w=w)
    seed = rng if isinstance(rng, (int, np.integer)) or rng is None else int(rng.integers(2**63))
    seqs = np.random.SeedSequence(seed).spawn(trials)
    hits = np.zeros(len(snr_sweep))
    for ss in seqs:
        chan_ss, noise_ss = ss.spawn(2)
        real = random_channel(np.random.default_rng(chan_ss), budget, cfg, nlos)
        oracle = oracle_pair(real, codebook, codebook) if nlos else matched_pair(real, codebook, codebook)
        for j, snr in enumerate(snr_sweep):
            b = budget.with_link_snr(snr, cfg)
            link = Link(real, b, np.random.default_rng(noise_ss), symbols)
            res = gb_train(link, codebook, codebook, check=False)
            hits[j] += res.pair == oracle
    return hits / trials
