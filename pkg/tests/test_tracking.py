import math
from dataclasses import replace

import numpy as np
import pytest

from thzbeam.channel import Link, LinkBudget, los_channel
from thzbeam.codebook import eta_worst, narrow_directions
from thzbeam.config import reference_scenario
from thzbeam.experiments import load_book, track_once
from thzbeam.geometry import Direction, UpaConfig
from thzbeam.tracking import (MODE1_SLOTS, BeamPair, GridPos, IntervalRecord, ProcedureConfig, Tracker, double_side_gain,
                              mode2_predict, predict_position, run_procedure, snr_threshold, upper_bound_gain)
from thzbeam.training import matched_pair, random_channel

N = 16
CFG = UpaConfig()
BUDGET = LinkBudget()


@pytest.fixture(scope="module")
def tracker(book16):
    return Tracker(book16)


@pytest.fixture(scope="module")
def runs():
    scen = replace(reference_scenario(), n=N, horizon_s=10.0)
    book = load_book(scen)
    return [track_once(scen, seed, book) for seed in range(8)]


def centre(pos: GridPos) -> Direction:
    return narrow_directions(N, pos.upa)[pos.index(N) - 1]


def link_for(alice: GridPos, bob: GridPos) -> Link:
    return Link(los_channel(centre(alice), centre(bob), BUDGET, CFG), BUDGET, None)


def snr_of(link, tracker, pair):
    return link.snr_db(link.budget.tx_power_mw * link.amplitude([tracker.narrow(pair.alice)], [tracker.narrow(pair.bob)]) ** 2)


def test_threshold_values():
    assert snr_threshold(20.0, 1.0) == 20.0
    assert snr_threshold(20.0, eta_worst(16).eta_worst) == pytest.approx(12.6, abs=0.05)
    with pytest.raises(ValueError):
        snr_threshold(20.0, 0.0)


def test_grid_lattice_wraps():
    assert GridPos.from_global(-1, 3, N) == GridPos(4, 3, N)
    assert predict_position(GridPos(1, 5, 2), GridPos(1, 5, 1), N) == GridPos(4, 5, N)
    assert predict_position(GridPos(1, 2, 5), GridPos(1, 1, 5), N) == GridPos(1, 1, 5)
    p = BeamPair(GridPos(1, 4, 4), GridPos(3, 7, 7))
    assert mode2_predict([IntervalRecord(1, p), IntervalRecord(2, p)], N) == p
    with pytest.raises(ValueError):
        mode2_predict([IntervalRecord(1, p)], N)


def test_mode1_keeps_pair_when_direction_unchanged(tracker):
    rng = np.random.default_rng(0)
    for _ in range(30):
        k, m = (int(x) for x in rng.integers(1, 5, 2))
        a = GridPos(k, *(int(x) for x in rng.integers(2, N, 2)))
        b = GridPos(m, *(int(x) for x in rng.integers(2, N, 2)))
        got, _, slots = tracker.mode1(link_for(a, b), BeamPair(a, b))
        assert got == BeamPair(a, b) and slots == MODE1_SLOTS


def test_mode1_follows_diagonal_drift(tracker):
    a, b = GridPos(1, 6, 6), GridPos(3, 9, 9)
    na, nb = GridPos(1, 7, 7), GridPos(3, 8, 10)
    got, _, slots = tracker.mode1(link_for(na, nb), BeamPair(a, b))
    assert got == BeamPair(na, nb) and slots == MODE1_SLOTS


def test_mode1_slot_count_on_random_links(tracker):
    rng = np.random.default_rng(1)
    for _ in range(20):
        real = random_channel(rng, BUDGET, CFG)
        k, m, i, j = matched_pair(real, tracker.book, tracker.book)
        start = BeamPair(GridPos.from_index(k, i, N), GridPos.from_index(m, j, N))
        link = Link(real, BUDGET, rng)
        assert tracker.mode1(link, start)[2] == MODE1_SLOTS == link.slots


@pytest.mark.xfail(strict=True, reason="column decisions follow sin/cos cell edges while narrow gain follows V/H, "
                   "so about one noiseless search in eight lands on a neighbour of the 9x9 argmax")
def test_mode1_equals_argmax_over_81_candidates(tracker):
    rng = np.random.default_rng(0)
    for _ in range(100):
        real = random_channel(rng, BUDGET, CFG)
        k, m, i, j = matched_pair(real, tracker.book, tracker.book)
        start = BeamPair(GridPos.from_index(k, i, N), GridPos.from_index(m, j, N))
        link = Link(real, BUDGET, None)
        got, _, _ = tracker.mode1(link, start)
        ca, cb = tracker.candidates(start)
        amps = [[link.amplitude([tracker.narrow(x)], [tracker.narrow(y)]) for y in cb] for x in ca]
        r, c = np.unravel_index(int(np.argmax(amps)), (9, 9))
        assert got == BeamPair(ca[r], cb[c])


def test_mode2_steady_drift_succeeds_in_one_slot(tracker):
    pairs = [BeamPair(GridPos(1, 8, c), GridPos(3, 8, 8)) for c in (5, 6)]
    link = link_for(pairs[1].alice, pairs[1].bob)
    gamma = snr_of(link, tracker, pairs[1])
    history = [IntervalRecord(1, pairs[0], gamma), IntervalRecord(2, pairs[1], gamma)]
    former = snr_threshold(gamma, tracker.eta)
    moved = link_for(GridPos(1, 8, 7), GridPos(3, 8, 8))
    cand, p, slots = tracker.mode2(moved, history)
    assert cand == BeamPair(GridPos(1, 8, 7), GridPos(3, 8, 8))
    assert slots == 1 and moved.slots == 1
    assert moved.snr_db(p) >= former


def test_abrupt_turn_falls_back_to_mode1_in_13_slots(tracker):
    pairs = [BeamPair(GridPos(1, 8, c), GridPos(3, 8, 8)) for c in (5, 6)]
    gamma = snr_of(link_for(pairs[1].alice, pairs[1].bob), tracker, pairs[1])
    history = [IntervalRecord(1, pairs[0], gamma), IntervalRecord(2, pairs[1], gamma)]
    former = snr_threshold(gamma, tracker.eta)
    truth = BeamPair(GridPos(1, 7, 6), GridPos(3, 9, 8))  # course change: elevation instead of azimuth
    link = link_for(truth.alice, truth.bob)
    cand, p, _ = tracker.mode2(link, history)
    assert link.snr_db(p) < former
    found, p1, _ = tracker.mode1(link, pairs[1])
    assert found == truth and link.snr_db(p1) >= former
    assert link.slots == 13


def test_static_link_never_tracks(book16):
    real = los_channel(Direction(0.1, 1.5), Direction(np.pi - 0.2, 1.6), BUDGET, CFG)
    res = run_procedure(real, book16, BUDGET, np.random.default_rng(0), ProcedureConfig(horizon_s=2.0),
                        symbols=20_000_000)
    assert res.events["training"] == 1
    assert res.events["mode1"] == res.events["mode2"] == 0
    assert res.complete and len(res.rows) > 150


def test_slot_accounting(runs):
    for res, _ in runs:
        assert res.slots["mode2"] == res.events["mode2"]
        assert res.slots["mode1"] == MODE1_SLOTS * res.events["mode1"]
        assert res.slots["training"] == 36 * res.events["training"]


def events(rows):
    """(start row, rows of the event, first data row after it) for every tracking event."""
    out = []
    for i in range(1, len(rows)):
        if rows[i].state != "data" and rows[i - 1].state == "data":
            j = i
            while j < len(rows) and rows[j].state != "data":
                j += 1
            out.append((i, [r.state for r in rows[i:j]], j))
    return out


def test_state_machine_invariants(runs):
    for res, _ in runs:
        history = 0
        for _, states, _ in events(res.rows):
            history += 1  # the interval that just ended
            assert (states[0] == "mode2") == (history >= 2)
            if states[0] == "mode2" and len(states) > 1:
                assert states[1] == "mode1"
            if "training" in states:
                history = 0


def test_threshold_non_decreasing_within_interval(runs):
    for res, _ in runs:
        prev = None
        for r in res.rows:
            if r.state != "data":
                prev = None
                continue
            if prev is not None:
                assert r.threshold_db >= prev - 1e-12
            prev = r.threshold_db


def test_successful_event_meets_former_threshold(runs):
    checked = 0
    for res, _ in runs:
        rows = res.rows
        for i in range(1, len(rows) - 1):
            if rows[i].state in ("mode2", "mode1") and rows[i - 1].state == "data":
                j = i
                while j < len(rows) and rows[j].state != "data":
                    j += 1
                if j < len(rows) and all(r.state != "training" for r in rows[i:j]):
                    assert rows[j].snr_db >= rows[i].threshold_db - 0.1
                    checked += 1
    assert checked > 20


def test_mode2_success_fraction_on_straight_segments(runs):
    """Events whose two recorded intervals and the event itself share one trajectory segment."""
    tried = ok = 0
    for res, traj in runs:
        rows = res.rows
        starts = [0.0]
        for i, states, j in events(rows):
            if states[0] == "mode2" and j < len(rows):
                seg = np.searchsorted(traj.t, [starts[-2] / 1e3, rows[j].t_ms / 1e3], side="right")
                if seg[0] == seg[1]:
                    tried += 1
                    ok += len(states) == 1
            starts.append(rows[i].t_ms)
    assert tried >= 20
    assert ok / tried > 0.5


def test_gain_metrics(book16):
    real = los_channel(centre(GridPos(1, 4, 4)), centre(GridPos(2, 9, 3)), BUDGET, CFG)
    g, pair = upper_bound_gain(book16, real)
    assert pair == BeamPair(GridPos(1, 4, 4), GridPos(2, 9, 3))
    assert g == pytest.approx(1.0)
    assert double_side_gain(book16, real, pair) == pytest.approx(1.0)
    assert double_side_gain(book16, real, BeamPair(GridPos(1, 4, 5), pair.bob)) < 1.0


def test_incomplete_flag_when_horizon_ends_mid_search(book16):
    real = los_channel(Direction(0.1, 1.5), Direction(np.pi - 0.2, 1.6), BUDGET, CFG)
    res = run_procedure(real, book16, BUDGET, None, ProcedureConfig(horizon_s=0.02))
    assert not res.complete and res.rows == []
    assert math.isnan(res.summary()["min_norm_gain"])
