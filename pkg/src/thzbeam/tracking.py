"""Grid-based hybrid (GBH) beam tracking and the training/tracking state machine.

Narrow-beam positions live on a global lattice per endpoint: 4N circular azimuth
columns (UPA ``k`` owns columns ``(k-1)N .. kN-1``) by N elevation rows. Predictions
and neighbourhoods use this lattice, so sector hand-offs need no special casing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import Link, LinkBudget, lin_to_db
from .codebook import DEFAULT_RIDGE, QupaCodebook, eta_worst, narrow_index, narrow_position, tracking_codebook
from .geometry import N_UPAS, in_sector, steering
from .training import gb_train

MODE1_SLOTS = 12
MODE2_SLOTS = 1


class Mode(str, enum.Enum):
    TRAINING = "training"
    DATA = "data"
    MODE2 = "mode2"
    MODE1 = "mode1"


@dataclass(frozen=True, order=True)
class GridPos:
    """Narrow-beam position: UPA plus 1-based local (row, col)."""

    upa: int
    row: int
    col: int

    def global_col(self, n: int) -> int:
        return (self.upa - 1) * n + (self.col - 1)

    @classmethod
    def from_global(cls, g: int, row: int, n: int) -> "GridPos":
        g %= 4 * n
        return cls(g // n + 1, row, g % n + 1)

    @classmethod
    def from_index(cls, upa: int, i: int, n: int) -> "GridPos":
        col, row = narrow_position(i, n)
        return cls(upa, row, col)

    def index(self, n: int) -> int:
        return narrow_index(self.col, self.row, n)


@dataclass(frozen=True)
class BeamPair:
    alice: GridPos
    bob: GridPos

    @classmethod
    def from_training(cls, res, n: int) -> "BeamPair":
        return cls(GridPos.from_index(res.tx_upa, res.tx_index, n), GridPos.from_index(res.rx_upa, res.rx_index, n))


@dataclass
class IntervalRecord:
    index: int
    pair: BeamPair
    gamma_max: float = -math.inf  # dB, running max over the interval

    def update(self, snr_db: float) -> None:
        self.gamma_max = max(self.gamma_max, snr_db)


@dataclass
class ProcedureState:
    mode: Mode = Mode.TRAINING
    history: list[IntervalRecord] = field(default_factory=list)
    threshold: float = -math.inf
    current: IntervalRecord | None = None


def snr_threshold(gamma_max_db: float, eta: float) -> float:
    """eta^4 * Gamma(T_n) expressed in dB."""
    if not 0 < eta <= 1:
        raise ValueError("eta_worst must lie in (0, 1]")
    return gamma_max_db + 40 * math.log10(eta)


# ------------------------------------------------------------------ helpers


def _wrap_delta(d: int, period: int) -> int:
    return (d + period // 2) % period - period // 2


def predict_position(prev: GridPos, last: GridPos, n: int) -> GridPos:
    """last + (last - prev) on the lattice: azimuth wraps, elevation clamps."""
    period = 4 * n
    dg = _wrap_delta(last.global_col(n) - prev.global_col(n), period)
    row = min(max(last.row + (last.row - prev.row), 1), n)
    return GridPos.from_global(last.global_col(n) + dg, row, n)


def mode2_predict(history: list[IntervalRecord], n: int) -> BeamPair:
    if len(history) < 2:
        raise ValueError("mode 2 needs at least two recorded intervals")
    a, b = history[-2].pair, history[-1].pair
    return BeamPair(predict_position(a.alice, b.alice, n), predict_position(a.bob, b.bob, n))


class Tracker:
    """Beam access for both endpoints (both hold the same QUPA codebook)."""

    def __init__(self, book: QupaCodebook, w: int = 1, chi: float = 0.5, ridge: float = DEFAULT_RIDGE):
        self.book = book
        self.n = book.n
        self.cfg = book.cfg
        self.w, self.chi, self.ridge = w, chi, ridge
        self.eta = eta_worst(self.n, self.cfg.ny, self.cfg.nz).eta_worst

    def narrow(self, pos: GridPos) -> tuple[int, np.ndarray]:
        return pos.upa, self.book[pos.upa].stages[-1][pos.index(self.n) - 1]

    def beams(self, pos: GridPos):
        return tracking_codebook(pos.upa, self.n, (pos.col, pos.row), self.cfg, self.w, self.chi, self.ridge)

    def _side_search(self, link: Link, pos: GridPos, other, side_is_alice: bool) -> tuple[GridPos, float]:
        """3 column beams then 3 narrow beams around ``pos`` while the other side holds ``other``."""
        tb = self.beams(pos)

        def test(mine):
            return link.test(mine, other) if side_is_alice else link.test(other, mine)

        col_p = [test([(u, wv)]) for (u, _), wv in tb.columns]
        u, c = tb.columns[int(np.argmax(col_p))][0]
        cand = [GridPos(u, r, c) for r in tb.rows]
        nar_p = [test([self.narrow(g)]) for g in cand]
        j = int(np.argmax(nar_p))
        return cand[j], nar_p[j]

    def mode1(self, link: Link, pair: BeamPair) -> tuple[BeamPair, float, int]:
        """Two-step neighbourhood search; returns (pair, measured power of the pair, slots)."""
        start = link.slots
        sw = list(self.beams(pair.alice).superwide)
        bob, _ = self._side_search(link, pair.bob, sw, side_is_alice=False)
        alice, p = self._side_search(link, pair.alice, [self.narrow(bob)], side_is_alice=True)
        return BeamPair(alice, bob), p, link.slots - start

    def mode2(self, link: Link, history: list[IntervalRecord]) -> tuple[BeamPair, float, int]:
        pair = mode2_predict(history, self.n)
        p = link.test([self.narrow(pair.alice)], [self.narrow(pair.bob)])
        return pair, p, MODE2_SLOTS

    def candidates(self, pair: BeamPair) -> tuple[list[GridPos], list[GridPos]]:
        """The 9 neighbourhood positions per side that mode 1 chooses from."""
        out = []
        for pos in (pair.alice, pair.bob):
            tb = self.beams(pos)
            out.append([GridPos(u, r, c) for (u, c), _ in tb.columns for r in tb.rows])
        return out[0], out[1]


# ---------------------------------------------------------------- metrics


def side_gains(book: QupaCodebook, direction, pattern: bool = True) -> np.ndarray:
    """|a_k(direction)^H w| for every narrow beam of every UPA, shape (4, N^2).

    With ``pattern`` the ideal element pattern zeroes UPAs whose sector excludes the direction.
    """
    rows = book[1].stages[-1]
    out = np.zeros((N_UPAS, rows.shape[0]))
    for k in range(1, N_UPAS + 1):
        if not pattern or in_sector(k, direction.azimuth, direction.elevation):
            a = steering(book.cfg.for_upa(k), direction.azimuth, direction.elevation)
            out[k - 1] = np.abs(rows @ a.conj())
    return out


def _one_side(book: QupaCodebook, direction, pos: GridPos) -> float:
    a = steering(book.cfg.for_upa(pos.upa), direction.azimuth, direction.elevation)
    return float(abs(np.vdot(a, book[pos.upa].stages[-1][pos.index(book.n) - 1])))


def double_side_gain(book: QupaCodebook, real, pair: BeamPair) -> float:
    """Normalized double-side LoS gain of ``pair``: product of the one-sided normalized beam gains.

    The element pattern is not part of the normalized gain, so a beam that has just
    left its sector keeps its array-factor value here while its SNR drops to zero.
    """
    return _one_side(book, real.los.departure, pair.alice) * _one_side(book, real.los.arrival, pair.bob)


def upper_bound_gain(book: QupaCodebook, real) -> tuple[float, BeamPair]:
    """Double-side gain of the noiseless best narrow pair (per-side argmax for the LoS path)."""
    n = book.n
    out = []
    for d in (real.los.departure, real.los.arrival):
        g = side_gains(book, d)
        k, i = np.unravel_index(int(np.argmax(g)), g.shape)
        out.append((float(g[k, i]), GridPos.from_index(int(k) + 1, int(i) + 1, n)))
    return out[0][0] * out[1][0], BeamPair(out[0][1], out[1][1])


# --------------------------------------------------------------- procedure


@dataclass(frozen=True)
class TimelineRow:
    t_ms: float
    state: str
    pair: BeamPair
    snr_db: float
    norm_gain: float
    upper_gain: float
    threshold_db: float = -math.inf  # trigger level in force when the row was written


@dataclass
class ProcedureConfig:
    horizon_s: float = 30.0
    block_s: float = 10e-3
    snr_window: int = 1


@dataclass
class ProcedureResult:
    rows: list[TimelineRow]
    events: dict[str, int]
    slots: dict[str, int]
    complete: bool

    def gains(self) -> np.ndarray:
        return np.array([r.norm_gain for r in self.rows])

    def upper(self) -> np.ndarray:
        return np.array([r.upper_gain for r in self.rows])

    def summary(self, outage: float = 0.2) -> dict:
        g = self.gains()
        ub = self.upper()
        with np.errstate(divide="ignore"):
            gap = 20 * np.log10(np.where(ub > 0, ub, 1.0) / np.where(g > 0, g, 1e-300))
        return {
            "events": dict(self.events),
            "slots": dict(self.slots),
            "min_norm_gain": float(g.min()) if g.size else float("nan"),
            "outage_count": int(np.sum((g[1:] < outage) & (g[:-1] >= outage)) + int(g.size > 0 and g[0] < outage)),
            "outage_steps": int(np.sum(g < outage)),
            "within_3db_fraction": float(np.mean(gap <= 3.0)) if g.size else float("nan"),
            "complete": self.complete,
        }


def run_procedure(channel_at, book: QupaCodebook, budget: LinkBudget, rng: np.random.Generator | None,
                  cfg: ProcedureConfig | None = None, symbols: int = 1, test_duration_s: float = 1e-3,
                  w: int = 1, chi: float = 0.5, ridge: float = DEFAULT_RIDGE) -> ProcedureResult:
    """Run training, data blocks and tracking events over the horizon.

    A timeline row is written for every data block and at the start of every
    training/tracking event. During an event the previous pair stays on record.
    """
    cfg = cfg or ProcedureConfig()
    trk = Tracker(book, w, chi, ridge)
    n = book.n
    link = Link(channel_at, budget, rng, symbols, test_duration_s)
    st = ProcedureState()
    rows: list[TimelineRow] = []
    events = {m.value: 0 for m in (Mode.TRAINING, Mode.MODE2, Mode.MODE1)}
    events["mode2_success"] = 0
    events["mode1_fallback_training"] = 0
    slots = {m.value: 0 for m in (Mode.TRAINING, Mode.MODE2, Mode.MODE1)}
    horizon = cfg.horizon_s
    pair: BeamPair | None = None
    recent: list[float] = []
    eps = 1e-12

    def log(state: Mode, snr: float) -> None:
        real = link.channel()
        g = double_side_gain(book, real, pair) if pair is not None else 0.0
        rows.append(TimelineRow(round(link.t * 1e3, 6), state.value, pair, snr, g, upper_bound_gain(book, real)[0],
                                st.threshold))

    def measured_db(p: float) -> float:
        return lin_to_db(p / budget.noise_mw)

    def start_interval(new: BeamPair) -> None:
        nonlocal pair
        pair = new
        st.current = IntervalRecord(len(st.history) + 1, new)
        st.threshold = -math.inf
        recent.clear()

    def train() -> None:
        if pair is not None:
            log(Mode.TRAINING, rows[-1].snr_db)
        res = gb_train(link, book, book, check=False)
        events[Mode.TRAINING.value] += 1
        slots[Mode.TRAINING.value] += res.measurement_slots
        st.history.clear()
        start_interval(BeamPair.from_training(res, n))

    st.mode = Mode.TRAINING
    train()
    complete = link.t <= horizon + eps
    while link.t + eps < horizon:
        # data block
        st.mode = Mode.DATA
        real = link.channel()
        a = trk.narrow(pair.alice)
        b = trk.narrow(pair.bob)
        snr = lin_to_db(budget.snr_scale * link.amplitude([a], [b]) ** 2)
        recent.append(snr)
        del recent[:-cfg.snr_window]
        eff = lin_to_db(np.mean([10 ** (x / 10) for x in recent]))
        st.current.update(snr)
        st.threshold = snr_threshold(st.current.gamma_max, trk.eta)
        log(Mode.DATA, snr)
        link.advance(cfg.block_s)
        if eff >= st.threshold:
            continue
        # quality dropped: close the interval and track
        closed = st.current
        st.history.append(closed)
        former = snr_threshold(closed.gamma_max, trk.eta)
        if link.t + eps >= horizon:
            break
        found = None
        if len(st.history) >= 2:
            st.mode = Mode.MODE2
            log(Mode.MODE2, snr)
            cand, p, used = trk.mode2(link, st.history)
            events[Mode.MODE2.value] += 1
            slots[Mode.MODE2.value] += used
            if measured_db(p) >= former:
                events["mode2_success"] += 1
                found = cand
        if found is None:
            st.mode = Mode.MODE1
            log(Mode.MODE1, snr)
            cand, p, used = trk.mode1(link, pair)
            events[Mode.MODE1.value] += 1
            slots[Mode.MODE1.value] += used
            if measured_db(p) >= former:
                found = cand
        if found is None:
            events["mode1_fallback_training"] += 1
            st.mode = Mode.TRAINING
            train()
        else:
            start_interval(found)
        if link.t > horizon + eps:
            complete = False  # the horizon ran out during a search
            break
    return ProcedureResult(rows, events, slots, complete)
