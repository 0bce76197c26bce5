"""Saleh-Valenzuela LoS/NLoS channels between two QUPAs, link budget and measurements.

Powers are carried in milliwatts. A beam test returns the received power of one
(precoder, decoder) configuration; averaging over ``symbols`` symbols uses the exact
decomposition ``mean|a + n_i|^2 = |a + n_bar|^2 + sigma^2/K * Gamma(K-1)`` so the
statistic is drawn with two normals and one gamma variate regardless of K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import Direction, UpaConfig, element_gain, in_sector, steering

# decoding_snr of a zero beamformer is reported at this floor instead of -inf.
SNR_FLOOR_DB = -300.0


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x, floor: float = SNR_FLOOR_DB):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(x > 0, 10.0 * np.log10(np.where(x > 0, x, 1.0)), floor)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LinkBudget:
    carrier_hz: float = 0.26e12
    bandwidth_hz: float = 20e9
    tx_power_dbm: float = 25.0
    noise_psd_dbm_per_hz: float = -174.0
    propagation_loss_db: float = 124.6
    distance_m: float = 100.0

    def __post_init__(self):
        for name in ("carrier_hz", "bandwidth_hz", "tx_power_dbm", "noise_psd_dbm_per_hz", "propagation_loss_db", "distance_m"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.bandwidth_hz <= 0 or self.distance_m <= 0:
            raise ValueError("bandwidth and distance must be positive")

    @property
    def noise_dbm(self) -> float:
        return self.noise_psd_dbm_per_hz + 10 * math.log10(self.bandwidth_hz)

    @property
    def noise_mw(self) -> float:
        return 10 ** (self.noise_dbm / 10)

    @property
    def tx_power_mw(self) -> float:
        return 10 ** (self.tx_power_dbm / 10)

    @property
    def snr_scale(self) -> float:
        """P / sigma^2 (linear)."""
        return self.tx_power_mw / self.noise_mw

    def los_amplitude(self, distance_m: float | None = None, exponent: float | None = None) -> float:
        """|alpha_L| from the fixed propagation loss, optionally rescaled by (d0/d)^(exponent/2)."""
        amp = 10 ** (-self.propagation_loss_db / 20)
        if exponent is not None and distance_m is not None:
            amp *= (self.distance_m / distance_m) ** (exponent / 2)
        return amp

    def link_snr_db(self, cfg: UpaConfig) -> float:
        """P G_t G_r |alpha_L|^2 / sigma^2 in dB: the SNR of a perfectly matched LoS link."""
        g = 10 * math.log10(element_gain(cfg))
        return self.tx_power_dbm - self.propagation_loss_db + 2 * g - self.noise_dbm

    def with_link_snr(self, snr_db: float, cfg: UpaConfig) -> "LinkBudget":
        """Copy with the transmit power shifted so that :meth:`link_snr_db` equals ``snr_db``."""
        return replace(self, tx_power_dbm=self.tx_power_dbm + snr_db - self.link_snr_db(cfg))


@dataclass(frozen=True)
class PathComponent:
    departure: Direction
    arrival: Direction
    complex_gain: complex
    is_los: bool = False


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    paths: tuple[PathComponent, ...]
    budget: LinkBudget = field(default_factory=LinkBudget)
    cfg: UpaConfig = field(default_factory=UpaConfig)

    def __post_init__(self):
        paths = tuple(self.paths)
        object.__setattr__(self, "paths", paths)
        los = [p for p in paths if p.is_los]
        if len(los) != 1:
            raise ValueError(f"expected exactly one LoS path, got {len(los)}")
        ref = abs(los[0].complex_gain)
        if any(abs(p.complex_gain) >= ref for p in paths if not p.is_los):
            raise ValueError("every NLoS path must be weaker than the LoS path")

    @property
    def los(self) -> PathComponent:
        return next(p for p in self.paths if p.is_los)

    @property
    def nlos(self) -> list[PathComponent]:
        return [p for p in self.paths if not p.is_los]

    def reversed(self) -> "ChannelRealization":
        """The same paths seen from the other end (departure and arrival swapped)."""
        paths = tuple(replace(p, departure=p.arrival, arrival=p.departure) for p in self.paths)
        return ChannelRealization(paths, self.budget, self.cfg)

    def scaled(self, c: complex) -> "ChannelRealization":
        return ChannelRealization(tuple(replace(p, complex_gain=c * p.complex_gain) for p in self.paths), self.budget, self.cfg)


def los_channel(departure: Direction, arrival: Direction, budget: LinkBudget | None = None, cfg: UpaConfig | None = None,
                nlos: Sequence[PathComponent] = (), phase: float = 0.0, amplitude: float | None = None) -> ChannelRealization:
    budget = budget or LinkBudget()
    amp = budget.los_amplitude() if amplitude is None else amplitude
    los = PathComponent(departure, arrival, amp * complex(math.cos(phase), math.sin(phase)), True)
    return ChannelRealization((los, *nlos), budget, cfg or UpaConfig())


def sample_nlos(rng: np.random.Generator, count: int, los_gain: complex, level_db: float = -15.0) -> list[PathComponent]:
    """NLoS paths with directions uniform on the sphere and |alpha| = |alpha_L| * 10^(level/20)."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if level_db >= 0:
        raise ValueError("NLoS level must be below the LoS path (level_db < 0)")
    mag = abs(los_gain) * 10 ** (level_db / 20)
    out = []
    for _ in range(count):
        az_t, az_r = rng.uniform(-np.pi, np.pi, 2)
        el_t, el_r = np.arccos(rng.uniform(-1.0, 1.0, 2))
        ph = rng.uniform(0, 2 * np.pi)
        out.append(PathComponent(Direction(az_t, el_t), Direction(az_r, el_r), mag * complex(math.cos(ph), math.sin(ph))))
    return out


# ------------------------------------------------------------------ rendering


def _path_coeff(real: ChannelRealization, p: PathComponent, k: int, m: int) -> complex:
    """sqrt(G_t G_r F_k F_m) * alpha for one path; zero outside either sector."""
    if not (in_sector(k, p.departure.azimuth, p.departure.elevation) and in_sector(m, p.arrival.azimuth, p.arrival.elevation)):
        return 0j
    return element_gain(real.cfg) * p.complex_gain  # G_t = G_r


def render_channel(real: ChannelRealization, k: int, m: int) -> np.ndarray:
    """Dense N_a x N_a matrix H_{k,m} from transmit UPA k to receive UPA m."""
    n_a = real.cfg.n_a
    H = np.zeros((n_a, n_a), dtype=complex)
    for p in real.paths:
        c = _path_coeff(real, p, k, m)
        if c == 0:
            continue
        a_t = steering(real.cfg.for_upa(k), p.departure.azimuth, p.departure.elevation)
        a_r = steering(real.cfg.for_upa(m), p.arrival.azimuth, p.arrival.elevation)
        H += c * np.outer(a_r, a_t.conj())
    return H


def pair_amplitudes(real: ChannelRealization, k: int, F: np.ndarray, m: int, W: np.ndarray) -> np.ndarray:
    """w^H H_{k,m} f for every decoder row of ``W`` (R x N_a) and precoder row of ``F`` (T x N_a).

    Uses the rank-one path structure instead of rendering H; returns an (R, T) array.
    """
    F = np.atleast_2d(F)
    W = np.atleast_2d(W)
    out = np.zeros((W.shape[0], F.shape[0]), dtype=complex)
    for p in real.paths:
        c = _path_coeff(real, p, k, m)
        if c == 0:
            continue
        a_t = steering(real.cfg.for_upa(k), p.departure.azimuth, p.departure.elevation)
        a_r = steering(real.cfg.for_upa(m), p.arrival.azimuth, p.arrival.elevation)
        out += c * np.outer(W.conj() @ a_r, F @ a_t.conj())
    return out


def decoding_snr(budget: LinkBudget, w, H: np.ndarray, f) -> float:
    """P / sigma^2 * |w^H H f|^2 in dB (floored at ``SNR_FLOOR_DB``)."""
    w = np.asarray(getattr(w, "weights", w), dtype=complex)
    f = np.asarray(getattr(f, "weights", f), dtype=complex)
    g = np.vdot(w, H @ f)
    return lin_to_db(budget.snr_scale * abs(g) ** 2)


def measure_power(budget: LinkBudget, gains, rng: np.random.Generator | None, symbols: int = 1, decoder_norm: float = 1.0):
    """Received power (mW) of beam tests whose noiseless amplitudes w^H H f are ``gains``.

    ``rng=None`` gives the noiseless statistic P|g|^2. ``symbols`` > 1 averages the
    per-symbol power over that many symbols.
    """
    g = np.asarray(gains, dtype=complex)
    sig = math.sqrt(budget.tx_power_mw) * g
    if rng is None:
        out = np.abs(sig) ** 2
        return float(out) if out.ndim == 0 else out
    if symbols < 1:
        raise ValueError("symbols must be >= 1")
    var = budget.noise_mw * decoder_norm**2
    scale = math.sqrt(var / (2 * symbols))
    noise = scale * (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    out = np.abs(sig + noise) ** 2
    if symbols > 1:
        out = out + var / symbols * rng.gamma(symbols - 1, 1.0, size=g.shape)
    return float(out) if out.ndim == 0 else out


def measure(budget: LinkBudget, w, H: np.ndarray, f, rng: np.random.Generator | None, symbols: int = 1) -> float:
    """One beam test |sqrt(P) w^H H f s + w^H n|^2 (unit-power symbol, CSCG noise)."""
    w = np.asarray(getattr(w, "weights", w), dtype=complex)
    f = np.asarray(getattr(f, "weights", f), dtype=complex)
    return measure_power(budget, np.vdot(w, H @ f), rng, symbols, float(np.linalg.norm(w)))


# --------------------------------------------------------------- link / clock


class Link:
    """A channel observed through a clock: every beam test costs one slot of ``test_duration_s``.

    ``channel_at`` maps simulated time to a :class:`ChannelRealization`; a fixed
    realization gives a static link. Training and tracking only talk to this class.
    """

    def __init__(self, channel_at, budget: LinkBudget, rng: np.random.Generator | None = None,
                 symbols: int = 1, test_duration_s: float = 1e-3, t0: float = 0.0):
        if isinstance(channel_at, ChannelRealization):
            fixed = channel_at
            channel_at = lambda t: fixed  # noqa: E731
        self._channel_at = channel_at
        self.budget = budget
        self.rng = rng
        self.symbols = int(symbols)
        self.test_duration_s = float(test_duration_s)
        self.t = float(t0)
        self.slots = 0
        self._cache_t = None
        self._cache = None

    @property
    def noiseless(self) -> bool:
        return self.rng is None

    def channel(self) -> ChannelRealization:
        if self._cache_t != self.t:
            self._cache = self._channel_at(self.t)
            self._cache_t = self.t
        return self._cache

    def advance(self, dt: float) -> None:
        self.t += dt

    def amplitude(self, alice: Sequence[tuple[int, np.ndarray]], bob: Sequence[tuple[int, np.ndarray]]) -> float:
        """Effective |w^H H f| between Alice's and Bob's active (UPA, weights) sets.

        Links are reciprocal, so the value does not depend on which side transmits.
        A side using several UPAs at once drives each at full power and the powers add.
        """
        real = self.channel()
        tot = 0.0
        for k, f in alice:
            for m, w in bob:
                tot += abs(pair_amplitudes(real, k, f, m, w)[0, 0]) ** 2
        return math.sqrt(tot)

    def test(self, alice: Sequence[tuple[int, np.ndarray]], bob: Sequence[tuple[int, np.ndarray]], parallel: int = 1) -> float:
        """Measured power of one beam test; advances the clock by one slot unless ``parallel`` > 1.

        Tests issued in the same slot on different receive UPAs pass ``parallel`` and
        the caller charges the slot once via :meth:`charge`.
        """
        g = self.amplitude(alice, bob)
        p = measure_power(self.budget, g, self.rng, self.symbols)
        if parallel == 1:
            self.charge(1)
        return p

    def charge(self, n: int) -> None:
        self.slots += n
        self.advance(n * self.test_duration_s)

    def snr_db(self, power_mw: float) -> float:
        return lin_to_db(power_mw / self.budget.noise_mw)
