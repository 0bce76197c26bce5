"""QUPA geometry: sectors, array responses, element gains and beam gains.

Four half-wave spaced UPAs sit on the side faces of a cube. UPA ``k`` has its
boresight at azimuth ``(k-1)*pi/2`` and serves the quadrant ``Omega_k``
(azimuth within +-pi/4 of boresight, elevation in [pi/4, 3*pi/4]).

Element ordering inside a weight vector is z-major: element ``iz*ny + iy``
sits at centered indices ``(iy - (ny-1)/2, iz - (nz-1)/2)`` so the phase
reference is the array center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

SQRT2 = math.sqrt(2.0)
N_UPAS = 4
# Closed sector boundaries are tested with this slack to absorb rounding.
_SECTOR_TOL = 1e-12
# Dirichlet kernel: below this |sin(pi x / 2)| the removable singularity is taken by limit.
_KERNEL_GUARD = 1e-9


def wrap_angle(x):
    """Map angles into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    y = np.where(y <= -np.pi, y + 2 * np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def boresight(k: int) -> float:
    return (k - 1) * np.pi / 2


@dataclass(frozen=True)
class Direction:
    azimuth: float
    elevation: float

    def __post_init__(self):
        el = float(self.elevation)
        if not (-1e-12 <= el <= np.pi + 1e-12):
            raise ValueError(f"elevation {el} outside [0, pi]")
        object.__setattr__(self, "elevation", min(max(el, 0.0), np.pi))
        object.__setattr__(self, "azimuth", wrap_angle(float(self.azimuth)))

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.elevation)
        return np.array([st * math.cos(self.azimuth), st * math.sin(self.azimuth), math.cos(self.elevation)])

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        if r == 0:
            raise ValueError("zero vector has no direction")
        return cls(math.atan2(v[1], v[0]), math.acos(max(-1.0, min(1.0, v[2] / r))))

    def antipode(self) -> "Direction":
        return Direction(self.azimuth + np.pi, np.pi - self.elevation)


@dataclass(frozen=True)
class SectorRange:
    upa: int
    azimuth: tuple[float, float]
    elevation: tuple[float, float]

    @classmethod
    def of(cls, k: int) -> "SectorRange":
        c = boresight(k)
        return cls(k, (c - np.pi / 4, c + np.pi / 4), (np.pi / 4, 3 * np.pi / 4))


@dataclass(frozen=True)
class UpaConfig:
    ny: int = 16
    nz: int = 16
    index: int = 1

    def __post_init__(self):
        if self.ny < 1 or self.nz < 1:
            raise ValueError("UPA needs at least one element per axis")
        if self.index not in (1, 2, 3, 4):
            raise ValueError(f"UPA index must be 1..4, got {self.index}")

    @property
    def n_a(self) -> int:
        return self.ny * self.nz

    def for_upa(self, k: int) -> "UpaConfig":
        return replace(self, index=k)


@dataclass(frozen=True, eq=False)
class Beamformer:
    """Complex weights for one UPA (precoder or decoder)."""

    weights: np.ndarray
    cfg: UpaConfig = field(default_factory=UpaConfig)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        if w.shape != (self.cfg.n_a,):
            raise ValueError(f"expected {self.cfg.n_a} weights, got shape {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def upa(self) -> int:
        return self.cfg.index

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))


@dataclass(frozen=True)
class SquintConfig:
    carrier_hz: float
    bandwidth_hz: float

    def __post_init__(self):
        if not 0 < self.bandwidth_hz < self.carrier_hz:
            raise ValueError("need 0 < bandwidth < carrier")


# ---------------------------------------------------------------- coordinates


def vh_transform(direction: Direction, k: int = 1) -> tuple[float, float]:
    """(V, H) = (cos(theta), sin(theta) sin(phi - boresight_k))."""
    th = direction.elevation
    return math.cos(th), math.sin(th) * math.sin(direction.azimuth - boresight(k))


def vh_inverse(v: float, h: float, k: int = 1) -> Direction:
    """Inverse of :func:`vh_transform` onto the front hemisphere of UPA ``k``."""
    th = math.acos(max(-1.0, min(1.0, v)))
    st = math.sin(th)
    s = 0.0 if st == 0 else max(-1.0, min(1.0, h / st))
    return Direction(math.asin(s) + boresight(k), th)


def grid_transform(k: int, direction: Direction) -> tuple[float, float]:
    """Global grid coordinates (Phi, Theta); Phi carries the sqrt(2)(k-1) sector offset."""
    phi = math.sin(direction.azimuth - boresight(k)) + SQRT2 * (k - 1)
    return phi, -math.cos(direction.elevation)


# ------------------------------------------------------------------- sectors


def in_sector(k: int, azimuth, elevation):
    """Closed-interval membership in Omega_k; vectorized."""
    rel = np.abs(wrap_angle(np.asarray(azimuth, dtype=float) - boresight(k)))
    el = np.asarray(elevation, dtype=float)
    ok = (rel <= np.pi / 4 + _SECTOR_TOL) & (el >= np.pi / 4 - _SECTOR_TOL) & (el <= 3 * np.pi / 4 + _SECTOR_TOL)
    return bool(ok) if ok.ndim == 0 else ok


def radiation_pattern(k: int, direction: Direction) -> int:
    """Ideal element power pattern F_k: 1 inside Omega_k, 0 outside."""
    return int(in_sector(k, direction.azimuth, direction.elevation))


def sector_of(direction: Direction) -> int | None:
    """The UPA serving ``direction``; shared boundaries go to the lower index."""
    for k in range(1, N_UPAS + 1):
        if in_sector(k, direction.azimuth, direction.elevation):
            return k
    return None


def element_gain(cfg: UpaConfig) -> float:
    """Closed-form antenna gain 4*sqrt(2)*N_a of the ideal sector pattern."""
    return 4 * SQRT2 * cfg.n_a


def element_gain_quadrature(cfg: UpaConfig, n_az: int = 2880, n_el: int = 1440) -> float:
    """Antenna gain by midpoint-rule integration of the pattern over the sphere."""
    az = (np.arange(n_az) + 0.5) * (2 * np.pi / n_az)
    el = (np.arange(n_el) + 0.5) * (np.pi / n_el)
    F = in_sector(cfg.index, az[None, :], el[:, None]).astype(float)
    integral = np.sum(F * np.sin(el)[:, None]) * (2 * np.pi / n_az) * (np.pi / n_el)
    return 4 * np.pi * cfg.n_a / integral


def to_db(x, power: bool = True):
    with np.errstate(divide="ignore"):
        return (10 if power else 20) * np.log10(x)


# ----------------------------------------------------------- array responses


def _element_indices(n: int) -> np.ndarray:
    return np.arange(n) - (n - 1) / 2


def steering_vh(ny: int, nz: int, v, h) -> np.ndarray:
    """Unit-norm responses for (V, H) coordinates; output shape ``v.shape + (ny*nz,)``."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    ez = np.exp(1j * np.pi * v[..., None] * _element_indices(nz))
    ey = np.exp(1j * np.pi * h[..., None] * _element_indices(ny))
    out = ez[..., :, None] * ey[..., None, :]
    return out.reshape(v.shape + (ny * nz,)) / math.sqrt(ny * nz)


def steering(cfg: UpaConfig, azimuth, elevation) -> np.ndarray:
    """Vectorized array response of UPA ``cfg.index`` toward (azimuth, elevation)."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    v = np.cos(el)
    h = np.sin(el) * np.sin(az - boresight(cfg.index))
    return steering_vh(cfg.ny, cfg.nz, v, h)


def array_response(cfg: UpaConfig, direction: Direction) -> Beamformer:
    return Beamformer(steering(cfg, direction.azimuth, direction.elevation), cfg)


def beam_gain(w: Beamformer, direction: Direction) -> float:
    """Normalized beam gain |a_k(dir)^H w| (amplitude)."""
    a = steering(w.cfg, direction.azimuth, direction.elevation)
    return float(abs(np.vdot(a, w.weights)))


def beam_gains(w: Beamformer, azimuth, elevation) -> np.ndarray:
    """|a_k^H w| over arrays of directions."""
    a = steering(w.cfg, azimuth, elevation)
    return np.abs(a.conj() @ w.weights)


def dirichlet(n: int, x):
    """|sin(n pi x / 2) / sin(pi x / 2)|, equal to n at the removable singularities."""
    x = np.asarray(x, dtype=float)
    den = np.sin(np.pi * x / 2)
    small = np.abs(den) < _KERNEL_GUARD
    safe = np.where(small, 1.0, den)
    out = np.where(small, float(n), np.abs(np.sin(n * np.pi * x / 2) / safe))
    return float(out) if out.ndim == 0 else out


def separable_gain(cfg: UpaConfig, v, h, v_t, h_t):
    """Closed-form gain (1/N_a) f_z(v - v_t) f_y(h - h_t) of a response vector."""
    v_d = np.asarray(v, dtype=float) - np.asarray(v_t, dtype=float)
    h_d = np.asarray(h, dtype=float) - np.asarray(h_t, dtype=float)
    return dirichlet(cfg.nz, v_d) * dirichlet(cfg.ny, h_d) / cfg.n_a


# ---------------------------------------------------------------- squint


def wideband_gain(s: SquintConfig, n_a: int, phi):
    """Normalized wideband beam gain A_f at deflection ``phi``."""
    root = math.isqrt(n_a)
    if root * root != n_a:
        raise ValueError(f"n_a={n_a} is not a perfect square")
    x = np.pi * s.bandwidth_hz / (4 * s.carrier_hz) * np.sin(np.asarray(phi, dtype=float))
    return dirichlet(root, 2 * x / np.pi) / root


def squint_reduction(s: SquintConfig, n_a: int) -> float:
    """Fraction of the worst-case squint loss removed by a +-pi/4 deflection limit."""
    a_edge = wideband_gain(s, n_a, np.pi / 4)
    a_full = wideband_gain(s, n_a, np.pi / 2)
    return float((a_edge - a_full) / (1 - a_full))


# ----------------------------------------------------------- pattern export


def pattern_rows(beams, azimuths, elevations, element_pattern: bool = False):
    """Yield (upa, azimuth, elevation, gain) rows, elevation-major over the mesh."""
    az = np.asarray(azimuths, dtype=float)
    el = np.asarray(elevations, dtype=float)
    AZ, EL = np.meshgrid(az, el)
    for b in beams:
        g = beam_gains(b, AZ, EL)
        if element_pattern:
            g = g * in_sector(b.upa, AZ, EL)
        for (i, j), val in np.ndenumerate(g):
            yield b.upa, float(AZ[i, j]), float(EL[i, j]), float(val)
