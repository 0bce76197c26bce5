"""Piecewise-linear trajectories for the mobile endpoint and pose-to-angle conversion.

Bob flies straight segments with exponentially distributed durations; each segment
draws a fresh direction and speed. Segments that would take Bob outside the covered
elevation band as seen from Alice, or outside the allowed range band, are redrawn.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import ChannelRealization, LinkBudget, PathComponent
from .geometry import Direction, UpaConfig

KMH = 1 / 3.6
# Redraw budget per segment before falling back to a direction aimed back at the start.
_MAX_REDRAWS = 200


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class TrajectoryConfig:
    start: tuple[float, float, float] = (100.0, 0.0, 0.0)
    max_speed: float = 100 * KMH
    mean_segment_s: float = 3.0
    horizon_s: float = 30.0
    timestep_s: float = 1e-3
    seed: int = 0
    yaw_rate: float = 0.0  # rad/s; 0 keeps Bob's frame fixed
    elevation_margin: float = 0.05  # rad kept clear of the sector elevation limits
    range_band: tuple[float, float] = (50.0, 1000.0)

    def __post_init__(self):
        if self.max_speed <= 0:
            raise ValueError("max_speed must be positive")
        if self.mean_segment_s <= 0 or self.horizon_s <= 0 or self.timestep_s <= 0:
            raise ValueError("durations must be positive")
        steps = self.horizon_s / self.timestep_s
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("horizon must be an integer number of timesteps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_s / self.timestep_s))


@dataclass(frozen=True)
class PoseSample:
    t: float
    position: tuple[float, float, float]
    yaw: float = 0.0

    @property
    def orientation(self) -> np.ndarray:
        return yaw_matrix(self.yaw)


def _allowed(p: np.ndarray, margin: float, band: tuple[float, float]) -> bool:
    r = float(np.linalg.norm(p))
    if not band[0] <= r <= band[1]:
        return False
    el = math.acos(max(-1.0, min(1.0, p[2] / r)))
    return np.pi / 4 + margin <= el <= 3 * np.pi / 4 - margin


def _segment_ok(p0, v, dur, cfg: TrajectoryConfig) -> bool:
    n = max(2, int(math.ceil(dur / 0.05)) + 1)
    return all(_allowed(p0 + v * t, cfg.elevation_margin, cfg.range_band) for t in np.linspace(0, dur, n))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Knots of a piecewise-linear path; poses between knots are linearly interpolated."""

    t: np.ndarray
    xyz: np.ndarray  # (K, 3)
    yaw: np.ndarray

    def pose(self, t: float) -> PoseSample:
        pos = tuple(float(np.interp(t, self.t, self.xyz[:, i])) for i in range(3))
        return PoseSample(float(t), pos, float(np.interp(t, self.t, self.yaw)))

    def position(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.t, self.xyz[:, i]) for i in range(3)])

    def samples(self, timestep: float, horizon: float | None = None) -> list[PoseSample]:
        horizon = float(self.t[-1]) if horizon is None else horizon
        n = int(round(horizon / timestep))
        return [self.pose(i * timestep) for i in range(n + 1)]

    def path_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.xyz, axis=0), axis=1)))

    @classmethod
    def from_samples(cls, samples: Sequence[PoseSample]) -> "Trajectory":
        return cls(np.array([s.t for s in samples]), np.array([s.position for s in samples], dtype=float),
                   np.array([s.yaw for s in samples]))

    @classmethod
    def generate(cls, cfg: TrajectoryConfig) -> "Trajectory":
        rng = np.random.default_rng(cfg.seed)
        p = np.asarray(cfg.start, dtype=float)
        knots_t, knots_p = [0.0], [p.copy()]
        t = 0.0
        while t < cfg.horizon_s:
            dur = min(rng.exponential(cfg.mean_segment_s), cfg.horizon_s - t)
            for _ in range(_MAX_REDRAWS):
                u = rng.standard_normal(3)
                u /= np.linalg.norm(u)
                speed = cfg.max_speed * (1.0 - rng.random())  # (0, max_speed]
                v = u * speed
                if _segment_ok(p, v, dur, cfg):
                    break
            else:
                home = np.asarray(cfg.start, dtype=float) - p
                dist = float(np.linalg.norm(home))
                v = np.zeros(3) if dist == 0 else home / dist * min(cfg.max_speed, dist / dur)
            p = p + v * dur
            t += dur
            knots_t.append(t)
            knots_p.append(p.copy())
        tt = np.array(knots_t)
        return cls(tt, np.array(knots_p), cfg.yaw_rate * tt)


def generate_trajectory(cfg: TrajectoryConfig) -> list[PoseSample]:
    return Trajectory.generate(cfg).samples(cfg.timestep_s, cfg.horizon_s)


def pose_to_angles(alice: PoseSample, bob: PoseSample) -> tuple[Direction, Direction]:
    """(departure at Alice, arrival at Bob), each expressed in that endpoint's own frame."""
    pa = np.asarray(alice.position, dtype=float)
    pb = np.asarray(bob.position, dtype=float)
    d = pb - pa
    if not np.linalg.norm(d) > 0:
        raise ValueError("Alice and Bob are at the same position")
    dep = Direction.from_vector(alice.orientation.T @ d)
    arr = Direction.from_vector(bob.orientation.T @ (-d))
    return dep, arr


# ------------------------------------------------------------------- channel


@dataclass(frozen=True, eq=False)
class MobileChannel:
    """Time-indexed LoS channel between a static Alice and a moving Bob, plus fixed NLoS paths."""

    trajectory: Trajectory
    budget: LinkBudget = field(default_factory=LinkBudget)
    cfg: UpaConfig = field(default_factory=UpaConfig)
    alice: PoseSample = PoseSample(0.0, (0.0, 0.0, 0.0))
    nlos: tuple[PathComponent, ...] = ()
    phase: float = 0.0
    loss_exponent: float | None = None  # None holds |alpha_L| at the fixed propagation loss

    def __call__(self, t: float) -> ChannelRealization:
        bob = self.trajectory.pose(t)
        dep, arr = pose_to_angles(self.alice, bob)
        dist = float(np.linalg.norm(np.subtract(bob.position, self.alice.position)))
        amp = self.budget.los_amplitude(dist, self.loss_exponent)
        los = PathComponent(dep, arr, amp * complex(math.cos(self.phase), math.sin(self.phase)), True)
        return ChannelRealization((los, *self.nlos), self.budget, self.cfg)


# ----------------------------------------------------------------------- CSV

CSV_FIELDS = ("t", "x", "y", "z", "yaw")


def write_trajectory_csv(path, samples: Sequence[PoseSample]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for s in samples:
            w.writerow([repr(float(s.t)), *(repr(float(x)) for x in s.position), repr(float(s.yaw))])
    return path


def read_trajectory_csv(path) -> list[PoseSample]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(CSV_FIELDS) - set(rows[0] if rows else CSV_FIELDS)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return [PoseSample(float(r["t"]), (float(r["x"]), float(r["y"]), float(r["z"])), float(r["yaw"])) for r in rows]
