"""Scenario and experiment configuration with YAML/JSON round-tripping.

A scenario file holds the physical link parameters plus the protocol knobs. Two
derived fields (``noise_dbm`` and ``antenna_gain_db``) are written for readability;
on load they are checked against the primary fields and then dropped.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .channel import LinkBudget
from .codebook import DEFAULT_RIDGE
from .geometry import UpaConfig, element_gain
from .mobility import KMH, TrajectoryConfig

SCHEMA_VERSION = 1
DERIVED_FIELDS = ("noise_dbm", "antenna_gain_db")
EXPERIMENTS = ("patterns", "snr_vs_n", "worstcase_vs_tests", "align_vs_snr", "tracking_trace")
VARIANTS = ("proposed", "strict-benchmark", "uniform-real", "uniform-virtual", "exhaustive")


@dataclass(frozen=True)
class ScenarioConfig:
    carrier_hz: float = 0.26e12
    bandwidth_hz: float = 20e9
    distance_m: float = 100.0
    noise_psd_dbm_per_hz: float = -174.0
    propagation_loss_db: float = 124.6
    tx_power_dbm: float = 25.0
    ny: int = 16
    nz: int = 16
    n: int = 16  # narrow beams per axis
    buffer_width: int = 1
    buffer_gain: float = 0.5
    ridge: float = DEFAULT_RIDGE
    symbols_per_test: int = 1
    test_duration_s: float = 1e-3
    block_s: float = 10e-3
    horizon_s: float = 30.0
    max_speed_kmh: float = 100.0
    mean_segment_s: float = 3.0
    nlos_paths: int = 0
    nlos_level_db: float = -15.0

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 2, got {self.n}")
        if self.symbols_per_test < 1:
            raise ValueError("symbols_per_test must be >= 1")
        if not 0 <= self.buffer_gain <= 1:
            raise ValueError("buffer_gain must lie in [0, 1]")
        if self.buffer_width < 0 or self.nlos_paths < 0:
            raise ValueError("buffer_width and nlos_paths must be non-negative")
        if self.ridge <= 0:
            raise ValueError("ridge must be positive")
        LinkBudget(**self._budget_fields())  # validates the physical fields

    def _budget_fields(self) -> dict:
        return dict(carrier_hz=self.carrier_hz, bandwidth_hz=self.bandwidth_hz, tx_power_dbm=self.tx_power_dbm,
                    noise_psd_dbm_per_hz=self.noise_psd_dbm_per_hz, propagation_loss_db=self.propagation_loss_db,
                    distance_m=self.distance_m)

    @property
    def budget(self) -> LinkBudget:
        return LinkBudget(**self._budget_fields())

    @property
    def upa(self) -> UpaConfig:
        return UpaConfig(self.ny, self.nz)

    @property
    def noise_dbm(self) -> float:
        return self.budget.noise_dbm

    @property
    def antenna_gain_db(self) -> float:
        return 10 * math.log10(element_gain(self.upa))

    def trajectory(self, seed: int) -> TrajectoryConfig:
        return TrajectoryConfig(start=(self.distance_m, 0.0, 0.0), max_speed=self.max_speed_kmh * KMH,
                                mean_segment_s=self.mean_segment_s, horizon_s=self.horizon_s,
                                timestep_s=self.test_duration_s, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise_dbm"] = round(self.noise_dbm, 6)
        d["antenna_gain_db"] = round(self.antenna_gain_db, 6)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        derived = {k: d.pop(k) for k in DERIVED_FIELDS if k in d}
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        cfg = cls(**d)
        for k, v in derived.items():
            if abs(float(v) - getattr(cfg, k)) > 0.05:
                raise ValueError(f"{k}={v} is inconsistent with the primary fields ({getattr(cfg, k):.3f})")
        return cfg


def reference_scenario() -> ScenarioConfig:
    """Reference operating point: default link budget with N = 32 and B * t_test symbols per test."""
    base = ScenarioConfig()
    return replace(base, n=32, symbols_per_test=int(round(base.bandwidth_hz * base.test_duration_s)))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "snr_vs_n"
    n_values: tuple[int, ...] = (4, 8, 16)
    variants: tuple[str, ...] = ("proposed", "uniform-virtual", "uniform-real")
    snr_db: tuple[float, ...] = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0)
    test_counts: tuple[int, ...] = (10, 100, 1000, 10000)
    pattern_stages: tuple[int, ...] = (0, 1, 2, 3)
    pattern_step_deg: float = 1.0
    trials: int = 500
    seeds: int = 1
    seed: int = 0
    out: str = "results"
    codebook_dir: str | None = None
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.trials < 1 or self.seeds < 1:
            raise ValueError("trials and seeds must be >= 1")
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        for n in self.n_values:
            if n < 2 or n & (n - 1):
                raise ValueError(f"N must be a power of two >= 2, got {n}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "scenario"}
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        d["scenario"] = self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        scen = ScenarioConfig.from_dict(d.pop("scenario", {}))
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(scenario=scen, **d)


# ------------------------------------------------------------------ files


def _dump(data: dict, path: Path) -> None:
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=True))


def load_mapping(path) -> dict:
    text = Path(path).read_text()
    data = json.loads(text) if Path(path).suffix == ".json" else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: schema_version {version} is not supported")
    return data


def save_scenario(path, cfg: ScenarioConfig) -> Path:
    path = Path(path)
    _dump({"schema_version": SCHEMA_VERSION, **cfg.to_dict()}, path)
    return path


def load_scenario(path) -> ScenarioConfig:
    return ScenarioConfig.from_dict(load_mapping(path))


def default_scenario(path=None, reference: bool = False) -> dict:
    """Emit the default (or reference) scenario; returns the emitted mapping."""
    cfg = reference_scenario() if reference else ScenarioConfig()
    if path is not None:
        save_scenario(path, cfg)
    return {"schema_version": SCHEMA_VERSION, **cfg.to_dict()}


def save_experiment(path, cfg: ExperimentConfig) -> Path:
    path = Path(path)
    _dump({"schema_version": SCHEMA_VERSION, **cfg.to_dict()}, path)
    return path


def load_experiment(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_mapping(path))


def warn_if_heavy(cfg: ScenarioConfig) -> None:
    if cfg.n >= 32:
        warnings.warn(f"N = {cfg.n} codebooks take noticeably longer to synthesize and track", RuntimeWarning, stacklevel=2)
