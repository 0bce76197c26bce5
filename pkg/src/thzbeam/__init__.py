"""Hierarchical beam training and tracking for quadruple-UPA terahertz links."""

from .channel import ChannelRealization, Link, LinkBudget, PathComponent, los_channel, measure
from .codebook import (HierarchicalCodebook, QupaCodebook, build_codebook, build_qupa_codebook, coverage_set,
                       eta_worst, load_codebook, save_codebook, target_matrix)
from .config import ExperimentConfig, ScenarioConfig, default_scenario, reference_scenario
from .geometry import Beamformer, Direction, UpaConfig, beam_gain, element_gain, separable_gain, squint_reduction
from .mobility import MobileChannel, Trajectory, TrajectoryConfig, generate_trajectory
from .tracking import ProcedureConfig, ProcedureResult, Tracker, run_procedure
from .training import TrainingResult, alignment_rate, exhaustive_train, gb_train

__version__ = "0.1.0"
