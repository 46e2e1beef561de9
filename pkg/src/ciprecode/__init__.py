"""Constructive-interference symbol-level precoding for MU-MISO downlinks
serving more streams than transmit antennas."""

from .baselines import OracleResult, min_norm_ci, rzf_precode, solve_p1_oracle
from .channel import NoiseSpec, add_noise, load_channel, sample_channel, save_channel
from .constellation import bit_errors, detect, modulate, threshold_angle
from .errors import (
    CiPrecodeError,
    ConfigError,
    DegenerateDual,
    DegeneratePowerForm,
    Infeasible,
    NonConvergence,
    NoNullSpace,
)
from .precoder import NullSpaceBundle, PrecodeSolution, build_bundle, precode
from .simplex_qp import QpProblem, QpSolution, kkt_residual, solve

__version__ = "0.1.0"

__all__ = [
    "OracleResult", "min_norm_ci", "rzf_precode", "solve_p1_oracle",
    "NoiseSpec", "add_noise", "load_channel", "sample_channel", "save_channel",
    "bit_errors", "detect", "modulate", "threshold_angle",
    "CiPrecodeError", "ConfigError", "DegenerateDual", "DegeneratePowerForm",
    "Infeasible", "NonConvergence", "NoNullSpace",
    "NullSpaceBundle", "PrecodeSolution", "build_bundle", "precode",
    "QpProblem", "QpSolution", "kkt_residual", "solve",
]
