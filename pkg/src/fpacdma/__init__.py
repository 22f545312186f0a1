"""DS/CDMA uplink simulation with a flower pollination multiuser detector."""

from .baselines import (
    DetectorKind,
    GaConfig,
    decorrelator_detect,
    ga_detect,
    matched_filter_detect,
    ml_exhaustive,
    mmse_detect,
)
from .channel import ChannelParams, ChannelState, FrameObservation, simulate_frame
from .errors import ConfigurationError, DetectorUnavailable, NonFiniteFitness
from .fpa import DetectionResult, FpaConfig, fpa_detect, fpa_detect_frame
from .spreading import CodeBook, correlation_matrix, generate_gold_family

__all__ = [
    "ChannelParams",
    "ChannelState",
    "CodeBook",
    "ConfigurationError",
    "DetectionResult",
    "DetectorKind",
    "DetectorUnavailable",
    "FpaConfig",
    "FrameObservation",
    "GaConfig",
    "NonFiniteFitness",
    "correlation_matrix",
    "decorrelator_detect",
    "fpa_detect",
    "fpa_detect_frame",
    "ga_detect",
    "generate_gold_family",
    "matched_filter_detect",
    "ml_exhaustive",
    "mmse_detect",
    "simulate_frame",
]
