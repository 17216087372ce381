"""Multiple-testing detection of continuous breaks and jumps in piecewise linear signals."""

from .detect import (
    Detection,
    DetectionResult,
    bh_select,
    detect_mixture,
    detect_type1,
    detect_type2,
    estimate_slope_baseline,
)
from .evaluation import ScoringConfig, aggregate, asymptotic_fdr_limit, match_detections, score_replication
from .kernel import KernelSpec, convolve, sample_kernel
from .noise import SmoothingConfig, generate_noise, peak_distribution
from .signal import ChangePoint, ChangeType, PiecewiseLinearSignal, Segment, make_scenario, snr

__version__ = "0.1.0"

__all__ = [
    "ChangePoint",
    "ChangeType",
    "Detection",
    "DetectionResult",
    "KernelSpec",
    "PiecewiseLinearSignal",
    "ScoringConfig",
    "Segment",
    "SmoothingConfig",
    "aggregate",
    "asymptotic_fdr_limit",
    "bh_select",
    "convolve",
    "detect_mixture",
    "detect_type1",
    "detect_type2",
    "estimate_slope_baseline",
    "generate_noise",
    "make_scenario",
    "match_detections",
    "peak_distribution",
    "sample_kernel",
    "score_replication",
    "snr",
]
