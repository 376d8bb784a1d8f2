"""Audio inpainting under a low-rank Gaussian time-frequency model."""

__version__ = "0.1.0"

from .degradation import CompactGaps, RandomDrop, degrade, read_mask, write_mask
from .inpainter import NMFInpainter
from .estimators import (
    ALGORITHMS,
    EstimatorConfig,
    PosteriorFrame,
    RunTrace,
    am_signal_update,
    e_step_frame,
    neg_log_likelihood,
    posterior_power_tf,
    run_estimator,
    transport_posterior,
)
from .exceptions import (
    InfeasibleSpec,
    NumericalBreakdown,
    SymmetryViolation,
    UndefinedMetric,
    UnsupportedConfiguration,
)
from .framing import FrameSet, GapMask, frame_signal, make_sine_window, overlap_add
from .isnmf import NmfModel, init_model, is_divergence, multiplicative_update
from .metrics import SNR_CAP_DB, relative_change, snr
from .transforms import (
    TransformPair,
    apply_analysis,
    apply_synthesis,
    make_analysis_tight_pair,
    make_dft_pair,
    make_pinv_pair,
    projection_of_pair,
)

__all__ = [
    "ALGORITHMS", "CompactGaps", "EstimatorConfig", "FrameSet", "GapMask",
    "InfeasibleSpec", "NMFInpainter", "NmfModel", "NumericalBreakdown",
    "PosteriorFrame", "RandomDrop", "RunTrace", "SNR_CAP_DB", "SymmetryViolation",
    "TransformPair", "UndefinedMetric", "UnsupportedConfiguration",
    "am_signal_update", "apply_analysis", "apply_synthesis", "degrade",
    "e_step_frame", "frame_signal", "init_model", "is_divergence",
    "make_analysis_tight_pair", "make_dft_pair", "make_pinv_pair", "make_sine_window",
    "multiplicative_update", "neg_log_likelihood", "overlap_add", "posterior_power_tf",
    "projection_of_pair", "read_mask", "relative_change", "run_estimator", "snr",
    "transport_posterior", "write_mask",
]
