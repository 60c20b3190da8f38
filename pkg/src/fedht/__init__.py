"""Deterministic FedAVG simulator with sparsifying, error-feedback compression."""

from .compressors import (
    CompressorKind,
    SparseUpdate,
    compress_hard_threshold,
    compress_topk,
    compression_ratio,
    decompress,
    encoded_size_bytes,
    quantize_ternary,
)
from .config import ExperimentConfig, load_config, parse_config
from .error_feedback import ErrorBuffer, compress_with_ef
from .federation import DivergenceError, Simulation, run_experiment
from .kernels import BACKEND
from .schedules import (
    StepsizeSchedule,
    ThresholdSchedule,
    calibrate_lambda0,
    lambda_from_topk,
    shape_factor,
    stepsize_at,
    threshold_at,
)

__version__ = "0.1.0"
